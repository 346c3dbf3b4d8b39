"""Counter collection, efficiency computation, and stats CSV emission.

The CSV carries `#schema=maco-stats-v1` on its first line, then `#config`
lines echoing the effective run configuration as dotted key=value pairs,
then a header row and one data row per node plus a closing `all` row.
Output bytes are a pure function of the run, so identical seeds and
configs produce identical files.

Column order (fixed):
  node, precision, ways, tasks_ok, tasks_exc, flops, elapsed_ticks,
  elapsed_seconds, gflops, efficiency, mmae_busy_cycles,
  dma_stall_translation_ticks, dma_stall_memory_ticks, matlb_hits,
  matlb_demand_misses, matlb_drops, matlb_prewalks, ptw_count, tlb_hits,
  tlb_misses, l3_hits, l3_misses, l3_c2c, l3_mem_reads, l3_mem_writes,
  l3_stash_installs, l3_lock_denials, dma_bytes_read, dma_bytes_written,
  noc_out_bytes, noc_link_peak_util, cpu_kernel_ticks,
  cpu_poll_wait_ticks, cfg_fails

Per-node efficiency is measured FLOP rate over 2 x FMACs x SIMD ways x
engine frequency; the `all` row divides by that peak times the node count.
"""

import json

from .isa import PRECISIONS, simd_ways
from .queues import EXC_NONE

SCHEMA = "maco-stats-v1"

COLUMNS = [
    "node", "precision", "ways", "tasks_ok", "tasks_exc", "flops",
    "elapsed_ticks", "elapsed_seconds", "gflops", "efficiency",
    "mmae_busy_cycles", "dma_stall_translation_ticks",
    "dma_stall_memory_ticks", "matlb_hits", "matlb_demand_misses",
    "matlb_drops", "matlb_prewalks", "ptw_count", "tlb_hits", "tlb_misses",
    "l3_hits", "l3_misses", "l3_c2c", "l3_mem_reads", "l3_mem_writes",
    "l3_stash_installs", "l3_lock_denials", "dma_bytes_read",
    "dma_bytes_written", "noc_out_bytes", "noc_link_peak_util",
    "cpu_kernel_ticks", "cpu_poll_wait_ticks", "cfg_fails",
]

_CODES = {v[0]: k for k, v in PRECISIONS.items()}


def peak_flops(cfg, precision_name):
    """Modeled per-node peak: 2 x FMACs x ways x engine clock."""
    ways = simd_ways(_CODES[precision_name])
    return 2.0 * cfg.mmae_fmacs * ways * cfg.mmae_freq_hz


def completed_flops(mmae):
    return sum(r.flops for r in mmae.records if r.exc == EXC_NONE)


def collect(mach, precision_name):
    """Counter rows for a finished run: one dict per node, then 'all'."""
    cfg = mach.cfg
    engine = mach.engine
    elapsed = engine.now
    seconds = float(engine.to_seconds(elapsed))
    peak = peak_flops(cfg, precision_name)
    ways = simd_ways(_CODES[precision_name])
    peak_util = mach.noc.link_utilization_audit(elapsed)

    rows = []
    totals = dict.fromkeys(COLUMNS[3:], 0)
    for n, node in enumerate(mach.nodes):
        mmae = node.mmae
        core = node.core
        svc = node.svc
        hs = mach.homes[n].stats
        flops = completed_flops(mmae)
        out_bytes = sum(link.bytes
                        for (src, _), link in mach.noc.links.items()
                        if src == mach.noc.coord(n))
        gflops = flops / seconds / 1e9 if seconds else 0.0
        row = {
            "node": n,
            "precision": precision_name,
            "ways": ways,
            "tasks_ok": mmae.tasks_ok,
            "tasks_exc": mmae.tasks_exc,
            "flops": flops,
            "elapsed_ticks": elapsed,
            "elapsed_seconds": seconds,
            "gflops": gflops,
            "efficiency": flops / (seconds * peak) if seconds else 0.0,
            "mmae_busy_cycles": mmae.sa_busy_cycles,
            "dma_stall_translation_ticks": mmae.trans_stall_ticks,
            "dma_stall_memory_ticks": mmae.dma_wait_ticks,
            "matlb_hits": mmae.matlb_hits,
            "matlb_demand_misses": mmae.matlb_demand,
            "matlb_drops": mmae.matlb_drops,
            "matlb_prewalks": svc.walker.prewalks,
            "ptw_count": svc.walker.prewalks + svc.walker.demand_walks,
            "tlb_hits": svc.l1.hits + svc.l2.hits,
            "tlb_misses": svc.l2.misses,
            "l3_hits": hs.l3_hits,
            "l3_misses": hs.l3_misses,
            "l3_c2c": hs.c2c,
            "l3_mem_reads": hs.mem_reads,
            "l3_mem_writes": hs.mem_writes,
            "l3_stash_installs": hs.stash_installs,
            "l3_lock_denials": hs.lock_denials,
            "dma_bytes_read": mmae.bytes_read,
            "dma_bytes_written": mmae.bytes_written,
            "noc_out_bytes": out_bytes,
            "noc_link_peak_util": peak_util,
            "cpu_kernel_ticks": core.kernel_ticks,
            "cpu_poll_wait_ticks": core.poll_wait_ticks,
            "cfg_fails": core.cfg_fails,
        }
        rows.append(row)
        for key in totals:
            totals[key] += row[key]

    # home slices beyond the populated node count still serve traffic
    for s in range(len(mach.nodes), cfg.l3_slices):
        hs = mach.homes[s].stats
        totals["l3_hits"] += hs.l3_hits
        totals["l3_misses"] += hs.l3_misses
        totals["l3_c2c"] += hs.c2c
        totals["l3_mem_reads"] += hs.mem_reads
        totals["l3_mem_writes"] += hs.mem_writes
        totals["l3_stash_installs"] += hs.stash_installs
        totals["l3_lock_denials"] += hs.lock_denials

    nnodes = len(mach.nodes)
    total = dict(totals)
    total["node"] = "all"
    total["precision"] = precision_name
    total["ways"] = ways
    total["elapsed_ticks"] = elapsed
    total["elapsed_seconds"] = seconds
    total["gflops"] = total["flops"] / seconds / 1e9 if seconds else 0.0
    total["efficiency"] = (total["flops"] / (seconds * peak * nnodes)
                           if seconds else 0.0)
    total["noc_link_peak_util"] = peak_util
    rows.append(total)
    return rows


def flatten_config(cfg):
    """Effective config as sorted dotted keys with JSON values, so the
    echo lines parse back into the exact section/key/value mapping."""
    flat = []
    for section, values in sorted(cfg.to_dict().items()):
        for key, val in sorted(values.items()):
            flat.append(("%s.%s" % (section, key),
                         json.dumps(val, sort_keys=True)))
    return flat


def config_from_echo(lines):
    """Rebuild the config mapping from `#config` echo lines."""
    data = {}
    for line in lines:
        body = line[len("#config "):].strip()
        key, _, raw = body.partition("=")
        section, _, name = key.partition(".")
        try:
            val = json.loads(raw)
        except ValueError:
            val = raw
        data.setdefault(section, {})[name] = val
    return data


def _fmt(val):
    if isinstance(val, float):
        return "%.9g" % val
    return str(val)


def render_csv(rows, cfg=None):
    lines = ["#schema=%s" % SCHEMA]
    if cfg is not None:
        for key, val in flatten_config(cfg):
            lines.append("#config %s=%s" % (key, val))
    lines.append(",".join(COLUMNS))
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in COLUMNS))
    return "\n".join(lines) + "\n"


def emit_csv(path, rows, cfg=None):
    text = render_csv(rows, cfg)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path


def read_csv(path):
    """Parse a stats file back into (schema, config mapping, row dicts)."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("#schema="):
        raise ValueError("missing schema line")
    schema = lines[0].split("=", 1)[1]
    cfg_lines = [l for l in lines if l.startswith("#config ")]
    body = [l for l in lines if not l.startswith("#")]
    header = body[0].split(",")
    rows = []
    for line in body[1:]:
        vals = line.split(",")
        row = {}
        for key, raw in zip(header, vals):
            if key in ("node", "precision"):
                row[key] = raw
            elif "." in raw or "e" in raw or raw in ("inf", "nan"):
                row[key] = float(raw)
            else:
                row[key] = int(raw)
        rows.append(row)
    return schema, config_from_echo(cfg_lines), rows


def audit(mach):
    """Post-run conservation checks; raises AssertionError on violation."""
    noc = mach.noc
    assert noc.bytes_injected == noc.bytes_delivered, "NOC not drained"
    for hs in (h.stats for h in mach.homes):
        assert hs.l3_hits >= 0 and hs.l3_misses >= 0
    util = noc.link_utilization_audit(mach.elapsed_ticks)
    assert util <= 1.0 + 1e-9, "link over capacity: %f" % util
    return util
