"""Experiment driver: turns a validated config into a machine, places the
workload, runs the schedules, checks results, and emits the stats CSV.

Also ships the canned measurement sets (peak rate under ideal memory,
stream-prediction gap sweep, node scalability, 16-node throughput, and the
DL layer suite) plus the sweep runner used by the command line.
"""

import dataclasses
import itertools
import json
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import stats
from .config import (ConfigError, ExperimentConfig, apply_overrides,
                     from_dict, load_file, validate)
from .isa import FP16, FP32, FP64, GemmParams, element_size, precision_code
from .machine import Machine
from .tiling import TileTask, build_schedule, candidates, lower_dl_layer, \
    plan_tiles

DTYPES = {FP64: np.float64, FP32: np.float32, FP16: np.float16}


class FunctionalMismatch(Exception):
    pass


class RunResult:
    def __init__(self, machine, rows, csv_path, checked):
        self.machine = machine
        self.rows = rows
        self.csv_path = csv_path
        self.checked = checked

    @property
    def total(self):
        return self.rows[-1]


def _rand(rng, shape, dt, scale):
    return ((rng.random(shape) - 0.5) * scale).astype(dt)


def _oracle(a, b, c0=None):
    c = np.zeros((a.shape[0], b.shape[1]), dtype=a.dtype) \
        if c0 is None else c0.copy()
    for kx in range(a.shape[1]):
        c += a[:, kx, None] * b[kx, :]
    return c


class _Check:
    """Deferred output comparison for one tile."""

    __slots__ = ("label", "va_c", "a", "b", "c0")

    def __init__(self, label, va_c, a, b, c0):
        self.label = label
        self.va_c = va_c
        self.a = a
        self.b = b
        self.c0 = c0

    def verify(self, mach, asid, dt):
        rows, cols = self.a.shape[0], self.b.shape[1]
        raw = mach.read_virtual(asid, self.va_c,
                                rows * cols * dt().itemsize)
        got = np.frombuffer(raw, dtype=dt).reshape(rows, cols)
        want = _oracle(self.a, self.b, self.c0)
        if not np.array_equal(got, want):
            bad = int(np.count_nonzero(got != want))
            raise FunctionalMismatch(
                "%s: %d of %d elements differ" % (self.label, bad,
                                                  rows * cols))


def _gemm_dims(wl):
    if wl.kind == "dl_layer":
        return lower_dl_layer(wl.layer)
    return wl.m, wl.n, wl.k


def _task_for(wl, params, va_c, rows, cols, es, label):
    stash = []
    if wl.stash:
        stash = [(params.a_vaddr, params.m * params.k * es),
                 (params.b_vaddr, params.k * params.n * es)]
    lock = [(va_c, rows * cols * es)] if wl.lock else []
    post = wl.post_kernel_flops_per_element * rows * cols
    return TileTask(params, stash_regions=stash, lock_regions=lock,
                    post_flops=post, label=label)


def _place_per_node(mach, wl, code, dt, es, rng, m, n, k, tr, tc, ttr, ttc):
    """Independent GEMM per node, inputs contiguous in its own region."""
    tasks = {nd: [] for nd in range(mach.cfg.nodes)}
    checks = []
    for nd in range(mach.cfg.nodes):
        a = _rand(rng, (m, k), dt, wl.value_scale)
        b = _rand(rng, (k, n), dt, wl.value_scale)
        c0 = _rand(rng, (m, n), dt, wl.value_scale) if wl.accumulate \
            else None
        va_a = mach.alloc_region(0, m * k * es)
        va_b = mach.alloc_region(0, k * n * es)
        va_c = mach.alloc_region(0, m * n * es)
        mach.write_virtual(0, va_a, a.tobytes())
        mach.write_virtual(0, va_b, b.tobytes())
        if c0 is not None:
            mach.write_virtual(0, va_c, c0.tobytes())
        params = GemmParams(a_vaddr=va_a, b_vaddr=va_b, c_vaddr=va_c,
                            m=m, n=n, k=k, precision=code,
                            accumulate=wl.accumulate, tr=tr, tc=tc,
                            ttr=ttr, ttc=ttc)
        label = "n%d" % nd
        tasks[nd].append(_task_for(wl, params, va_c, m, n, es, label))
        checks.append((nd, _Check(label, va_c, a, b, c0)))
    return tasks, checks


def _place_shared(mach, wl, code, dt, es, rng, m, n, k, tr, tc, ttr, ttc):
    """One GEMM tiled over the nodes.

    A is stored row-major (row blocks are naturally contiguous); B and C
    are laid out as packed per-tile blocks so every task sees contiguous
    operands.  The K reduction stays whole, so results match the
    single-node order bit for bit.
    """
    a = _rand(rng, (m, k), dt, wl.value_scale)
    b = _rand(rng, (k, n), dt, wl.value_scale)
    c_full = _rand(rng, (m, n), dt, wl.value_scale) if wl.accumulate \
        else None
    va_a = mach.alloc_region(0, m * k * es)
    mach.write_virtual(0, va_a, a.tobytes())

    plan = plan_tiles(m, n, k, tr, tc, mach.cfg.nodes)
    col_blocks = {}
    for j0 in range(0, n, tc):
        cols = min(tc, n - j0)
        va = mach.alloc_region(0, k * cols * es)
        mach.write_virtual(
            0, va, np.ascontiguousarray(b[:, j0:j0 + cols]).tobytes())
        col_blocks[j0] = (va, cols)

    tasks = {nd: [] for nd in range(mach.cfg.nodes)}
    checks = []
    for tile in plan.tiles:
        va_b, cols = col_blocks[tile.col0]
        va_c = mach.alloc_region(0, tile.rows * cols * es)
        c0 = None
        if c_full is not None:
            c0 = np.ascontiguousarray(
                c_full[tile.row0:tile.row0 + tile.rows,
                       tile.col0:tile.col0 + cols])
            mach.write_virtual(0, va_c, c0.tobytes())
        params = GemmParams(
            a_vaddr=va_a + tile.row0 * k * es, b_vaddr=va_b, c_vaddr=va_c,
            m=tile.rows, n=cols, k=k, precision=code,
            accumulate=wl.accumulate, tr=tile.rows, tc=cols,
            ttr=min(ttr, tile.rows), ttc=min(ttc, cols))
        label = "tile%d" % tile.index
        checks.append((tile.node, _Check(
            label, va_c, a[tile.row0:tile.row0 + tile.rows, :],
            b[:, tile.col0:tile.col0 + cols], c0)))
        tasks[tile.node].append(
            _task_for(wl, params, va_c, tile.rows, cols, es, label))
    return tasks, checks


def time_single_tile(mcfg, m, n, k, code, ttr, ttc, seed=1):
    """Elapsed ticks for one tile-sized task on an isolated node; used by
    the sub-tile autotuner."""
    cfg = dataclasses.replace(mcfg, nodes=1)
    mach = Machine(cfg, seed=seed)
    dt = DTYPES[code]
    es = element_size(code)
    rng = np.random.default_rng(seed)
    a = _rand(rng, (m, k), dt, 1.0)
    b = _rand(rng, (k, n), dt, 1.0)
    va_a = mach.alloc_region(0, m * k * es)
    va_b = mach.alloc_region(0, k * n * es)
    va_c = mach.alloc_region(0, m * n * es)
    mach.write_virtual(0, va_a, a.tobytes())
    mach.write_virtual(0, va_b, b.tobytes())
    params = GemmParams(a_vaddr=va_a, b_vaddr=va_b, c_vaddr=va_c,
                        m=m, n=n, k=k, precision=code, accumulate=False,
                        tr=m, tc=n, ttr=ttr, ttc=ttc)
    mach.run_schedules({0: build_schedule([TileTask(params, label="trial")],
                                          lookahead=0)})
    return mach.elapsed_ticks


def _pick_subtiles(cfg, wl, m, n, k, tr, tc, code):
    if not wl.autotune:
        return min(wl.ttr, tr), min(wl.ttc, tc)
    from .tiling import autotune
    pairs = candidates(tr, tc, k, code, cfg.machine.mmae_buffer_kb * 1024,
                       cfg.machine.kk_max)
    return autotune(cfg.machine, tr, tc, k, code, pairs,
                    seed=cfg.run.seed)


def run_config(cfg, out_path=None):
    """Execute one validated config end to end; returns a RunResult."""
    validate(cfg)
    wl = cfg.workload
    m, n, k = _gemm_dims(wl)
    code = precision_code(wl.precision)
    dt = DTYPES[code]
    es = element_size(code)
    tr, tc = min(wl.tr, m), min(wl.tc, n)
    ttr, ttc = _pick_subtiles(cfg, wl, m, n, k, tr, tc, code)

    mach = Machine(cfg.machine, cfg.run.seed)
    rng = np.random.default_rng(cfg.run.seed)
    place = _place_per_node if wl.per_node else _place_shared
    tasks, checks = place(mach, wl, code, dt, es, rng, m, n, k, tr, tc,
                          ttr, ttc)

    schedules = {nd: build_schedule(ts, lookahead=1)
                 for nd, ts in tasks.items() if ts}
    limit = cfg.run.max_steps or None
    mach.run_schedules(schedules, limit_ticks=limit)

    faulted = sum(nd.mmae.tasks_exc for nd in mach.nodes)
    if faulted:
        raise RuntimeError("%d tasks faulted" % faulted)
    if cfg.run.functional_check:
        for _, check in checks:
            check.verify(mach, 0, dt)

    stats.audit(mach)
    rows = stats.collect(mach, wl.precision)
    csv_path = None
    target = out_path or cfg.run.out
    if target:
        os.makedirs(os.path.dirname(target) or ".", exist_ok=True)
        csv_path = stats.emit_csv(target, rows, cfg)
    return RunResult(mach, rows, csv_path, len(checks))


# -- canned experiment sets -------------------------------------------------

_FIG7_GRIDS = {1: (1024, 1024), 2: (1024, 512), 4: (512, 512),
               8: (256, 512), 16: (256, 256)}


def _cfg(machine=None, workload=None, run=None):
    data = {}
    if machine:
        data["machine"] = machine
    if workload:
        data["workload"] = workload
    if run:
        data["run"] = run
    return from_dict(data)


def _exp_peak_ideal():
    out = []
    for prec in ("fp64", "fp32", "fp16"):
        out.append(("peak_%s" % prec, _cfg(
            machine={"nodes": 1, "ideal_memory": True},
            workload={"m": 1024, "n": 1024, "k": 1024, "precision": prec,
                      "tr": 1024, "tc": 1024, "ttr": 64, "ttc": 64,
                      "stash": False},
            run={"functional_check": False})))
    return out


def _exp_fig6_matlb():
    out = []
    for size in (256, 512, 1024):
        for matlb in (True, False):
            label = "fig6_s%d_matlb_%s" % (size, "on" if matlb else "off")
            out.append((label, _cfg(
                machine={"nodes": 1, "matlb_enabled": matlb},
                workload={"m": size, "n": size, "k": size,
                          "precision": "fp64", "tr": 1024, "tc": 1024,
                          "ttr": 64, "ttc": 64, "stash": False},
                run={"functional_check": False})))
    return out


def _exp_fig7_scalability():
    out = []
    for nodes, (tr, tc) in sorted(_FIG7_GRIDS.items()):
        out.append(("fig7_n%d" % nodes, _cfg(
            machine={"nodes": nodes},
            workload={"m": 1024, "n": 1024, "k": 1024, "precision": "fp64",
                      "tr": tr, "tc": tc, "ttr": 64, "ttc": 64,
                      "per_node": False, "stash": False},
            run={"functional_check": False})))
    return out


def _exp_throughput_16node():
    return [("throughput_16node", _cfg(
        machine={"nodes": 16},
        workload={"m": 4096, "n": 4096, "k": 1024, "precision": "fp32",
                  "tr": 1024, "tc": 1024, "ttr": 64, "ttc": 64,
                  "per_node": False, "stash": False},
        run={"functional_check": False}))]


def _config_dir():
    return os.path.join(os.path.dirname(__file__), "configs")


def _exp_dl_layers():
    out = []
    cfg_dir = _config_dir()
    for name in sorted(os.listdir(cfg_dir)):
        if not name.startswith("dl_") or not name.endswith(".yaml"):
            continue
        out.append((name[:-len(".yaml")],
                    load_file(os.path.join(cfg_dir, name))))
    return out


EXPERIMENTS = {
    "peak_ideal": (_exp_peak_ideal,
                   "ideal-memory 1024^3 GEMM at each precision"),
    "fig6_matlb": (_exp_fig6_matlb,
                   "single node, sizes 256/512/1024, stream prediction "
                   "on vs off"),
    "fig7_scalability": (_exp_fig7_scalability,
                         "one 1024^3 GEMM shared across 1/2/4/8/16 nodes"),
    "throughput_16node": (_exp_throughput_16node,
                          "16-node shared 4096x4096x1024 FP32 run"),
    "dl_layers": (_exp_dl_layers,
                  "DL layer suite from the packaged config files"),
}


def list_experiments():
    return [(name, desc) for name, (_, desc) in sorted(EXPERIMENTS.items())]


def build_experiment(name):
    try:
        builder, _ = EXPERIMENTS[name]
    except KeyError:
        raise ConfigError("unknown experiment %r" % name) from None
    return builder()


def run_experiment(name, out_dir, seed=None, overrides=()):
    """Run every config of a canned set; returns the manifest list."""
    runs = build_experiment(name)
    os.makedirs(out_dir, exist_ok=True)
    manifest = []
    for label, cfg in runs:
        if seed is not None:
            cfg.run.seed = seed
        if overrides:
            apply_overrides(cfg, overrides)
            validate(cfg)
        path = os.path.join(out_dir, label + ".csv")
        entry = {"label": label, "csv": path, "status": "ok"}
        try:
            run_config(cfg, out_path=path)
        except Exception as exc:   # per-run isolation
            entry["status"] = "error"
            entry["error"] = "%s: %s" % (type(exc).__name__, exc)
            entry["csv"] = None
        manifest.append(entry)
    _write_manifest(out_dir, manifest)
    return manifest


# -- sweeps -----------------------------------------------------------------

def parse_axis(text):
    """'section.key=v1,v2,...' -> (key, [v1, v2, ...])."""
    if "=" not in text:
        raise ConfigError("axis %r is not key=v1,v2,..." % text)
    key, _, raw = text.partition("=")
    vals = [v.strip() for v in raw.split(",") if v.strip()]
    if not vals:
        raise ConfigError("axis %r has no values" % text)
    return key.strip(), vals


def _sweep_worker(args):
    path, overrides, out_path, seed = args
    cfg = load_file(path)
    apply_overrides(cfg, overrides)
    if seed is not None:
        cfg.run.seed = seed
    validate(cfg)
    run_config(cfg, out_path=out_path)
    return out_path


def sweep(config_path, axes, out_dir, seed=None, jobs=1, extra=()):
    """Cartesian product of axis overrides, one isolated run per point."""
    parsed = [parse_axis(a) for a in axes]
    keys = [k for k, _ in parsed]
    grids = [v for _, v in parsed]
    os.makedirs(out_dir, exist_ok=True)

    points = []
    # product of no axes yields a single empty combo: the base run
    for i, combo in enumerate(itertools.product(*grids)):
        overrides = list(extra) + ["%s=%s" % (k, v)
                                   for k, v in zip(keys, combo)]
        label = "run%04d" % i
        out_path = os.path.join(out_dir, label + ".csv")
        points.append((label, overrides, out_path))

    manifest = []
    work = [(config_path, ovr, out, seed) for _, ovr, out in points]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = list(pool.map(_safe_worker, work))
    else:
        futures = [_safe_worker(w) for w in work]
    for (label, overrides, out_path), err in zip(points, futures):
        entry = {"label": label, "overrides": overrides,
                 "csv": None if err else out_path,
                 "status": "error" if err else "ok"}
        if err:
            entry["error"] = err
        manifest.append(entry)
    _write_manifest(out_dir, manifest)
    return manifest


def _safe_worker(args):
    try:
        _sweep_worker(args)
        return None
    except Exception as exc:
        return "%s: %s" % (type(exc).__name__, exc)


def _write_manifest(out_dir, manifest):
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
