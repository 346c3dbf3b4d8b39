"""Configuration schema and loading.

A run is described by one YAML document with three sections: `machine`
(hardware parameters), `workload` (what to execute) and `run` (seed, output,
checks).  Every field has a default; unknown keys are rejected so typos
surface as errors instead of silently running the default machine.
"""

import dataclasses
from dataclasses import dataclass, field

import yaml


class ConfigError(Exception):
    pass


@dataclass
class MachineConfig:
    # clocks (Hz)
    cpu_freq_hz: int = 2_200_000_000
    mmae_freq_hz: int = 2_500_000_000
    noc_freq_hz: int = 2_000_000_000

    # topology
    nodes: int = 1
    mesh_w: int = 4
    mesh_h: int = 4

    # core
    cpu_fmacs: int = 8
    mpais_issue_cycles: int = 10
    cpu_kernel_efficiency: float = 0.5
    poll_backoff_min_cycles: int = 32
    poll_backoff_max_cycles: int = 4096
    mtq_depth: int = 4

    # matrix engine
    mmae_fmacs: int = 16
    sa_rows: int = 4
    sa_cols: int = 4
    sa_fill_cycles: int = 7
    mmae_buffer_kb: int = 192
    task_setup_cycles: int = 320
    dma_issue_cycles: int = 44
    dma_outstanding: int = 16
    kk_max: int = 256

    # translation
    page_bits: int = 12
    l1_dtlb_entries: int = 48
    stlb_entries: int = 1024
    l1_tlb_hit_cycles: int = 1
    stlb_hit_cycles: int = 4
    ptw_step_cycles: int = 32
    ptw_interface_cycles: int = 5
    ptw_pipeline_interval_cycles: int = 16
    matlb_enabled: bool = True
    matlb_capacity: int = 8
    matlb_lookahead: int = 4
    matlb_hit_cycles: int = 2

    # private caches
    line_bytes: int = 64
    l1d_kb: int = 48
    l1d_ways: int = 4
    l2_kb: int = 512
    l2_ways: int = 8
    l1_hit_cycles: int = 4
    l2_hit_cycles: int = 12

    # system cache / memory
    l3_slices: int = 16
    l3_slice_kb: int = 2048
    l3_ways: int = 16
    stripe_bytes: int = 512
    l3_hit_cycles: int = 40
    l3_bank_interval_cycles: int = 4
    mem_latency_cycles: int = 160
    lock_way_fraction: float = 0.5

    # interconnect
    link_bytes_per_cycle: int = 32
    noc_per_hop_cycles: int = 2
    noc_header_bytes: int = 16

    # idealizations (used by peak-efficiency experiments)
    ideal_memory: bool = False

    def freqs(self):
        return {"cpu": self.cpu_freq_hz, "mmae": self.mmae_freq_hz,
                "noc": self.noc_freq_hz}

    def apply_ideal_memory(self):
        """Zero-latency, infinitely deep memory side; transfer and
        translation machinery becomes free but stays functionally active."""
        self.l1_hit_cycles = 0
        self.l2_hit_cycles = 0
        self.l3_hit_cycles = 0
        self.l3_bank_interval_cycles = 0
        self.mem_latency_cycles = 0
        self.noc_per_hop_cycles = 0
        self.l1_tlb_hit_cycles = 0
        self.stlb_hit_cycles = 0
        self.ptw_step_cycles = 0
        self.ptw_interface_cycles = 0
        self.ptw_pipeline_interval_cycles = 0
        self.matlb_hit_cycles = 0
        self.dma_issue_cycles = 0
        self.task_setup_cycles = 0


@dataclass
class WorkloadConfig:
    kind: str = "gemm"              # gemm | dl_layer
    m: int = 256
    n: int = 256
    k: int = 256
    precision: str = "fp64"         # fp64 | fp32 | fp16
    accumulate: bool = False
    tr: int = 1024
    tc: int = 1024
    ttr: int = 64
    ttc: int = 64
    autotune: bool = False
    per_node: bool = True           # independent copy per node vs one shared gemm
    stash: bool = True
    lock: bool = False
    post_kernel_flops_per_element: int = 0
    value_scale: float = 1.0
    # dl_layer fields
    layer: dict = field(default_factory=dict)


@dataclass
class RunConfig:
    seed: int = 1
    out: str = ""
    functional_check: bool = True
    max_steps: int = 0              # 0 = no limit
    label: str = ""


@dataclass
class ExperimentConfig:
    machine: MachineConfig = field(default_factory=MachineConfig)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def to_dict(self):
        return dataclasses.asdict(self)


_PRECISIONS = ("fp64", "fp32", "fp16")


def _apply_section(obj, data, path):
    valid = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in data.items():
        if key not in valid:
            raise ConfigError("unknown key %s.%s" % (path, key))
        current = getattr(obj, key)
        if isinstance(current, bool):
            if not isinstance(value, bool):
                raise ConfigError("%s.%s wants a boolean" % (path, key))
        elif isinstance(current, int) and not isinstance(value, bool):
            if not isinstance(value, int):
                raise ConfigError("%s.%s wants an integer" % (path, key))
        elif isinstance(current, float):
            if not isinstance(value, (int, float)):
                raise ConfigError("%s.%s wants a number" % (path, key))
            value = float(value)
        elif isinstance(current, str):
            if not isinstance(value, str):
                raise ConfigError("%s.%s wants a string" % (path, key))
        elif isinstance(current, dict):
            if not isinstance(value, dict):
                raise ConfigError("%s.%s wants a mapping" % (path, key))
        setattr(obj, key, value)


def validate(cfg):
    m, w, r = cfg.machine, cfg.workload, cfg.run
    if not (1 <= m.nodes <= m.mesh_w * m.mesh_h):
        raise ConfigError("machine.nodes must be in 1..%d" % (m.mesh_w * m.mesh_h))
    if m.l3_slices != m.mesh_w * m.mesh_h:
        raise ConfigError("machine.l3_slices must equal the mesh size")
    if w.precision not in _PRECISIONS:
        raise ConfigError("workload.precision must be one of %s" % (_PRECISIONS,))
    if w.kind not in ("gemm", "dl_layer"):
        raise ConfigError("workload.kind must be gemm or dl_layer")
    if min(w.m, w.n, w.k) < 1:
        raise ConfigError("workload dims must be positive")
    if min(w.tr, w.tc, w.ttr, w.ttc) < 1:
        raise ConfigError("workload tiling must be positive")
    if w.ttr > w.tr or w.ttc > w.tc:
        raise ConfigError("workload sub-tile exceeds tile")
    if m.matlb_lookahead < 0 or m.matlb_capacity < 1:
        raise ConfigError("bad stream prediction window")
    return cfg


def from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    cfg = ExperimentConfig()
    for section in data:
        if section not in ("machine", "workload", "run"):
            raise ConfigError("unknown section %r" % section)
        if not isinstance(data[section], dict):
            raise ConfigError("section %r must be a mapping" % section)
    _apply_section(cfg.machine, data.get("machine", {}), "machine")
    _apply_section(cfg.workload, data.get("workload", {}), "workload")
    _apply_section(cfg.run, data.get("run", {}), "run")
    if cfg.machine.ideal_memory:
        cfg.machine.apply_ideal_memory()
    return validate(cfg)


def load_file(path):
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return from_dict(data or {})


def loads(text):
    return from_dict(yaml.safe_load(text) or {})


def apply_overrides(cfg, overrides):
    """Apply 'section.key=value' strings on top of a parsed config."""
    data = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError("override %r is not key=value" % item)
        key, _, raw = item.partition("=")
        parts = key.strip().split(".")
        if len(parts) != 2:
            raise ConfigError("override key %r is not section.key" % key)
        section, name = parts
        value = yaml.safe_load(raw)
        data.setdefault(section, {})[name] = value
    for section, fieldsmap in data.items():
        if section == "machine":
            _apply_section(cfg.machine, fieldsmap, "machine")
        elif section == "workload":
            _apply_section(cfg.workload, fieldsmap, "workload")
        elif section == "run":
            _apply_section(cfg.run, fieldsmap, "run")
        else:
            raise ConfigError("unknown section %r" % section)
    if cfg.machine.ideal_memory:
        cfg.machine.apply_ideal_memory()
    return validate(cfg)
