"""Workload planning: first-level tiling and node assignment, phased task
schedules for the cores, engine sub-tile selection, and lowering of DL
layers to GEMM dimensions.

Planning is pure; execution happens on a Machine.  Parallelization is over
output tiles only: the K reduction is never split across nodes, so the
multi-node result is bit-identical to the single-node one.
"""

import math

from .cpu import KernelPhase, LockPhase, ProgramPhase, StashPhase
from .isa import (MA_CFG, MA_READ, MA_STATE, GemmParams, Instruction, Op,
                  Program, SetReg, element_size)
from .mmae import strip_depth


class NoFeasiblePair(Exception):
    pass


class Tile:
    __slots__ = ("index", "row0", "col0", "rows", "cols", "node")

    def __init__(self, index, row0, col0, rows, cols, node):
        self.index = index
        self.row0 = row0
        self.col0 = col0
        self.rows = rows
        self.cols = cols
        self.node = node

    def __repr__(self):
        return "Tile(%d: %dx%d at (%d,%d) -> node %d)" % (
            self.index, self.rows, self.cols, self.row0, self.col0,
            self.node)


class TilePlan:
    """First-level grid of C tiles dealt to nodes."""

    def __init__(self, m, n, k, tr, tc, nodes, assignment="round_robin"):
        self.m = m
        self.n = n
        self.k = k
        self.tr = tr
        self.tc = tc
        self.nodes = nodes
        self.grid_rows = -(-m // tr)
        self.grid_cols = -(-n // tc)
        self.tiles = []
        idx = 0
        for r0 in range(0, m, tr):
            for c0 in range(0, n, tc):
                if assignment == "round_robin":
                    node = idx % nodes
                else:       # block: contiguous runs of tiles per node
                    per = -(-(self.grid_rows * self.grid_cols) // nodes)
                    node = idx // per
                self.tiles.append(Tile(idx, r0, c0, min(tr, m - r0),
                                       min(tc, n - c0), node))
                idx += 1

    def tiles_for(self, node):
        return [t for t in self.tiles if t.node == node]


def plan_tiles(m, n, k, tr, tc, nodes, assignment="round_robin"):
    return TilePlan(m, n, k, tr, tc, nodes, assignment)


class TileTask:
    """One engine task plus the core-side phases wrapped around it."""

    __slots__ = ("params", "stash_regions", "lock_regions", "post_flops",
                 "label")

    def __init__(self, params, stash_regions=(), lock_regions=(),
                 post_flops=0, label=""):
        self.params = params            # GemmParams
        self.stash_regions = tuple(stash_regions)
        self.lock_regions = tuple(lock_regions)
        self.post_flops = post_flops
        self.label = label


def _cfg_program(params, maid_reg):
    items = [SetReg(i, v) for i, v in enumerate(params.pack())]
    items.append(Op(Instruction(MA_CFG, maid_reg, 0)))
    return Program(items)


def _poll_program(maid_reg, status_reg, release_reg):
    return Program([
        Op(Instruction(MA_READ, status_reg, maid_reg), poll=True),
        Op(Instruction(MA_STATE, release_reg, maid_reg)),
    ])


def build_schedule(tasks, lookahead=1):
    """Phase list for one core: prefetch/lock/configure ahead, poll behind.

    With lookahead L, task t+L is stashed, locked, and handed to the engine
    before task t is polled, so the core's post-kernel for tile t overlaps
    the engine computing later tiles.
    """
    lookahead = max(0, lookahead)
    if lookahead > 5:
        raise ValueError("lookahead beyond 5 exceeds the register budget")
    phases = []
    nslots = lookahead + 2          # maid registers rotate through these

    def issue(idx, task):
        slot = idx % nslots
        if task.stash_regions:
            phases.append(StashPhase(task.stash_regions,
                                     label="stash:%s" % task.label))
        if task.lock_regions:
            phases.append(LockPhase(task.lock_regions, lock=True,
                                    label="lock:%s" % task.label))
        phases.append(ProgramPhase(_cfg_program(task.params, 8 + slot),
                                   label="cfg:%s" % task.label))

    def retire(idx, task):
        slot = idx % nslots
        phases.append(ProgramPhase(
            _poll_program(8 + slot, 16 + slot, 24 + slot),
            label="poll:%s" % task.label))
        if task.post_flops:
            regions = task.lock_regions or ()
            phases.append(KernelPhase(task.post_flops, regions,
                                      label="post:%s" % task.label))
        if task.lock_regions:
            phases.append(LockPhase(task.lock_regions, lock=False,
                                    label="unlock:%s" % task.label))

    for idx, task in enumerate(tasks):
        issue(idx, task)
        if idx >= lookahead:
            retire(idx - lookahead, tasks[idx - lookahead])
    for idx in range(max(0, len(tasks) - lookahead), len(tasks)):
        retire(idx, tasks[idx])
    return phases


def candidates(tr, tc, k, precision_code, buffer_bytes, kk_max=256):
    """Power-of-two (ttr, ttc) pairs that double-buffer in the engine
    scratch, Pareto-maximal and ranked by buffer utilization; at most 8."""
    es = element_size(precision_code)

    def pow2s(limit):
        vals = []
        v = 4
        while v <= limit:
            vals.append(v)
            v *= 2
        return vals or [limit]

    feasible = []
    for ttr in pow2s(tr):
        for ttc in pow2s(tc):
            kk = strip_depth(ttr, ttc, es, buffer_bytes, kk_max, k)
            if kk is None:
                continue
            used = 2 * (ttr * kk + kk * ttc + ttr * ttc) * es
            feasible.append((ttr, ttc, kk, used))
    if not feasible:
        raise NoFeasiblePair(
            "no (ttr, ttc) fits a %d byte buffer" % buffer_bytes)
    maximal = []
    for cand in feasible:
        ttr, ttc = cand[0], cand[1]
        if any(o[0] >= ttr and o[1] >= ttc and (o[0], o[1]) != (ttr, ttc)
               for o in feasible):
            continue
        maximal.append(cand)
    maximal.sort(key=lambda c: (-c[3], -c[0], -c[1]))
    return [(c[0], c[1]) for c in maximal[:8]]


def autotune(mcfg, m, n, k, precision_code, pairs, seed=1):
    """Pick the lowest-cycle pair by timing one first-level tile per
    candidate in an isolated trial run; ties go to larger ttr, then ttc."""
    from .experiments import time_single_tile
    best = None
    for ttr, ttc in pairs:
        cycles = time_single_tile(mcfg, m, n, k, precision_code, ttr, ttc,
                                  seed)
        key = (cycles, -ttr, -ttc)
        if best is None or key < best[0]:
            best = (key, (ttr, ttc))
    return best[1]


def lower_dl_layer(layer):
    """GEMM dimensions for one DL layer description.

    Kinds: fc {in, out, batch}; conv {filters, channels, kh, kw, out_h,
    out_w, batch}; attention_projection {d_model, seq}.  FLOPs are preserved
    as 2*M*N*K of the resulting GEMM.
    """
    kind = layer.get("kind")
    if kind == "fc":
        return (layer["batch"], layer["out"], layer["in"])
    if kind == "conv":
        m = layer["filters"]
        n = layer["out_h"] * layer["out_w"] * layer["batch"]
        k = layer["channels"] * layer["kh"] * layer["kw"]
        return (m, n, k)
    if kind == "attention_projection":
        return (layer["seq"], layer["d_model"], layer["d_model"])
    raise ValueError("unknown layer kind %r" % (kind,))
