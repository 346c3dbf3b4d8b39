"""Per-core processor model.

A core executes a scripted list of work phases: assembled coprocessor
programs, modeled non-GEMM kernel phases, stash/lock configuration of the
system cache, and process switches.  The pipeline itself is abstracted to
in-order issue with a fixed per-instruction cost; what is modeled carefully
is the interaction with the task queue, the engine, and the memory system.

Task instructions claim a local queue entry, validate the parameter block,
and forward accepted blocks to the co-located matrix engine over the
interconnect.  `.poll` repeats the status read with exponential backoff
until the done bit comes back.
"""

import math

from .isa import (MA_MOVE, MA_INIT, MA_STASH, MA_CFG, MA_READ, MA_STATE,
                  MA_CLEAR, PARAM_BLOCK_LEN, PARAM_CONSUMERS, NUM_REGS,
                  Op, SetReg, validate_params)
from .queues import CFG_FAIL, STATUS_DONE, STATUS_REUSE, EXC_PARAM
from .translation import PAGE_SIZE

LINE = 64
MASK64 = (1 << 64) - 1


class ProgramPhase:
    __slots__ = ("program", "label")

    def __init__(self, program, label="program"):
        self.program = program
        self.label = label


class KernelPhase:
    """Modeled CPU kernel: flop_count at the configured fraction of the
    2 x FMACs per-cycle peak, optionally reading result regions through
    the cache hierarchy first."""

    __slots__ = ("flops", "regions", "label")

    def __init__(self, flops, regions=(), label="kernel"):
        self.flops = flops
        self.regions = tuple(regions)
        self.label = label


class StashPhase:
    __slots__ = ("regions", "label")

    def __init__(self, regions, label="stash"):
        self.regions = tuple(regions)
        self.label = label


class LockPhase:
    __slots__ = ("regions", "lock", "label")

    def __init__(self, regions, lock=True, label=None):
        self.regions = tuple(regions)
        self.lock = lock
        self.label = label or ("lock" if lock else "unlock")


class SwitchPhase:
    __slots__ = ("asid", "label")

    def __init__(self, asid):
        self.asid = asid
        self.label = "switch"


class CpuCore:
    def __init__(self, engine, node, cfg, mtq, trans_svc, cache=None,
                 port=None, dispatch=None):
        self.engine = engine
        self.node = node
        self.cfg = cfg
        self.mtq = mtq
        self.trans = trans_svc
        self.cache = cache
        self.port = port
        self.dispatch = dispatch or (lambda payload: None)
        self.cpu = engine.domain("cpu")
        self.issue_ticks = self.cpu.cycles(cfg.mpais_issue_cycles)
        self.flop_per_cycle = 2 * cfg.cpu_fmacs * cfg.cpu_kernel_efficiency

        self.asid = 0
        self.regs = [0] * NUM_REGS
        self._regfiles = {0: self.regs}

        self.instr_count = 0
        self.polls = 0
        self.poll_wait_ticks = 0
        self.kernel_ticks = 0
        self.instr_ticks = 0
        self.cfg_fails = 0
        self.issued_maids = []
        self.timeline = []          # (label, start_tick, end_tick)
        self.finished = False

    # -- schedule driver ----------------------------------------------------

    def run(self, phases):
        """Coroutine: execute the work list in order."""
        for phase in phases:
            start = self.engine.now
            if isinstance(phase, ProgramPhase):
                yield from self._exec_program(phase.program)
            elif isinstance(phase, KernelPhase):
                yield from self._exec_kernel(phase)
            elif isinstance(phase, StashPhase):
                yield from self._exec_stash(phase)
            elif isinstance(phase, LockPhase):
                yield from self._exec_lock(phase)
            elif isinstance(phase, SwitchPhase):
                self.switch_process(phase.asid)
            else:
                raise TypeError("unknown phase %r" % (phase,))
            self.timeline.append((phase.label, start, self.engine.now))
        self.finished = True

    def switch_process(self, new_asid):
        """Swap the architectural register file; queues are untouched."""
        self._regfiles[self.asid] = self.regs
        self.regs = self._regfiles.setdefault(new_asid, [0] * NUM_REGS)
        self.asid = new_asid

    # -- MPAIS execution ----------------------------------------------------

    def _exec_program(self, program):
        for item in program.items:
            if isinstance(item, SetReg):
                self.regs[item.reg] = item.value & MASK64
                yield self.cpu.cycles(1)
            else:
                yield from self._exec_op(item)

    def _exec_op(self, item):
        ins = item.instr
        if item.poll:
            backoff = self.cfg.poll_backoff_min_cycles
            while True:
                yield self.issue_ticks
                self.instr_ticks += self.issue_ticks
                self.instr_count += 1
                self.polls += 1
                word = self._status(self.regs[ins.rn])
                self.regs[ins.rd] = word
                if word & STATUS_DONE:
                    return
                wait = self.cpu.cycles(backoff)
                self.poll_wait_ticks += wait
                yield wait
                backoff = min(backoff * 2, self.cfg.poll_backoff_max_cycles)
        yield self.issue_ticks
        self.instr_ticks += self.issue_ticks
        self.instr_count += 1
        op = ins.op
        if op in PARAM_CONSUMERS:
            self._issue_task(ins)
        elif op == MA_READ:
            self.regs[ins.rd] = self._status(self.regs[ins.rn])
        elif op == MA_STATE:
            self.regs[ins.rd] = self._release(self.regs[ins.rn])
        elif op == MA_CLEAR:
            self.regs[ins.rd] = int(self._clear(self.regs[ins.rn]))

    def _status(self, maid):
        if not 0 <= maid < self.mtq.depth:
            return STATUS_REUSE | STATUS_DONE
        return self.mtq.query(maid, self.asid)

    def _release(self, maid):
        if not 0 <= maid < self.mtq.depth:
            return STATUS_REUSE | STATUS_DONE
        return self.mtq.read_and_release(maid, self.asid)

    def _clear(self, maid):
        if not 0 <= maid < self.mtq.depth:
            return False
        return self.mtq.clear(maid, self.asid)

    def _issue_task(self, ins):
        base = ins.rn
        params = [self.regs[base + i] for i in range(PARAM_BLOCK_LEN)]
        entry = self.mtq.alloc(self.asid, ins.op, params, self.engine.now)
        if entry is None:
            self.regs[ins.rd] = CFG_FAIL
            self.cfg_fails += 1
            return
        self.regs[ins.rd] = entry.maid
        reason = validate_params(ins.op, params)
        if reason is not None:
            # rejected blocks never reach the engine
            self.mtq.fault_on_alloc(entry, EXC_PARAM, self.engine.now)
            return
        self.issued_maids.append(entry.maid)
        self.dispatch((entry.maid, self.asid, ins.op, params,
                       entry.exception_en))

    # -- modeled kernels and cache configuration ----------------------------

    def _exec_kernel(self, phase):
        t0 = self.engine.now
        for va, nbytes in phase.regions:
            pos = va
            end = va + nbytes
            while pos < end:
                take = min(end, (pos // LINE + 1) * LINE) - pos
                paddr = yield from self.trans.cpu_translate(self.asid, pos)
                yield from self.cache.access(paddr, take, write=False)
                pos += take
        cycles = math.ceil(phase.flops / self.flop_per_cycle) if phase.flops else 0
        yield self.cpu.cycles(cycles)
        self.kernel_ticks += self.engine.now - t0

    def _pages(self, va, nbytes):
        pos = va
        end = va + nbytes
        while pos < end:
            take = min(end, (pos // PAGE_SIZE + 1) * PAGE_SIZE) - pos
            yield pos, take
            pos += take

    def _exec_stash(self, phase):
        for va, nbytes in phase.regions:
            for pos, take in self._pages(va, nbytes):
                paddr = yield from self.trans.cpu_translate(self.asid, pos)
                yield from self.port.stash(paddr, take)

    def _exec_lock(self, phase):
        for va, nbytes in phase.regions:
            for pos, take in self._pages(va, nbytes):
                paddr = yield from self.trans.cpu_translate(self.asid, pos)
                if phase.lock:
                    yield from self.port.lock(paddr, take)
                else:
                    yield from self.port.unlock(paddr, take)
