"""Matrix engine: accelerator controller, input-stationary systolic array,
and the two DMA engines.

One engine instance sits beside each core.  The core forwards accepted task
parameter blocks over the interconnect; the engine runs them one at a time
in arrival order, reporting start and completion back the same way.

GEMM execution walks first-level Tr x Tc tiles of C, second-level ttr x ttc
sub-tiles inside them, and K-strips of depth kk chosen so everything
double-buffers within the on-chip buffer:

    2 * (ttr*kk + kk*ttc + ttr*ttc) * element_size  <=  buffer capacity

DMA0 streams A and B strips one step ahead of the array; DMA1 reads initial
C (accumulating tasks), writes finished sub-tiles back, and serves the bulk
move/init/stash tasks.  Each stream owns a predictive translator fed with
its page-head sequence.  Numerical results are independent of every timing
knob: the functional product is applied strip by strip in ascending k, each
multiply and add rounded in the element precision.
"""

from collections import deque

import numpy as np

from .engine import Signal, Semaphore
from .isa import (MA_CFG, MA_MOVE, MA_INIT, MA_STASH, FP64, FP32, FP16,
                  GemmParams, TransferParams, element_size, simd_ways,
                  validate_params)
from .memory import MemoryFault
from .noc import RESPONSE
from .queues import (EXC_NONE, EXC_PARAM, EXC_FLOAT, EXC_PAGE_FAULT,
                     EXC_DATA_ABORT)
from .translation import (StreamTranslator, TranslationFault,
                          predict_page_heads, PAGE_SIZE, PAGE_BITS)

DTYPES = {FP64: np.float64, FP32: np.float32, FP16: np.float16}

CHUNK = 512          # bulk request size: one home-slice stripe


def strip_depth(ttr, ttc, es, buffer_bytes, kk_max, k):
    """Largest power-of-two K-strip depth that double-buffers in capacity,
    clamped to K; None when even depth 1 does not fit."""
    kk = 0
    cand = 1
    while cand <= kk_max:
        if 2 * (ttr * cand + cand * ttc + ttr * ttc) * es <= buffer_bytes:
            kk = cand
            cand *= 2
        else:
            break
    if kk == 0:
        return None
    return min(kk, k)


def accumulate_product(c, a, b):
    """c += a @ b in the canonical order: ascending k, every multiply and
    add rounded in c's own dtype."""
    for kx in range(a.shape[1]):
        c += a[:, kx, None] * b[kx, :]


class Step:
    __slots__ = ("i0", "j0", "k0", "mi", "nj", "kd", "first", "last")

    def __init__(self, i0, j0, k0, mi, nj, kd, first, last):
        self.i0 = i0
        self.j0 = j0
        self.k0 = k0
        self.mi = mi
        self.nj = nj
        self.kd = kd
        self.first = first
        self.last = last


class GemmPlan:
    """Loop nest and address streams for one GEMM task."""

    def __init__(self, params, cfg):
        self.p = params
        self.es = element_size(params.precision)
        self.ways = simd_ways(params.precision)
        self.dtype = DTYPES[params.precision]
        self.kk = strip_depth(params.ttr, params.ttc, self.es,
                              cfg.mmae_buffer_kb * 1024, cfg.kk_max, params.k)
        self.steps = []
        if self.kk is None:
            return
        p = params
        strips = list(range(0, p.k, self.kk))
        for tI in range(0, p.m, p.tr):
            for tJ in range(0, p.n, p.tc):
                for i0 in range(tI, min(tI + p.tr, p.m), p.ttr):
                    for j0 in range(tJ, min(tJ + p.tc, p.n), p.ttc):
                        mi = min(p.ttr, p.m - i0)
                        nj = min(p.ttc, p.n - j0)
                        for s, k0 in enumerate(strips):
                            kd = min(self.kk, p.k - k0)
                            self.steps.append(Step(
                                i0, j0, k0, mi, nj, kd,
                                s == 0, s == len(strips) - 1))

    def a_rows(self, st):
        p, es = self.p, self.es
        return [(p.a_vaddr + ((st.i0 + r) * p.k + st.k0) * es, st.kd * es)
                for r in range(st.mi)]

    def b_rows(self, st):
        p, es = self.p, self.es
        return [(p.b_vaddr + ((st.k0 + r) * p.n + st.j0) * es, st.nj * es)
                for r in range(st.kd)]

    def c_rows(self, st):
        p, es = self.p, self.es
        return [(p.c_vaddr + ((st.i0 + r) * p.n + st.j0) * es, st.nj * es)
                for r in range(st.mi)]

    def _heads(self, row_fn, steps):
        heads = []
        p, es = self.p, self.es
        for st in steps:
            rows = row_fn(st)
            if not rows:
                continue
            base, row_bytes = rows[0]
            stride = rows[1][0] - rows[0][0] if len(rows) > 1 else row_bytes
            for h in predict_page_heads(base, len(rows), row_bytes, stride):
                # the cursor still holds the previous page; only new pages
                # consume prediction entries
                if heads and (h >> PAGE_BITS) == (heads[-1] >> PAGE_BITS):
                    continue
                heads.append(h)
        return heads

    def a_heads(self):
        return self._heads(self.a_rows, self.steps)

    def b_heads(self):
        return self._heads(self.b_rows, self.steps)

    def c_write_heads(self):
        return self._heads(self.c_rows, [s for s in self.steps if s.last])

    def c_read_heads(self):
        return self._heads(self.c_rows, [s for s in self.steps if s.first])

    def step_cycles(self, st, sa_rows, sa_cols, fill):
        passes = -(-st.mi // sa_rows) * -(-st.nj // (sa_cols * self.ways))
        return fill + passes * st.kd

    def flops(self, st):
        return 2 * st.mi * st.nj * st.kd


class _Loads:
    """Completion tracker for one step's bulk requests."""

    __slots__ = ("remaining", "sealed", "sig")

    def __init__(self):
        self.remaining = 0
        self.sealed = False
        self.sig = Signal()

    def add(self):
        self.remaining += 1

    def seal(self, engine):
        self.sealed = True
        if self.remaining == 0 and not self.sig.fired:
            self.sig.fire(engine)

    def done(self, engine):
        self.remaining -= 1
        if self.sealed and self.remaining == 0 and not self.sig.fired:
            self.sig.fire(engine)


class _Ctx:
    """Shared state of one executing task; first fault wins and every
    registered waiter is released so the loops can unwind."""

    __slots__ = ("fault", "signals")

    def __init__(self):
        self.fault = None
        self.signals = []

    def sig(self):
        s = Signal()
        self.signals.append(s)
        return s

    def fail(self, engine, exc):
        if self.fault is None:
            self.fault = exc
        for s in self.signals:
            if not s.fired:
                s.fire(engine)


class TaskRecord:
    __slots__ = ("maid", "asid", "op", "start", "end", "flops", "exc")

    def __init__(self, maid, asid, op, start, end, flops, exc):
        self.maid = maid
        self.asid = asid
        self.op = op
        self.start = start
        self.end = end
        self.flops = flops
        self.exc = exc


class MmaeNode:
    """One matrix engine: slave queue, controller loop, SA and DMA models."""

    def __init__(self, engine, node, cfg, noc, port, trans_svc,
                 on_started=None, on_report=None):
        self.engine = engine
        self.node = node
        self.cfg = cfg
        self.noc = noc
        self.port = port
        self.trans = trans_svc
        self.on_started = on_started or (lambda maid: None)
        self.on_report = on_report or (lambda maid, exc: None)
        self.mmae = engine.domain("mmae")
        self.issue_ticks = self.mmae.cycles(cfg.dma_issue_cycles)
        self.setup_ticks = self.mmae.cycles(cfg.task_setup_cycles)
        self.buffer_bytes = cfg.mmae_buffer_kb * 1024

        self.pending = deque()
        self.active = None
        self._wake = None

        # counters
        self.sa_busy_cycles = 0
        self.flops = 0
        self.dma_wait_ticks = 0         # compute waiting on operand streams
        self.trans_stall_ticks = 0      # translation-attributed DMA stalls
        self.matlb_hits = 0
        self.matlb_demand = 0
        self.matlb_drops = 0
        self.bytes_read = 0
        self.bytes_written = 0
        self.tasks_ok = 0
        self.tasks_exc = 0
        self.records = []

        engine.spawn(self._loop())

    # -- queue front --------------------------------------------------------

    def submit(self, payload):
        """Called at message delivery: (maid, asid, op, regs, exc_en)."""
        self.pending.append(payload)
        if self._wake is not None and not self._wake.fired:
            wake, self._wake = self._wake, None
            wake.fire(self.engine)

    def queue_depth(self):
        return len(self.pending) + (1 if self.active is not None else 0)

    def _notify(self, fn, *args):
        self.noc.send(self.node, self.node, 8, RESPONSE,
                      lambda _a: fn(*args))

    def _loop(self):
        while True:
            while not self.pending:
                self._wake = Signal()
                yield self._wake
            maid, asid, op, regs, exc_en = self.pending.popleft()
            self.active = maid
            start = self.engine.now
            self._notify(self.on_started, maid)
            reason = validate_params(op, list(regs))
            if reason is not None:
                exc = EXC_PARAM
                nflops = 0
            elif op == MA_CFG:
                exc, nflops = yield from self._run_gemm(asid, regs, exc_en)
            else:
                exc = yield from self._run_transfer(asid, op, regs)
                nflops = 0
            self.records.append(TaskRecord(
                maid, asid, op, start, self.engine.now, nflops, exc))
            if exc == EXC_NONE:
                self.tasks_ok += 1
            else:
                self.tasks_exc += 1
            self._notify(self.on_report, maid, exc)
            self.active = None

    # -- shared DMA plumbing ------------------------------------------------

    def _translator(self, asid, heads):
        cfg = self.cfg
        return StreamTranslator(
            self.engine, self.trans, asid, heads,
            enabled=cfg.matlb_enabled, capacity=cfg.matlb_capacity,
            lookahead=cfg.matlb_lookahead)

    def _drain_translators(self, translators):
        for t in translators:
            self.trans_stall_ticks += t.stall_ticks
            self.matlb_hits += t.hits
            self.matlb_demand += t.demand_misses
            self.matlb_drops += t.drops

    def _pieces(self, va, nbytes):
        """Split a row into page- and stripe-bounded bulk requests."""
        pos = va
        end = va + nbytes
        while pos < end:
            cut = min((pos // PAGE_SIZE + 1) * PAGE_SIZE,
                      (pos // CHUNK + 1) * CHUNK, end)
            yield pos, cut - pos
            pos = cut

    def _read_piece(self, ctx, window, loads, paddr, n, sink, slot):
        try:
            data = yield from self.port.read(paddr, n)
            sink[slot] = data
            self.bytes_read += n
        except MemoryFault:
            ctx.fail(self.engine, EXC_DATA_ABORT)
        window.release(self.engine)
        loads.done(self.engine)

    def _fetch_rows(self, ctx, translator, window, loads, rows, sink):
        """Issue every piece of `rows`; bytes land in sink in piece order."""
        for va, nbytes in rows:
            for pos, n in self._pieces(va, nbytes):
                if ctx.fault is not None:
                    return
                paddr = yield from translator.translate(pos)
                if self.issue_ticks:
                    yield self.issue_ticks
                got = window.acquire()
                if not got.fired:
                    yield got
                loads.add()
                sink.append(None)
                self.engine.spawn(self._read_piece(
                    ctx, window, loads, paddr, n, sink, len(sink) - 1))

    def _write_rows(self, ctx, translator, rows, blobs):
        for (va, nbytes), blob in zip(rows, blobs):
            off = 0
            for pos, n in self._pieces(va, nbytes):
                if ctx.fault is not None:
                    return
                paddr = yield from translator.translate(pos)
                if self.issue_ticks:
                    yield self.issue_ticks
                yield from self.port.write(paddr, blob[off:off + n])
                self.bytes_written += n
                off += n

    # -- GEMM ---------------------------------------------------------------

    def _run_gemm(self, asid, regs, exc_en):
        params = GemmParams.unpack(regs)
        plan = GemmPlan(params, self.cfg)
        if plan.kk is None:
            return EXC_PARAM, 0
        occupied = 2 * (params.ttr * plan.kk + plan.kk * params.ttc
                        + params.ttr * params.ttc) * plan.es
        assert occupied <= self.buffer_bytes

        ctx = _Ctx()
        tA = self._translator(asid, plan.a_heads())
        tB = self._translator(asid, plan.b_heads())
        tCw = self._translator(asid, plan.c_write_heads())
        tCr = (self._translator(asid, plan.c_read_heads())
               if params.accumulate else None)
        window = Semaphore(max(1, self.cfg.dma_outstanding))
        c_slots = Semaphore(2)

        states = [{"loads": _Loads(), "started": ctx.sig(),
                   "a": [], "b": []} for _ in plan.steps]
        for st_state in states:
            ctx.signals.append(st_state["loads"].sig)
        c_ready = {}            # (i0, j0) -> {"sig": Signal, "array": ...}
        dma1_jobs = deque()
        dma1_wake = [None]

        def dma1_kick():
            if dma1_wake[0] is not None and not dma1_wake[0].fired:
                w, dma1_wake[0] = dma1_wake[0], None
                w.fire(self.engine)

        def dma0():
            # predictive walks warm during the setup window; data moves once
            # the buffers are configured
            yield self.setup_ticks
            try:
                for idx, st in enumerate(plan.steps):
                    if ctx.fault is not None:
                        return
                    if idx:
                        prev = states[idx - 1]["started"]
                        if not prev.fired:
                            yield prev
                    if ctx.fault is not None:
                        return
                    if st.first and params.accumulate:
                        slot = {"sig": ctx.sig(), "array": None}
                        c_ready[(st.i0, st.j0)] = slot
                        dma1_jobs.append(("read", st, slot))
                        dma1_kick()
                    state = states[idx]
                    yield from self._fetch_rows(
                        ctx, tA, window, state["loads"], plan.a_rows(st),
                        state["a"])
                    yield from self._fetch_rows(
                        ctx, tB, window, state["loads"], plan.b_rows(st),
                        state["b"])
                    state["loads"].seal(self.engine)
            except TranslationFault:
                ctx.fail(self.engine, EXC_PAGE_FAULT)
            except MemoryFault:
                ctx.fail(self.engine, EXC_DATA_ABORT)

        def dma1():
            try:
                while True:
                    while not dma1_jobs:
                        if ctx.fault is not None:
                            return
                        dma1_wake[0] = Signal()
                        yield dma1_wake[0]
                    job = dma1_jobs.popleft()
                    if job[0] == "stop":
                        return
                    if job[0] == "read":
                        _, st, slot = job
                        got = c_slots.acquire()
                        if not got.fired:
                            yield got
                        loads = _Loads()
                        ctx.signals.append(loads.sig)
                        sink = []
                        yield from self._fetch_rows(
                            ctx, tCr, window, loads, plan.c_rows(st), sink)
                        loads.seal(self.engine)
                        if not loads.sig.fired:
                            yield loads.sig
                        if ctx.fault is not None:
                            return
                        slot["array"] = np.frombuffer(
                            b"".join(sink), dtype=plan.dtype).reshape(
                                st.mi, st.nj).copy()
                        if not slot["sig"].fired:
                            slot["sig"].fire(self.engine)
                    else:
                        _, st, arr = job
                        blobs = [arr[r].tobytes() for r in range(st.mi)]
                        yield from self._write_rows(
                            ctx, tCw, plan.c_rows(st), blobs)
                        c_slots.release(self.engine)
            except TranslationFault:
                ctx.fail(self.engine, EXC_PAGE_FAULT)
            except MemoryFault:
                ctx.fail(self.engine, EXC_DATA_ABORT)

        t_dma0 = self.engine.spawn(dma0())
        t_dma1 = self.engine.spawn(dma1())

        yield self.setup_ticks
        done_flops = 0
        exc = EXC_NONE
        c_buf = None
        for idx, st in enumerate(plan.steps):
            state = states[idx]
            if not state["loads"].sig.fired:
                t0 = self.engine.now
                yield state["loads"].sig
                self.dma_wait_ticks += self.engine.now - t0
            if ctx.fault is not None:
                break
            if not state["started"].fired:
                state["started"].fire(self.engine)
            if st.first:
                if params.accumulate:
                    slot = c_ready[(st.i0, st.j0)]
                    if not slot["sig"].fired:
                        t0 = self.engine.now
                        yield slot["sig"]
                        self.dma_wait_ticks += self.engine.now - t0
                    if ctx.fault is not None:
                        break
                    c_buf = slot["array"]
                else:
                    got = c_slots.acquire()
                    if not got.fired:
                        yield got
                    if ctx.fault is not None:
                        break
                    c_buf = np.zeros((st.mi, st.nj), dtype=plan.dtype)
            a = np.frombuffer(b"".join(state["a"]),
                              dtype=plan.dtype).reshape(st.mi, st.kd)
            b = np.frombuffer(b"".join(state["b"]),
                              dtype=plan.dtype).reshape(st.kd, st.nj)
            accumulate_product(c_buf, a, b)
            cycles = plan.step_cycles(st, self.cfg.sa_rows, self.cfg.sa_cols,
                                      self.cfg.sa_fill_cycles)
            yield self.mmae.cycles(cycles)
            self.sa_busy_cycles += cycles
            done_flops += plan.flops(st)
            state["a"] = state["b"] = None      # release the strip slab
            if exc_en and not np.isfinite(c_buf).all():
                exc = EXC_FLOAT
                ctx.fail(self.engine, EXC_FLOAT)
                break
            if st.last:
                dma1_jobs.append(("write", st, c_buf))
                c_buf = None
                dma1_kick()

        dma1_jobs.append(("stop", None, None))
        dma1_kick()
        if not t_dma0.done:
            yield t_dma0.join()
        if not t_dma1.done:
            yield t_dma1.join()
        if ctx.fault is not None and exc == EXC_NONE:
            exc = ctx.fault
        self.flops += done_flops
        self._drain_translators([t for t in (tA, tB, tCw, tCr)
                                 if t is not None])
        return exc, done_flops

    # -- bulk transfer tasks ------------------------------------------------

    def _run_transfer(self, asid, op, regs):
        params = TransferParams.unpack(regs)
        ctx = _Ctx()
        count = params.byte_count
        yield self.setup_ticks
        try:
            if op == MA_STASH:
                t_dst = self._translator(
                    asid, predict_page_heads(params.dst, 1, count, count))
                for pos, n in self._pieces(params.dst, count):
                    paddr = yield from t_dst.translate(pos)
                    if self.issue_ticks:
                        yield self.issue_ticks
                    yield from self.port.stash(paddr, n)
                self._drain_translators([t_dst])
                return EXC_NONE
            if op == MA_INIT:
                t_dst = self._translator(
                    asid, predict_page_heads(params.dst, 1, count, count))
                pattern = params.src_or_value.to_bytes(8, "little")
                for pos, n in self._pieces(params.dst, count):
                    paddr = yield from t_dst.translate(pos)
                    if self.issue_ticks:
                        yield self.issue_ticks
                    start = (pos - params.dst) % 8
                    blob = (pattern * (n // 8 + 2))[start:start + n]
                    yield from self.port.write(paddr, blob)
                    self.bytes_written += n
                self._drain_translators([t_dst])
                return EXC_NONE
            # MA_MOVE: forward copy in CHUNK-sized units, each unit fully
            # read before it is written (defines overlap semantics)
            t_src = self._translator(
                asid, predict_page_heads(params.src_or_value, 1, count, count))
            t_dst = self._translator(
                asid, predict_page_heads(params.dst, 1, count, count))
            for off in range(0, count, CHUNK):
                n = min(CHUNK, count - off)
                got = bytearray()
                for pos, take in self._pieces(params.src_or_value + off, n):
                    paddr = yield from t_src.translate(pos)
                    if self.issue_ticks:
                        yield self.issue_ticks
                    got += yield from self.port.read(paddr, take)
                    self.bytes_read += take
                blob = bytes(got)
                boff = 0
                for pos, take in self._pieces(params.dst + off, n):
                    paddr = yield from t_dst.translate(pos)
                    if self.issue_ticks:
                        yield self.issue_ticks
                    yield from self.port.write(paddr, blob[boff:boff + take])
                    self.bytes_written += take
                    boff += take
            self._drain_translators([t_src, t_dst])
            return EXC_NONE
        except TranslationFault:
            return EXC_PAGE_FAULT
        except MemoryFault:
            return EXC_DATA_ABORT
