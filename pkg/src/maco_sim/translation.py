"""Address translation: radix page tables, TLBs, walker, stream prediction.

The MMU is CPU-side.  Each node has a small L1 data TLB used by core
accesses and a large shared second-level TLB (sTLB) behind it that also
serves engine-side demand translations.  One hardware walker per node does
the 4-level radix walks; demand walks occupy it serially, while predictive
walks issued for DMA streams are pipelined at a fixed initiation interval.

Predicted translations for a DMA stream are buffered next to the engine (the
stream buffer below) and are never installed into the sTLB; a buffered entry
dies the first time it fails to match the address the DMA cursor is on.
"""

from collections import OrderedDict, deque

from .engine import Signal

VA_BITS = 48
PAGE_BITS = 12
PAGE_SIZE = 1 << PAGE_BITS
WALK_LEVELS = 4


class TranslationFault(Exception):
    """Access to an unmapped (or torn down) page."""

    def __init__(self, vaddr, asid):
        super().__init__("unmapped vaddr 0x%x (asid %d)" % (vaddr, asid))
        self.vaddr = vaddr
        self.asid = asid


class DoubleMap(Exception):
    pass


class PageTable:
    """Per-ASID VPN -> PFN map with 4-level walk accounting.

    The radix structure itself is not materialized; lookups are exact and
    the walker charges the level count.
    """

    def __init__(self, asid):
        self.asid = asid
        self.map = {}

    def map_page(self, vpn, pfn):
        if vpn in self.map:
            raise DoubleMap("vpn 0x%x already mapped (asid %d)" % (vpn, self.asid))
        self.map[vpn] = pfn

    def unmap_page(self, vpn):
        self.map.pop(vpn, None)

    def lookup(self, vpn):
        return self.map.get(vpn)


class FrameAllocator:
    def __init__(self, base_frame=16, rng=None):
        self.next_frame = base_frame
        self.rng = rng          # when set, frames are scattered

    def alloc(self, count):
        if self.rng is None:
            start = self.next_frame
            self.next_frame += count
            return list(range(start, start + count))
        frames = []
        for _ in range(count):
            # leave pseudo-random gaps so contiguous VAs land on
            # non-contiguous frames
            self.next_frame += 1 + self.rng.randrange(3)
            frames.append(self.next_frame - 1)
        return frames


class AddressSpace:
    """One process's mappings plus untimed virtual memory access helpers."""

    def __init__(self, asid, frames, page_table=None):
        self.asid = asid
        self.frames = frames
        self.table = page_table if page_table is not None else PageTable(asid)

    def map_range(self, va, nbytes):
        """Back every page of [va, va+nbytes) that is not yet mapped."""
        first = va >> PAGE_BITS
        last = (va + nbytes - 1) >> PAGE_BITS
        missing = [v for v in range(first, last + 1)
                   if self.table.lookup(v) is None]
        for vpn, pfn in zip(missing, self.frames.alloc(len(missing))):
            self.table.map_page(vpn, pfn)

    def translate(self, vaddr):
        pfn = self.table.lookup(vaddr >> PAGE_BITS)
        if pfn is None:
            raise TranslationFault(vaddr, self.asid)
        return (pfn << PAGE_BITS) | (vaddr & (PAGE_SIZE - 1))

    def write(self, mem, va, data):
        pos = 0
        n = len(data)
        while pos < n:
            page_room = PAGE_SIZE - ((va + pos) & (PAGE_SIZE - 1))
            take = min(n - pos, page_room)
            mem.write(self.translate(va + pos), data[pos:pos + take])
            pos += take

    def read(self, mem, va, n):
        out = bytearray()
        pos = 0
        while pos < n:
            page_room = PAGE_SIZE - ((va + pos) & (PAGE_SIZE - 1))
            take = min(n - pos, page_room)
            out += mem.read(self.translate(va + pos), take)
            pos += take
        return bytes(out)


class Tlb:
    """Fully associative, true LRU."""

    def __init__(self, capacity):
        self.capacity = capacity
        self.entries = OrderedDict()
        self.hits = 0
        self.misses = 0

    def lookup(self, key):
        e = self.entries.get(key)
        if e is None:
            self.misses += 1
            return None
        self.entries.move_to_end(key)
        self.hits += 1
        return e

    def insert(self, key, value):
        if key in self.entries:
            self.entries.move_to_end(key)
            self.entries[key] = value
            return
        if len(self.entries) >= self.capacity:
            self.entries.popitem(last=False)
        self.entries[key] = value

    def flush_asid(self, asid):
        for key in [k for k in self.entries if k[0] == asid]:
            del self.entries[key]

    def flush_page(self, asid, vpn):
        self.entries.pop((asid, vpn), None)


def predict_page_heads(base, rows, row_bytes, row_stride, page_size=PAGE_SIZE):
    """Addresses of the first byte touched in each distinct page, in the
    order a row-major tile walk reaches them.

    Rows advance by row_stride (>= row_bytes, rows never overlap), so the
    byte sequence is non-decreasing and de-duplication only has to look at
    the previous page.
    """
    assert row_stride >= row_bytes or rows == 1
    heads = []
    last_page = -1
    for r in range(rows):
        start = base + r * row_stride
        end = start + row_bytes
        page = start // page_size
        if page != last_page:
            heads.append(start)
            last_page = page
        boundary = (page + 1) * page_size
        while boundary < end:
            heads.append(boundary)
            last_page = boundary // page_size
            boundary += page_size
    return heads


class Walker:
    """One page-table walker per node, shared by CPU and DMA streams.

    Demand walks hold the walker for the full walk; predictive walks are
    pipelined and only occupy an issue slot.
    """

    def __init__(self, engine, service, cfg):
        self.engine = engine
        self.service = service
        cpu = engine.domain("cpu")
        self.walk_ticks = WALK_LEVELS * cpu.cycles(cfg.ptw_step_cycles)
        self.pipe_interval_ticks = engine.domain("mmae").cycles(
            cfg.ptw_pipeline_interval_cycles)
        self.next_issue = 0
        self.demand_walks = 0
        self.prewalks = 0

    def demand_walk(self, asid, vpn):
        """Coroutine: serial walk; returns pfn or None for unmapped."""
        eng = self.engine
        start = max(eng.now, self.next_issue)
        self.next_issue = start + self.walk_ticks
        self.demand_walks += 1
        yield self.next_issue - eng.now
        return self.service.page_table(asid).lookup(vpn)

    def prewalk_issue(self):
        """Reserve a pipelined issue slot; returns (slot_start, ready_time)."""
        start = max(self.engine.now, self.next_issue)
        self.next_issue = start + self.pipe_interval_ticks
        self.prewalks += 1
        return start, start + self.walk_ticks


class TranslationService:
    """Per-node MMU front: L1 DTLB + shared sTLB + walker."""

    def __init__(self, engine, cfg, page_tables):
        self.engine = engine
        self.cfg = cfg
        self.page_tables = page_tables      # shared dict asid -> PageTable
        self.l1 = Tlb(cfg.l1_dtlb_entries)
        self.l2 = Tlb(cfg.stlb_entries)
        self.walker = Walker(engine, self, cfg)
        cpu = engine.domain("cpu")
        mmae = engine.domain("mmae")
        self.l1_hit_ticks = cpu.cycles(cfg.l1_tlb_hit_cycles)
        self.l2_hit_ticks = cpu.cycles(cfg.stlb_hit_cycles)
        self.iface_ticks = mmae.cycles(cfg.ptw_interface_cycles)

    def page_table(self, asid):
        return self.page_tables[asid]

    def cpu_translate(self, asid, vaddr):
        """Coroutine: translation as seen by a core load/store."""
        vpn = vaddr >> PAGE_BITS
        key = (asid, vpn)
        pfn = self.l1.lookup(key)
        if pfn is not None:
            yield self.l1_hit_ticks
            return (pfn << PAGE_BITS) | (vaddr & (PAGE_SIZE - 1))
        pfn = self.l2.lookup(key)
        if pfn is not None:
            yield self.l1_hit_ticks + self.l2_hit_ticks
            self.l1.insert(key, pfn)
            return (pfn << PAGE_BITS) | (vaddr & (PAGE_SIZE - 1))
        yield self.l1_hit_ticks + self.l2_hit_ticks
        pfn = yield from self.walker.demand_walk(asid, vpn)
        if pfn is None:
            raise TranslationFault(vaddr, asid)
        self.l2.insert(key, pfn)
        self.l1.insert(key, pfn)
        return (pfn << PAGE_BITS) | (vaddr & (PAGE_SIZE - 1))

    def dma_demand_translate(self, asid, vaddr):
        """Coroutine: engine-side translation without stream prediction.

        Pays the engine/MMU interface both ways, checks the sTLB (not the
        core's L1), and walks on a miss.  sTLB insertion happens on demand
        walks only.
        """
        vpn = vaddr >> PAGE_BITS
        key = (asid, vpn)
        yield self.iface_ticks
        pfn = self.l2.lookup(key)
        if pfn is not None:
            yield self.l2_hit_ticks + self.iface_ticks
            return (pfn << PAGE_BITS) | (vaddr & (PAGE_SIZE - 1))
        yield self.l2_hit_ticks
        pfn = yield from self.walker.demand_walk(asid, vpn)
        yield self.iface_ticks
        if pfn is None:
            raise TranslationFault(vaddr, asid)
        self.l2.insert(key, pfn)
        return (pfn << PAGE_BITS) | (vaddr & (PAGE_SIZE - 1))


class _PredictedEntry:
    __slots__ = ("vpn", "pfn", "ready", "sig")

    def __init__(self, vpn):
        self.vpn = vpn
        self.pfn = None
        self.ready = False
        self.sig = Signal()


class StreamTranslator:
    """Predictive translation buffer feeding one DMA stream.

    Walks for the next predicted page heads are issued ahead of the cursor
    (up to `lookahead` outstanding beyond it, never more than `capacity`
    buffered), pipelined through the node walker.  translate() consumes the
    buffer in order and falls back to the demand path on a mispredict.
    """

    def __init__(self, engine, service, asid, heads, enabled=True,
                 capacity=8, lookahead=4):
        self.engine = engine
        self.service = service
        self.asid = asid
        self.heads = heads
        self.enabled = enabled and lookahead > 0
        self.capacity = capacity
        self.lookahead = lookahead
        self.buf = deque()
        self.consumed = 0
        self.hits = 0
        self.demand_misses = 0
        self.drops = 0
        self.stall_ticks = 0
        # translation currently held at the DMA cursor; accesses that stay
        # within the same page do not advance the prediction buffer
        self._cur_vpn = None
        self._cur_pfn = None
        self.matlb_hit_ticks = engine.domain("mmae").cycles(
            service.cfg.matlb_hit_cycles)
        self._gate = None
        if self.enabled:
            engine.spawn(self._issue_loop())

    def _issue_loop(self):
        walker = self.service.walker
        limit = min(self.capacity, self.lookahead)
        for head in self.heads:
            while len(self.buf) >= limit:
                self._gate = Signal()
                yield self._gate
            entry = _PredictedEntry(head >> PAGE_BITS)
            self.buf.append(entry)
            # walks pipeline through the walker; the reservation timeline
            # paces them, so nothing here waits on walk latency
            _, ready = walker.prewalk_issue()
            self.engine.schedule_at(ready, self._complete, entry)

    def _complete(self, entry):
        entry.pfn = self.service.page_table(self.asid).lookup(entry.vpn)
        entry.ready = True
        entry.sig.fire(self.engine)

    def _advance_gate(self):
        if self._gate is not None and not self._gate.fired:
            gate, self._gate = self._gate, None
            gate.fire(self.engine)

    def translate(self, vaddr):
        """Coroutine: physical address for vaddr, raising TranslationFault
        for pages that resolved unmapped."""
        vpn = vaddr >> PAGE_BITS
        if self.enabled:
            if vpn == self._cur_vpn:
                yield self.matlb_hit_ticks
                self.hits += 1
                if self._cur_pfn is None:
                    raise TranslationFault(vaddr, self.asid)
                return (self._cur_pfn << PAGE_BITS) | (vaddr & (PAGE_SIZE - 1))
            buf = self.buf
            # shed stale or mispredicted heads, in flight or not
            while buf and buf[0].vpn != vpn:
                buf.popleft()
                self.consumed += 1
                self.drops += 1
                self._advance_gate()
            if buf and buf[0].vpn == vpn:
                entry = buf.popleft()
                self.consumed += 1
                self._advance_gate()
                if not entry.ready:
                    t0 = self.engine.now
                    yield entry.sig
                    self.stall_ticks += self.engine.now - t0
                yield self.matlb_hit_ticks
                self.hits += 1
                self._cur_vpn, self._cur_pfn = vpn, entry.pfn
                if entry.pfn is None:
                    raise TranslationFault(vaddr, self.asid)
                return (entry.pfn << PAGE_BITS) | (vaddr & (PAGE_SIZE - 1))
            # cursor is somewhere prediction did not cover
            self.demand_misses += 1
            t0 = self.engine.now
            paddr = yield from self.service.dma_demand_translate(self.asid, vaddr)
            self.stall_ticks += self.engine.now - t0
            self._cur_vpn, self._cur_pfn = vpn, paddr >> PAGE_BITS
            return paddr
        t0 = self.engine.now
        paddr = yield from self.service.dma_demand_translate(self.asid, vaddr)
        self.stall_ticks += self.engine.now - t0
        return paddr
