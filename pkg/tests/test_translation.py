import random

import pytest

from maco_sim.engine import Engine
from maco_sim.translation import (
    PageTable, FrameAllocator, Tlb, TranslationService, StreamTranslator,
    TranslationFault, DoubleMap, predict_page_heads, PAGE_SIZE, PAGE_BITS,
    WALK_LEVELS)

FREQS = {"cpu": 2_200_000_000, "mmae": 2_500_000_000, "noc": 2_000_000_000}


class Cfg:
    l1_dtlb_entries = 48
    stlb_entries = 1024
    l1_tlb_hit_cycles = 1
    stlb_hit_cycles = 4
    ptw_step_cycles = 32
    ptw_interface_cycles = 5
    ptw_pipeline_interval_cycles = 16
    matlb_hit_cycles = 2


def build_service(asids=(0,)):
    eng = Engine(freqs_hz=FREQS)
    tables = {a: PageTable(a) for a in asids}
    svc = TranslationService(eng, Cfg(), tables)
    return eng, svc, tables


def run_coro(eng, gen):
    """Drive a single coroutine to completion, returning its value."""
    box = {}

    def wrapper():
        box["value"] = yield from gen

    eng.spawn(wrapper())
    eng.run()
    return box.get("value")


# -- page-head prediction oracle -------------------------------------------

def heads_oracle(base, rows, row_bytes, row_stride, page_size):
    """Enumerate every byte the walk touches, in order, and keep the first
    byte seen in each page (dropping globally adjacent duplicates)."""
    heads = []
    last_page = None
    for r in range(rows):
        for off in range(row_bytes):
            addr = base + r * row_stride + off
            page = addr // page_size
            if page != last_page:
                heads.append(addr)
                last_page = page
    return heads


def test_heads_full_row_spanning_two_pages():
    # 1024 fp64 elements starting at 0x10000: one 8 KB row covers exactly
    # two 4 KB pages, first bytes 0x10000 and 0x11000
    got = predict_page_heads(0x10000, 1, 8192, 8192, 4096)
    assert got == [0x10000, 0x11000]
    assert got == heads_oracle(0x10000, 1, 8192, 8192, 4096)


def test_heads_unaligned_row():
    got = predict_page_heads(0x10FC0, 1, 128, 128, 4096)
    assert got == [0x10FC0, 0x11000]


def test_heads_small_rows_single_page_each():
    # 64-byte rows strided a page apart: one head per row, at the row start
    got = predict_page_heads(0x20000, 4, 64, 4096, 4096)
    assert got == [0x20000, 0x21000, 0x22000, 0x23000]


def test_heads_adjacent_rows_share_page():
    # 128-byte rows packed back to back: one head per page, not per row
    got = predict_page_heads(0x30000, 8, 128, 128, 4096)
    assert got == [0x30000]
    got = predict_page_heads(0x30F80, 8, 128, 128, 4096)
    assert got == [0x30F80, 0x31000]


def test_heads_match_oracle_randomized():
    rng = random.Random(42)
    for _ in range(300):
        page_size = rng.choice([1024, 4096])
        base = rng.randrange(0, 1 << 30) & ~7
        rows = rng.randrange(1, 12)
        row_bytes = rng.randrange(1, 300) * 8
        row_stride = row_bytes + rng.randrange(0, 64) * 8
        got = predict_page_heads(base, rows, row_bytes, row_stride, page_size)
        want = heads_oracle(base, rows, row_bytes, row_stride, page_size)
        assert got == want, (base, rows, row_bytes, row_stride, page_size)
        # duplicate-free by construction
        assert len(set(got)) == len(got)


# -- page table and TLB -----------------------------------------------------

def test_page_table_map_and_double_map():
    pt = PageTable(0)
    pt.map_page(5, 100)
    assert pt.lookup(5) == 100
    with pytest.raises(DoubleMap):
        pt.map_page(5, 101)
    pt.unmap_page(5)
    assert pt.lookup(5) is None
    pt.map_page(5, 102)


def test_frame_allocator_sequential_and_scattered():
    fa = FrameAllocator(base_frame=10)
    assert fa.alloc(3) == [10, 11, 12]
    fa = FrameAllocator(base_frame=0, rng=random.Random(1))
    a = fa.alloc(20)
    assert len(set(a)) == 20
    assert a == sorted(a)
    b = FrameAllocator(base_frame=0, rng=random.Random(1)).alloc(20)
    assert a == b  # same seed, same frames


def test_tlb_lru_eviction_order():
    tlb = Tlb(3)
    for i in range(3):
        tlb.insert((0, i), i * 10)
    assert tlb.lookup((0, 0)) == 0      # 0 becomes most recent
    tlb.insert((0, 3), 30)              # evicts 1, the true LRU
    assert tlb.lookup((0, 1)) is None
    assert tlb.lookup((0, 0)) == 0
    assert tlb.lookup((0, 2)) == 20
    assert tlb.hits == 3 and tlb.misses == 1


def test_tlb_lru_against_reference_model():
    rng = random.Random(3)
    tlb = Tlb(48)
    ref = []                            # most recent last
    for _ in range(20_000):
        vpn = rng.randrange(120)
        got = tlb.lookup((0, vpn))
        if vpn in ref:
            assert got == vpn
            ref.remove(vpn)
            ref.append(vpn)
        else:
            assert got is None
            tlb.insert((0, vpn), vpn)
            if len(ref) == 48:
                ref.pop(0)
            ref.append(vpn)


# -- translation service timing ---------------------------------------------

def test_cpu_translate_hit_path_cycles():
    eng, svc, tables = build_service()
    tables[0].map_page(0x40, 0x99)
    paddr = run_coro(eng, svc.cpu_translate(0, 0x40123))
    assert paddr == (0x99 << PAGE_BITS) | 0x123
    walk_end = eng.now
    # second access is an L1 DTLB hit: exactly one CPU cycle
    t0 = eng.now
    paddr = run_coro(eng, svc.cpu_translate(0, 0x40456))
    assert paddr == (0x99 << PAGE_BITS) | 0x456
    assert eng.now - t0 == eng.domain("cpu").cycles(1)
    # the first access paid L1 + sTLB + a full 4-level walk
    assert walk_end == eng.domain("cpu").cycles(1 + 4 + WALK_LEVELS * 32)


def test_cpu_translate_fault_on_unmapped():
    eng, svc, _ = build_service()

    def driver():
        with pytest.raises(TranslationFault):
            yield from svc.cpu_translate(0, 0xdead000)

    eng.spawn(driver())
    eng.run()
    assert svc.walker.demand_walks == 1


def test_l1_capacity_forces_stlb_hits():
    eng, svc, tables = build_service()
    for vpn in range(49):
        tables[0].map_page(vpn, 0x1000 + vpn)
    for vpn in range(49):
        run_coro(eng, svc.cpu_translate(0, vpn << PAGE_BITS))
    assert svc.walker.demand_walks == 49
    # vpn 0 was evicted from the 48-entry L1 but lives in the sTLB
    l2_hits_before = svc.l2.hits
    t0 = eng.now
    run_coro(eng, svc.cpu_translate(0, 0))
    assert svc.l2.hits == l2_hits_before + 1
    assert eng.now - t0 == eng.domain("cpu").cycles(1 + 4)


def test_dma_demand_translate_inserts_stlb_only():
    eng, svc, tables = build_service()
    tables[0].map_page(0x8, 0x77)
    run_coro(eng, svc.dma_demand_translate(0, 0x8000))
    assert svc.l2.lookup((0, 0x8)) == 0x77
    assert svc.l1.lookup((0, 0x8)) is None


def test_walker_serializes_demand_walks():
    eng, svc, tables = build_service()
    tables[0].map_page(1, 1)
    tables[0].map_page(2, 2)
    ends = []

    def walk(vpn):
        yield from svc.walker.demand_walk(0, vpn)
        ends.append(eng.now)

    eng.spawn(walk(1))
    eng.spawn(walk(2))
    eng.run()
    walk_ticks = eng.domain("cpu").cycles(WALK_LEVELS * 32)
    assert ends == [walk_ticks, 2 * walk_ticks]


def test_prewalk_pipelining_interval():
    eng, svc, _ = build_service()
    slots = [svc.walker.prewalk_issue() for _ in range(4)]
    interval = eng.domain("mmae").cycles(16)
    walk = eng.domain("cpu").cycles(WALK_LEVELS * 32)
    for i, (start, ready) in enumerate(slots):
        assert start == i * interval
        assert ready == start + walk


# -- stream translator ------------------------------------------------------

def build_stream(heads, lookahead=4, capacity=8, enabled=True, asid=0):
    eng, svc, tables = build_service(asids=(asid,))
    return eng, svc, tables, lambda: StreamTranslator(
        eng, svc, asid, heads, enabled=enabled, capacity=capacity,
        lookahead=lookahead)


def test_stream_translator_follows_prediction_no_stall_when_warm():
    heads = [0x10000, 0x11000, 0x12000]
    eng, svc, tables, mk = build_stream(heads)
    for vpn in (0x10, 0x11, 0x12):
        tables[0].map_page(vpn, vpn + 0x500)
    st = mk()
    results = []

    def dma():
        yield eng.domain("mmae").cycles(400)   # warmup, walks complete
        for va in (0x10000, 0x10200, 0x11000, 0x11E00, 0x12000):
            pa = yield from st.translate(va)
            results.append(pa)
            yield eng.domain("mmae").cycles(46)

    eng.spawn(dma())
    eng.run()
    assert results == [(0x510 << 12) | 0x000, (0x510 << 12) | 0x200,
                       (0x511 << 12) | 0x000, (0x511 << 12) | 0xE00,
                       (0x512 << 12) | 0x000]
    assert st.stall_ticks == 0
    assert st.hits == 5
    assert st.demand_misses == 0
    assert svc.walker.prewalks == 3


def test_stream_translator_stalls_when_consumed_cold():
    heads = [0x10000]
    eng, svc, tables, mk = build_stream(heads)
    tables[0].map_page(0x10, 0x20)
    st = mk()
    stalls = []

    def dma():
        # consume immediately: the predicted walk is still in flight
        pa = yield from st.translate(0x10000)
        stalls.append((eng.now, st.stall_ticks, pa))

    eng.spawn(dma())
    eng.run()
    _, stall, pa = stalls[0]
    assert pa == 0x20000
    assert stall > 0


def test_stream_translator_drops_mispredicted_heads():
    # prediction says pages 0x10, 0x11, 0x12 but the cursor skips to 0x12
    heads = [0x10000, 0x11000, 0x12000]
    eng, svc, tables, mk = build_stream(heads)
    for vpn in (0x10, 0x11, 0x12):
        tables[0].map_page(vpn, vpn)
    st = mk()

    def dma():
        yield eng.domain("mmae").cycles(600)
        pa = yield from st.translate(0x12000)
        assert pa == 0x12000

    eng.spawn(dma())
    eng.run()
    assert st.drops == 2
    assert st.hits == 1
    assert st.demand_misses == 0


def test_stream_translator_demand_fallback_off_prediction():
    heads = [0x10000]
    eng, svc, tables, mk = build_stream(heads)
    tables[0].map_page(0x10, 0x10)
    tables[0].map_page(0x99, 0x99)
    st = mk()

    def dma():
        yield eng.domain("mmae").cycles(600)
        pa = yield from st.translate(0x99000)   # never predicted
        assert pa == 0x99000

    eng.spawn(dma())
    eng.run()
    assert st.demand_misses == 1
    assert st.stall_ticks > 0


def test_stream_translator_defers_fault_to_consumption():
    heads = [0x10000, 0x66000]
    eng, svc, tables, mk = build_stream(heads)
    tables[0].map_page(0x10, 0x10)   # 0x66 left unmapped
    st = mk()
    seen = []

    def dma():
        yield eng.domain("mmae").cycles(600)
        pa = yield from st.translate(0x10000)
        seen.append(pa)
        try:
            yield from st.translate(0x66000)
        except TranslationFault as exc:
            seen.append("fault@0x%x" % exc.vaddr)

    eng.spawn(dma())
    eng.run()
    # the unmapped prediction did not fault eagerly; only its use did
    assert seen == [0x10000, "fault@0x66000"]


def test_stream_translator_lookahead_bounds_outstanding():
    heads = [0x10000 + i * 0x1000 for i in range(64)]
    eng, svc, tables, mk = build_stream(heads, lookahead=4)
    for i in range(64):
        tables[0].map_page(0x10 + i, 0x10 + i)
    st = mk()
    eng.run_until(eng.domain("mmae").cycles(10_000))
    # with nothing consuming, prediction never runs past the window
    assert svc.walker.prewalks == 4
    assert len(st.buf) == 4


def test_stream_translator_disabled_uses_demand_path():
    heads = [0x10000]
    eng, svc, tables, mk = build_stream(heads, enabled=False)
    tables[0].map_page(0x10, 0x44)
    st = mk()

    def dma():
        pa = yield from st.translate(0x10400)
        assert pa == 0x44400

    eng.spawn(dma())
    eng.run()
    assert svc.walker.prewalks == 0
    assert svc.walker.demand_walks == 1
    assert st.stall_ticks > 0
