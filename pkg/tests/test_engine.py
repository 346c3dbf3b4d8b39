import pytest
from fractions import Fraction

from maco_sim.engine import (Engine, Signal, Gate, SchedulingInPast,
                             ProtocolError)

FREQS = {"cpu": 2_200_000_000, "mmae": 2_500_000_000, "noc": 2_000_000_000}


def make_engine():
    return Engine(freqs_hz=FREQS)


def test_tick_base_is_exact_for_all_domains():
    eng = make_engine()
    assert eng.tick_hz == 110_000_000_000
    assert eng.domain("cpu").period_ticks == 50
    assert eng.domain("mmae").period_ticks == 44
    assert eng.domain("noc").period_ticks == 55


def test_cycle_to_time_examples():
    eng = make_engine()
    # 5 cycles at 2.5 GHz is exactly 2000 ps
    t = eng.domain("mmae").cycles(5)
    assert eng.to_picoseconds(t) == 2000
    # 3 cycles at 2.0 GHz is exactly 1500 ps
    t = eng.domain("noc").cycles(3)
    assert eng.to_picoseconds(t) == 1500
    # 11 cycles at 2.2 GHz is exactly 5 ns
    t = eng.domain("cpu").cycles(11)
    assert eng.to_picoseconds(t) == 5000


def test_to_seconds_is_exact_fraction():
    eng = make_engine()
    assert eng.to_seconds(eng.domain("cpu").cycles(1)) == Fraction(1, 2_200_000_000)


def test_event_ordering_same_tick_fifo():
    eng = make_engine()
    seen = []
    eng.schedule(10, seen.append, "a")
    eng.schedule(10, seen.append, "b")
    eng.schedule(5, seen.append, "c")
    eng.schedule(10, seen.append, "d")
    eng.run()
    assert seen == ["c", "a", "b", "d"]


def test_schedule_in_past_rejected():
    eng = make_engine()
    with pytest.raises(SchedulingInPast):
        eng.schedule(-1, lambda _: None)
    eng.schedule(100, lambda _: None)
    eng.run()
    with pytest.raises(SchedulingInPast):
        eng.schedule_at(50, lambda _: None)


def test_run_until_stops_and_resumes():
    eng = make_engine()
    seen = []
    eng.schedule(100, seen.append, 1)
    eng.schedule(300, seen.append, 2)
    eng.run_until(200)
    assert seen == [1]
    assert eng.now == 200
    eng.run()
    assert seen == [1, 2]
    assert eng.now == 300


def test_task_sleep_and_signal():
    eng = make_engine()
    log = []
    sig = Signal()

    def producer():
        yield 70
        sig.fire(eng, "payload")

    def consumer():
        got = yield sig
        log.append((eng.now, got))

    eng.spawn(consumer())
    eng.spawn(producer())
    eng.run()
    assert log == [(70, "payload")]


def test_signal_fired_before_wait_resumes_inline():
    eng = make_engine()
    log = []
    sig = Signal()
    sig.fire(eng, 42)

    def waiter():
        v = yield sig
        log.append((eng.now, v))

    eng.spawn(waiter())
    eng.run()
    assert log == [(0, 42)]


def test_signal_double_fire_is_protocol_error():
    eng = make_engine()
    sig = Signal()
    sig.fire(eng)
    with pytest.raises(ProtocolError):
        sig.fire(eng)


def test_gate_fifo_order():
    eng = make_engine()
    order = []
    gate = Gate()

    def worker(name, hold):
        yield gate.acquire()
        order.append(("in", name, eng.now))
        yield hold
        gate.release(eng)

    def spawn_all():
        eng.spawn(worker("a", 100))
        yield 10
        eng.spawn(worker("b", 100))
        eng.spawn(worker("c", 100))

    eng.spawn(spawn_all())
    eng.run()
    assert [x[1] for x in order] == ["a", "b", "c"]
    # b waited for a's release, c for b's
    assert order[1][2] == 100
    assert order[2][2] == 200


def test_task_join():
    eng = make_engine()
    log = []

    def child():
        yield 330
        log.append("child done")

    def parent():
        t = eng.spawn(child())
        yield t.join()
        log.append(("parent resumed", eng.now))

    eng.spawn(parent())
    eng.run()
    assert log == ["child done", ("parent resumed", 330)]


def test_determinism_same_program_same_event_count():
    def drive():
        eng = make_engine()
        fired = []

        def proc(name, period):
            for i in range(50):
                yield period
                fired.append((eng.now, name, i))

        eng.spawn(proc("x", eng.domain("cpu").cycles(3)))
        eng.spawn(proc("y", eng.domain("mmae").cycles(3)))
        eng.spawn(proc("z", eng.domain("noc").cycles(3)))
        eng.run()
        return fired, eng.events_processed

    a = drive()
    b = drive()
    assert a == b
