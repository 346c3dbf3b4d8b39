"""Discrete-event core: integer tick timeline, clock domains, coroutine tasks.

All timestamps are integer ticks of a global base clock chosen as the least
common multiple of the configured domain frequencies, so every domain period
is a whole number of ticks and cross-domain ordering never depends on float
rounding.  Events that fire on the same tick are ordered by schedule sequence
number, which makes runs bit-reproducible.
"""

import heapq
import math
from collections import deque
from fractions import Fraction


class SchedulingInPast(Exception):
    pass


class ProtocolError(Exception):
    """Raised when a component detects an illegal protocol state."""
    pass


class ClockDomain:
    def __init__(self, name, freq_hz, tick_hz):
        if tick_hz % freq_hz != 0:
            raise ValueError("tick base %d not a multiple of %s frequency %d"
                             % (tick_hz, name, freq_hz))
        self.name = name
        self.freq_hz = freq_hz
        self.period_ticks = tick_hz // freq_hz

    def cycles(self, n):
        """Duration of n cycles of this domain, in ticks."""
        return n * self.period_ticks

    def to_cycles(self, ticks):
        """Whole cycles of this domain contained in a tick span."""
        return ticks // self.period_ticks

    def __repr__(self):
        return "ClockDomain(%s, %g GHz)" % (self.name, self.freq_hz / 1e9)


class Signal:
    """Single-shot wakeup: tasks yield a Signal to sleep until fire()."""

    __slots__ = ("_waiters", "fired", "value")

    def __init__(self):
        self._waiters = []
        self.fired = False
        self.value = None

    def fire(self, engine, value=None):
        if self.fired:
            raise ProtocolError("signal fired twice")
        self.fired = True
        self.value = value
        for task in self._waiters:
            engine.schedule(0, task._step, value)
        self._waiters = None


class Gate:
    """FIFO mutex over engine tasks (used for per-line home serialization)."""

    __slots__ = ("_held", "_queue")

    def __init__(self):
        self._held = False
        self._queue = deque()

    def acquire(self):
        """Yieldable: returns a Signal already fired if the gate is free."""
        sig = Signal()
        if not self._held:
            self._held = True
            sig.fired = True      # fast path, no engine round trip
        else:
            self._queue.append(sig)
        return sig

    def release(self, engine):
        if not self._held:
            raise ProtocolError("gate released while free")
        if self._queue:
            self._queue.popleft().fire(engine)
        else:
            self._held = False


class Semaphore:
    """Counting FIFO semaphore (e.g. a DMA outstanding-request window)."""

    __slots__ = ("free", "_queue")

    def __init__(self, slots):
        self.free = slots
        self._queue = deque()

    def acquire(self):
        """Yieldable: a Signal, pre-fired when a slot is immediately free."""
        sig = Signal()
        if self.free > 0:
            self.free -= 1
            sig.fired = True
        else:
            self._queue.append(sig)
        return sig

    def release(self, engine):
        if self._queue:
            self._queue.popleft().fire(engine)
        else:
            self.free += 1


class Task:
    """Coroutine driven by the engine.

    The generator may yield:
      int     -- sleep that many ticks
      Signal  -- sleep until the signal fires; send() gets the fired value
    """

    __slots__ = ("engine", "gen", "done", "done_signal", "result")

    def __init__(self, engine, gen):
        self.engine = engine
        self.gen = gen
        self.done = False
        self.done_signal = None
        self.result = None

    def _finish(self, stop):
        self.done = True
        self.result = stop.value
        if self.done_signal is not None:
            self.done_signal.fire(self.engine, stop.value)

    def _step(self, value):
        try:
            y = self.gen.send(value)
        except StopIteration as stop:
            self._finish(stop)
            return
        eng = self.engine
        while True:
            if type(y) is int:
                eng.schedule(y, self._step, None)
                return
            if isinstance(y, Signal):
                if y.fired:
                    # already satisfied: resume inline to avoid event churn
                    try:
                        y = self.gen.send(y.value)
                        continue
                    except StopIteration as stop:
                        self._finish(stop)
                        return
                y._waiters.append(self)
                return
            raise ProtocolError("task yielded %r" % (y,))

    def join(self):
        """Yieldable that fires when the task's generator returns."""
        if self.done_signal is None:
            self.done_signal = Signal()
            if self.done:
                self.done_signal.fired = True
        return self.done_signal


class Engine:
    def __init__(self, freqs_hz=None, trace_depth=0):
        """freqs_hz: mapping of domain name -> frequency in Hz."""
        freqs_hz = freqs_hz or {}
        self.now = 0
        self._heap = []
        self._seq = 0
        self.events_processed = 0
        if freqs_hz:
            self.tick_hz = math.lcm(*freqs_hz.values())
        else:
            self.tick_hz = 1
        self.domains = {}
        for name, hz in freqs_hz.items():
            self.domains[name] = ClockDomain(name, hz, self.tick_hz)
        self._trace = deque(maxlen=trace_depth) if trace_depth else None

    def domain(self, name):
        return self.domains[name]

    def schedule(self, delay_ticks, fn, arg=None):
        if delay_ticks < 0:
            raise SchedulingInPast("delay %d ticks" % delay_ticks)
        self._seq += 1
        heapq.heappush(self._heap, (self.now + delay_ticks, self._seq, fn, arg))

    def schedule_at(self, time_ticks, fn, arg=None):
        if time_ticks < self.now:
            raise SchedulingInPast("t=%d < now=%d" % (time_ticks, self.now))
        self._seq += 1
        heapq.heappush(self._heap, (time_ticks, self._seq, fn, arg))

    def spawn(self, gen):
        task = Task(self, gen)
        self.schedule(0, task._step, None)
        return task

    def run(self, limit_ticks=None):
        """Drain the event heap; optionally stop once now would pass limit."""
        heap = self._heap
        trace = self._trace
        while heap:
            t, seq, fn, arg = heap[0]
            if limit_ticks is not None and t > limit_ticks:
                break
            heapq.heappop(heap)
            self.now = t
            self.events_processed += 1
            if trace is not None:
                trace.append((t, seq, getattr(fn, "__qualname__", repr(fn))))
            fn(arg)
        if limit_ticks is not None and self.now < limit_ticks:
            self.now = limit_ticks

    def run_until(self, limit_ticks):
        self.run(limit_ticks)

    def idle(self):
        return not self._heap

    # -- time conversions ---------------------------------------------------

    def to_seconds(self, ticks):
        return Fraction(ticks, self.tick_hz)

    def to_picoseconds(self, ticks):
        return Fraction(ticks * 10**12, self.tick_hz)

    def trace_dump(self):
        if self._trace is None:
            return []
        return list(self._trace)
