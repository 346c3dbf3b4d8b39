"""Memory system: functional backing store, private caches, distributed
system cache with a MOESI directory at each home slice.

Physical lines are 64 bytes.  Consecutive 512-byte stripes interleave across
the 16 home slices (one per mesh router), so paddr bits [12:9] select the
slice and a whole stripe always lands on one slice; bulk engine requests are
issued per stripe for that reason.  Each home slice serializes its requests
on one queue, which makes the home the coherence serialization point: the
directory state observed between transactions is the global truth.

The L3 is non-inclusive.  Private dirty evictions write back into the home
slice; lines granted exclusively live only in the owner's cache until
recalled.  Engine-side accesses bypass the private caches entirely.

A stale writeback (overtaken by a recall that already pulled the data) is
recognized at the home because its sender no longer matches the recorded
owner, and is dropped.
"""

from collections import OrderedDict, deque

from .engine import Signal, ProtocolError
from .noc import REQUEST, RESPONSE

LINE = 64

# private copy states
M = "M"
O = "O"
E = "E"
S = "S"

# request kinds
GETS = "GetS"
GETM = "GetM"
PUTM = "PutM"           # eviction writeback, carries data + dirty flag
PUTS = "PutS"           # clean sharer eviction notice
READ_U = "ReadU"        # engine bulk read, uncached
WRITE_U = "WriteU"      # engine bulk write, uncached
STASH = "Stash"
LOCK = "Lock"
UNLOCK = "Unlock"

PROBE_DATA = "ProbeData"    # downgrade owner, pull data
PROBE_SNOOP = "ProbeSnoop"  # pull data, owner state unchanged
PROBE_INV = "ProbeInv"      # invalidate, pull data if dirty


class MemoryFault(Exception):
    """Access to a poisoned physical range (bus abort)."""
    pass


class LockCapacity(Exception):
    pass


class FunctionalMemory:
    """Sparse physical memory; unwritten bytes read as zero."""

    def __init__(self, frame_bytes=4096):
        self.frame_bytes = frame_bytes
        self.frames = {}
        self.poisoned = set()       # frame numbers that abort on access

    def _frame(self, fno):
        f = self.frames.get(fno)
        if f is None:
            f = bytearray(self.frame_bytes)
            self.frames[fno] = f
        return f

    def check_poison(self, paddr, n):
        fb = self.frame_bytes
        for fno in range(paddr // fb, (paddr + n - 1) // fb + 1):
            if fno in self.poisoned:
                raise MemoryFault("poisoned frame 0x%x" % fno)

    def read(self, paddr, n):
        fb = self.frame_bytes
        out = bytearray(n)
        pos = 0
        while pos < n:
            fno, off = divmod(paddr + pos, fb)
            take = min(n - pos, fb - off)
            frame = self.frames.get(fno)
            if frame is not None:
                out[pos:pos + take] = frame[off:off + take]
            pos += take
        return bytes(out)

    def write(self, paddr, data):
        fb = self.frame_bytes
        pos = 0
        n = len(data)
        while pos < n:
            fno, off = divmod(paddr + pos, fb)
            take = min(n - pos, fb - off)
            self._frame(fno)[off:off + take] = data[pos:pos + take]
            pos += take


class DirLine:
    __slots__ = ("owner", "owner_excl", "sharers", "l3_data", "l3_dirty",
                 "locked")

    def __init__(self):
        self.owner = None
        self.owner_excl = False     # True: granted E (may silently be M)
        self.sharers = set()
        self.l3_data = None
        self.l3_dirty = False
        self.locked = False

    def unused(self):
        return (self.owner is None and not self.sharers
                and self.l3_data is None and not self.locked)


class SliceStats:
    __slots__ = ("l3_hits", "l3_misses", "c2c", "mem_reads", "mem_writes",
                 "recalls", "invalidations", "stash_installs", "stash_hits",
                 "lock_denials", "requests", "evictions")

    def __init__(self):
        for name in self.__slots__:
            setattr(self, name, 0)


class HomeSlice:
    def __init__(self, engine, noc, slice_id, mem, cfg, probe_targets):
        self.engine = engine
        self.noc = noc
        self.slice_id = slice_id    # == mesh node hosting this slice
        self.mem = mem
        self.cfg = cfg
        self.probe_targets = probe_targets      # node -> PrivateCache
        self.dir = {}
        self.l3_sets = {}
        self.num_sets = (cfg.l3_slice_kb * 1024) // LINE // cfg.l3_ways
        self.max_locked = int(cfg.l3_ways * cfg.lock_way_fraction)
        mmae = engine.domain("mmae")
        self.bank_ticks = mmae.cycles(cfg.l3_bank_interval_cycles)
        self.hit_ticks = mmae.cycles(cfg.l3_hit_cycles)
        self.mem_ticks = mmae.cycles(cfg.mem_latency_cycles)
        self.stats = SliceStats()
        self.eviction_log = None        # set to a list to record victims
        self.queue = deque()
        self._wake = None
        engine.spawn(self._loop())

    # -- bookkeeping --------------------------------------------------------

    def dir_line(self, line):
        d = self.dir.get(line)
        if d is None:
            d = DirLine()
            self.dir[line] = d
        return d

    def _maybe_drop(self, line, d):
        if d.unused():
            self.dir.pop(line, None)

    def set_of(self, line):
        slice_line = ((line >> 7) << 3) | (line & 7)
        return slice_line % self.num_sets

    def _set(self, line):
        idx = self.set_of(line)
        s = self.l3_sets.get(idx)
        if s is None:
            s = OrderedDict()
            self.l3_sets[idx] = s
        return s

    def locked_in_set(self, idx):
        s = self.l3_sets.get(idx, ())
        return sum(1 for ln in s if self.dir[ln].locked)

    def _install_l3(self, line, data, dirty):
        d = self.dir_line(line)
        sset = self._set(line)
        if d.l3_data is None:
            if len(sset) >= self.cfg.l3_ways:
                self._evict_one(sset)
            sset[line] = True
        else:
            sset.move_to_end(line)
        d.l3_data = data
        d.l3_dirty = dirty or d.l3_dirty
        return d

    def _touch_l3(self, line):
        self._set(line).move_to_end(line)

    def _evict_one(self, sset):
        victim = None
        for ln in sset:             # insertion/touch order = LRU first
            if not self.dir[ln].locked:
                victim = ln
                break
        if victim is None:
            raise ProtocolError("L3 set fully locked, no victim")
        del sset[victim]
        vd = self.dir[victim]
        self.stats.evictions += 1
        if self.eviction_log is not None:
            self.eviction_log.append((victim, vd.locked))
        if vd.l3_dirty:
            self.mem.write(victim * LINE, vd.l3_data)
            self.stats.mem_writes += 1
        vd.l3_data = None
        vd.l3_dirty = False
        self._maybe_drop(victim, vd)

    def drop_l3_copy(self, line, d):
        if d.l3_data is not None:
            sset = self.l3_sets.get(self.set_of(line))
            if sset is not None:
                sset.pop(line, None)
            d.l3_data = None
            d.l3_dirty = False

    # -- service loop -------------------------------------------------------

    def enqueue(self, msg):
        self.queue.append(msg)
        if self._wake is not None and not self._wake.fired:
            wake, self._wake = self._wake, None
            wake.fire(self.engine)

    def _loop(self):
        while True:
            while not self.queue:
                self._wake = Signal()
                yield self._wake
            msg = self.queue.popleft()
            yield from self._serve(msg)

    def _probe(self, target_node, kind, line):
        """Round trip to a private cache; returns (data, dirty)."""
        sig = Signal()
        cache = self.probe_targets[target_node]

        def deliver(_):
            data, dirty = cache.handle_probe(kind, line)
            self.noc.send(target_node, self.slice_id, LINE if data else 0,
                          RESPONSE, lambda __: sig.fire(self.engine, (data, dirty)))

        self.noc.send(self.slice_id, target_node, 0, REQUEST, deliver)
        result = yield sig
        return result

    def _recall_and_install(self, line, d):
        """Coroutine: pull the owner's copy into the L3, downgrading the
        owner to O (dirty) or S (clean) so exclusivity never coexists with
        an L3 copy."""
        ldata, dirty = yield from self._probe(d.owner, PROBE_DATA, line)
        self.stats.recalls += 1
        self.stats.c2c += 1
        if dirty:
            d.owner_excl = False
        else:
            d.sharers.add(d.owner)
            d.owner = None
            d.owner_excl = False
        self._install_l3(line, ldata, dirty)
        return ldata

    def _line_data_for_read(self, line, d, counters):
        """Coroutine: current data for one line, counting its source.

        Leaves owner state alone for snoops; the caller decides on
        downgrades separately.
        """
        if d.owner is not None:
            data, dirty = yield from self._probe(d.owner, PROBE_SNOOP, line)
            self.stats.c2c += 1
            counters["c2c"] += 1
            return data
        if d.l3_data is not None:
            self.stats.l3_hits += 1
            counters["l3"] += 1
            self._touch_l3(line)
            return bytes(d.l3_data)
        self.stats.l3_misses += 1
        self.stats.mem_reads += 1
        counters["mem"] += 1
        return self.mem.read(line * LINE, LINE)

    def _serve(self, msg):
        kind, paddr, nlines, data, req_node, sig = msg
        self.stats.requests += 1
        if self.bank_ticks:
            yield self.bank_ticks
        line0 = paddr // LINE
        counters = {"l3": 0, "c2c": 0, "mem": 0, "error": None}
        reply = None
        # array/memory access time is charged on the response path so the
        # slice pipeline can accept the next request after bank issue
        delay = 0

        if kind == WRITE_U:
            span = data[0] + len(data[1])
        else:
            span = max(nlines, 1) * LINE
        try:
            self.mem.check_poison(paddr, span)
        except MemoryFault:
            counters["error"] = "data_abort"
            self._respond(req_node, sig, 0, counters, None)
            return

        if kind == GETS:
            out = bytearray()
            grant = S
            for i in range(nlines):
                line = line0 + i
                d = self.dir_line(line)
                if d.owner is not None and d.owner != req_node:
                    ldata = yield from self._recall_and_install(line, d)
                    counters["c2c"] += 1
                    d.sharers.add(req_node)
                    out += ldata
                elif d.l3_data is not None:
                    self.stats.l3_hits += 1
                    counters["l3"] += 1
                    self._touch_l3(line)
                    d.sharers.add(req_node)
                    out += d.l3_data
                else:
                    self.stats.l3_misses += 1
                    self.stats.mem_reads += 1
                    counters["mem"] += 1
                    ldata = self.mem.read(line * LINE, LINE)
                    if not d.sharers and d.owner is None and nlines == 1:
                        # sole reader: exclusive grant, line lives only in
                        # the private cache (non-inclusive)
                        d.owner = req_node
                        d.owner_excl = True
                        grant = E
                    else:
                        self._install_l3(line, ldata, False)
                        d.sharers.add(req_node)
                    out += ldata
            delay = self.hit_ticks + (self.mem_ticks if counters["mem"] else 0)
            reply = (grant, bytes(out))

        elif kind == GETM:
            out = bytearray()
            for i in range(nlines):
                line = line0 + i
                d = self.dir_line(line)
                if d.owner is not None and d.owner != req_node:
                    ldata, dirty = yield from self._probe(d.owner, PROBE_INV, line)
                    self.stats.recalls += 1
                    self.stats.invalidations += 1
                    counters["c2c"] += 1
                    d.owner = None
                    d.owner_excl = False
                elif d.l3_data is not None:
                    self.stats.l3_hits += 1
                    counters["l3"] += 1
                    ldata = bytes(d.l3_data)
                else:
                    self.stats.l3_misses += 1
                    self.stats.mem_reads += 1
                    counters["mem"] += 1
                    ldata = self.mem.read(line * LINE, LINE)
                for sh in sorted(d.sharers):
                    if sh != req_node:
                        yield from self._probe(sh, PROBE_INV, line)
                        self.stats.invalidations += 1
                d.sharers.clear()
                # exclusive data must not linger in the L3
                self.drop_l3_copy(line, d)
                d.owner = req_node
                d.owner_excl = True
                out += ldata
            delay = self.hit_ticks + (self.mem_ticks if counters["mem"] else 0)
            reply = (M, bytes(out))

        elif kind == PUTM:
            line = line0
            d = self.dir_line(line)
            if d.owner == req_node:
                d.owner = None
                d.owner_excl = False
                wb_data, dirty = data
                if dirty:
                    self._install_l3(line, wb_data, True)
                self._maybe_drop(line, d)
            # else: overtaken by a recall; nothing to do
            delay = self.hit_ticks
            reply = ("ack", b"")

        elif kind == PUTS:
            d = self.dir.get(line0)
            if d is not None:
                d.sharers.discard(req_node)
                self._maybe_drop(line0, d)
            reply = ("ack", b"")

        elif kind == READ_U:
            out = bytearray()
            for i in range(nlines):
                line = line0 + i
                d = self.dir_line(line)
                ldata = yield from self._line_data_for_read(line, d, counters)
                if d.owner is None and d.l3_data is None:
                    self._install_l3(line, ldata, False)
                out += ldata
            delay = self.hit_ticks + (self.mem_ticks if counters["mem"] else 0)
            reply = ("data", bytes(out))

        elif kind == WRITE_U:
            # byte range may start/end mid-line: offsets carried with data
            off0, payload = data
            end = off0 + len(payload)
            nlines = (end + LINE - 1) // LINE
            for i in range(nlines):
                line = line0 + i
                d = self.dir_line(line)
                if d.owner is not None:
                    yield from self._probe(d.owner, PROBE_INV, line)
                    self.stats.recalls += 1
                    self.stats.invalidations += 1
                    d.owner = None
                    d.owner_excl = False
                for sh in sorted(d.sharers):
                    yield from self._probe(sh, PROBE_INV, line)
                    self.stats.invalidations += 1
                d.sharers.clear()
                lo = max(off0, i * LINE)
                hi = min(end, (i + 1) * LINE)
                if hi - lo == LINE and lo == i * LINE:
                    ldata = bytes(payload[lo - off0:hi - off0])
                else:
                    # partial line: merge over the current contents
                    cur = bytearray(d.l3_data if d.l3_data is not None
                                    else self.mem.read(line * LINE, LINE))
                    cur[lo - i * LINE:hi - i * LINE] = payload[lo - off0:hi - off0]
                    ldata = bytes(cur)
                self._install_l3(line, ldata, True)
            delay = self.hit_ticks
            reply = ("ack", b"")

        elif kind == STASH:
            for i in range(nlines):
                line = line0 + i
                d = self.dir_line(line)
                if d.l3_data is not None:
                    self.stats.stash_hits += 1
                    self._touch_l3(line)
                elif d.owner is not None:
                    yield from self._recall_and_install(line, d)
                    counters["c2c"] += 1
                    self.stats.stash_installs += 1
                else:
                    self.stats.mem_reads += 1
                    counters["mem"] += 1
                    self._install_l3(line, self.mem.read(line * LINE, LINE), False)
                    self.stats.stash_installs += 1
            delay = self.hit_ticks + (self.mem_ticks if counters["mem"] else 0)
            reply = ("ack", b"")

        elif kind == LOCK:
            # precheck: refuse atomically if any set would exceed the cap
            per_set = {}
            for i in range(nlines):
                line = line0 + i
                d = self.dir.get(line)
                if d is None or not d.locked:
                    idx = self.set_of(line)
                    per_set[idx] = per_set.get(idx, 0) + 1
            ok = True
            for idx, extra in per_set.items():
                if self.locked_in_set(idx) + extra > self.max_locked:
                    ok = False
                    break
            if not ok:
                self.stats.lock_denials += 1
                counters["error"] = "lock_capacity"
            else:
                for i in range(nlines):
                    line = line0 + i
                    d = self.dir_line(line)
                    if d.l3_data is None:
                        if d.owner is not None:
                            yield from self._recall_and_install(line, d)
                            counters["c2c"] += 1
                        else:
                            self.stats.mem_reads += 1
                            counters["mem"] += 1
                            self._install_l3(
                                line, self.mem.read(line * LINE, LINE), False)
                    d.locked = True
                delay = self.hit_ticks + (self.mem_ticks if counters["mem"] else 0)
            reply = ("ack", b"")

        elif kind == UNLOCK:
            for i in range(nlines):
                d = self.dir.get(line0 + i)
                if d is not None:
                    d.locked = False
                    self._maybe_drop(line0 + i, d)
            reply = ("ack", b"")

        else:
            raise ProtocolError("home slice got %r" % kind)

        self._respond(req_node, sig, len(reply[1]) if reply else 0,
                      counters, reply, delay)

    def _respond(self, req_node, sig, data_bytes, counters, reply, delay=0):
        def send(_=None):
            self.noc.send(self.slice_id, req_node, data_bytes, RESPONSE,
                          lambda __: sig.fire(self.engine, (reply, counters)))

        if delay:
            self.engine.schedule(delay, send)
        else:
            send()


class CacheLine:
    __slots__ = ("state", "data", "dirty")

    def __init__(self, state, data):
        self.state = state
        self.data = bytearray(data)
        self.dirty = False


class PrivateCache:
    """Per-core L1D + L2.  Coherence state is tracked at the L2, which holds
    every private copy; the L1 is a latency filter over it."""

    def __init__(self, engine, noc, node, cfg, homes):
        self.engine = engine
        self.noc = noc
        self.node = node
        self.cfg = cfg
        self.homes = homes
        self.l2_sets_n = (cfg.l2_kb * 1024) // LINE // cfg.l2_ways
        self.l1_sets_n = (cfg.l1d_kb * 1024) // LINE // cfg.l1d_ways
        self.l2 = {}
        self.l1 = {}
        cpu = engine.domain("cpu")
        self.l1_ticks = cpu.cycles(cfg.l1_hit_cycles)
        self.l2_ticks = cpu.cycles(cfg.l2_hit_cycles)
        self.l1_hits = 0
        self.l2_hits = 0
        self.misses = 0
        self.l3_hit_lines = 0
        self.c2c_lines = 0
        self.mem_lines = 0
        self.writebacks = 0

    def _slice_for(self, paddr):
        return (paddr // self.cfg.stripe_bytes) % self.cfg.l3_slices

    def _l2_set(self, line):
        idx = line % self.l2_sets_n
        s = self.l2.get(idx)
        if s is None:
            s = OrderedDict()
            self.l2[idx] = s
        return s

    def _l1_set(self, line):
        idx = line % self.l1_sets_n
        s = self.l1.get(idx)
        if s is None:
            s = OrderedDict()
            self.l1[idx] = s
        return s

    def lookup(self, line):
        s = self.l2.get(line % self.l2_sets_n)
        if s is None:
            return None
        return s.get(line)

    def _request(self, kind, paddr, nlines=1, data=None):
        sig = Signal()
        home = self.homes[self._slice_for(paddr)]
        payload = 0
        if kind == PUTM and data is not None and data[1]:
            payload = LINE
        self.noc.send(self.node, home.slice_id, payload, REQUEST,
                      home.enqueue, (kind, paddr, nlines, data, self.node, sig))
        result = yield sig
        return result

    def _evict_for(self, line):
        sset = self._l2_set(line)
        if len(sset) < self.cfg.l2_ways:
            return
        # keep the victim resident until the home acknowledges, so a probe
        # crossing the writeback still finds the data; the home drops the
        # then-stale writeback by its owner check
        victim_line = next(iter(sset))
        victim = sset[victim_line]
        if victim.state in (M, O) or victim.dirty:
            self.writebacks += 1
            yield from self._request(PUTM, victim_line * LINE, 1,
                                     (bytes(victim.data), True))
        elif victim.state == E:
            yield from self._request(PUTM, victim_line * LINE, 1, (None, False))
        else:
            yield from self._request(PUTS, victim_line * LINE)
        self._l2_set(victim_line).pop(victim_line, None)
        self._l1_set(victim_line).pop(victim_line, None)

    def access(self, paddr, nbytes, write=False, data=None):
        """Coroutine: timed access; returns bytes for reads.

        Spans lines; each line goes through the hierarchy independently.
        """
        out = bytearray()
        end = paddr + nbytes
        pos = paddr
        while pos < end:
            line = pos // LINE
            take = min(end, (line + 1) * LINE) - pos
            off = pos - line * LINE
            cl = self.lookup(line)
            if cl is not None:
                in_l1 = line in self._l1_set(line)
                yield self.l1_ticks if in_l1 else self.l1_ticks + self.l2_ticks
                if in_l1:
                    self.l1_hits += 1
                else:
                    self.l2_hits += 1
                    self._install_l1(line)
                self._l2_set(line).move_to_end(line)
                if write:
                    if cl.state == S or cl.state == O:
                        reply, counters = yield from self._request(GETM, line * LINE)
                        self._count(counters)
                        cl.state = M
                    elif cl.state == E:
                        cl.state = M
                    cl.dirty = True
                    cl.data[off:off + take] = data[pos - paddr:pos - paddr + take]
                else:
                    out += cl.data[off:off + take]
            else:
                self.misses += 1
                yield self.l1_ticks + self.l2_ticks
                kind = GETM if write else GETS
                reply, counters = yield from self._request(kind, line * LINE)
                self._count(counters)
                if counters["error"]:
                    raise MemoryFault(counters["error"])
                state, ldata = reply
                yield from self._evict_for(line)
                cl = CacheLine(state, ldata)
                self._l2_set(line)[line] = cl
                self._install_l1(line)
                if write:
                    cl.state = M
                    cl.dirty = True
                    cl.data[off:off + take] = data[pos - paddr:pos - paddr + take]
                else:
                    out += cl.data[off:off + take]
            pos += take
        return bytes(out)

    def _install_l1(self, line):
        s = self._l1_set(line)
        if line in s:
            s.move_to_end(line)
            return
        if len(s) >= self.cfg.l1d_ways:
            s.popitem(last=False)
        s[line] = True

    def _count(self, counters):
        self.l3_hit_lines += counters["l3"]
        self.c2c_lines += counters["c2c"]
        self.mem_lines += counters["mem"]

    def handle_probe(self, kind, line):
        """Called at probe delivery; state change is atomic at this event."""
        cl = self.lookup(line)
        if cl is None:
            return None, False
        data = bytes(cl.data)
        dirty = cl.dirty or cl.state in (M, O)
        if kind == PROBE_SNOOP:
            return data, dirty
        if kind == PROBE_DATA:
            if cl.state in (M, E):
                cl.state = O if dirty else S
            return data, dirty
        if kind == PROBE_INV:
            self._l2_set(line).pop(line, None)
            self._l1_set(line).pop(line, None)
            return data, dirty
        raise ProtocolError("probe %r" % kind)


class UncachedPort:
    """Engine-side access port: bulk, line-granular, no private caching.

    Callers split transfers so one request never crosses a 512-byte stripe
    (and therefore never crosses slices).
    """

    def __init__(self, engine, noc, node, cfg, homes):
        self.engine = engine
        self.noc = noc
        self.node = node
        self.cfg = cfg
        self.homes = homes
        self.l3_hit_lines = 0
        self.c2c_lines = 0
        self.mem_lines = 0
        self.requests = 0

    def _home(self, paddr):
        return self.homes[(paddr // self.cfg.stripe_bytes) % self.cfg.l3_slices]

    def _request(self, kind, paddr, nlines, data=None):
        self.requests += 1
        sig = Signal()
        home = self._home(paddr)
        payload = len(data[1]) if kind == WRITE_U else 0
        self.noc.send(self.node, home.slice_id, payload, REQUEST,
                      home.enqueue, (kind, paddr, nlines, data, self.node, sig))
        reply, counters = yield sig
        self.l3_hit_lines += counters["l3"]
        self.c2c_lines += counters["c2c"]
        self.mem_lines += counters["mem"]
        if counters["error"] == "data_abort":
            raise MemoryFault("data abort at 0x%x" % paddr)
        if counters["error"] == "lock_capacity":
            raise LockCapacity("lock capacity at 0x%x" % paddr)
        return reply

    def _stripes(self, paddr, nbytes):
        stripe = self.cfg.stripe_bytes
        pos = paddr
        end = paddr + nbytes
        while pos < end:
            take = min(stripe - pos % stripe, end - pos)
            yield pos, take
            pos += take

    def read(self, paddr, nbytes):
        """Coroutine: bulk read; returns the requested bytes."""
        out = bytearray()
        for pos, take in self._stripes(paddr, nbytes):
            line0 = pos // LINE
            nlines = (pos + take - 1) // LINE - line0 + 1
            reply = yield from self._request(READ_U, line0 * LINE, nlines)
            off = pos - line0 * LINE
            out += reply[1][off:off + take]
        return bytes(out)

    def write(self, paddr, data):
        data = bytes(data)
        for pos, take in self._stripes(paddr, len(data)):
            line0 = pos // LINE
            chunk = data[pos - paddr:pos - paddr + take]
            yield from self._request(WRITE_U, line0 * LINE, 0,
                                     (pos - line0 * LINE, chunk))

    def stash(self, paddr, nbytes):
        for pos, take in self._stripes(paddr, nbytes):
            line0 = pos // LINE
            nlines = (pos + take - 1) // LINE - line0 + 1
            yield from self._request(STASH, line0 * LINE, nlines)

    def lock(self, paddr, nbytes):
        """Pin lines resident; capacity refusal is atomic per stripe."""
        for pos, take in self._stripes(paddr, nbytes):
            line0 = pos // LINE
            nlines = (pos + take - 1) // LINE - line0 + 1
            yield from self._request(LOCK, line0 * LINE, nlines)

    def unlock(self, paddr, nbytes):
        for pos, take in self._stripes(paddr, nbytes):
            line0 = pos // LINE
            nlines = (pos + take - 1) // LINE - line0 + 1
            yield from self._request(UNLOCK, line0 * LINE, nlines)


def coherent_read(homes, caches, mem, paddr, nbytes):
    """Inspection helper: the globally current bytes for a physical range.

    Priority per line: private owner copy, then home L3 copy, then memory.
    Not timed; used by functional checks and tests.
    """
    out = bytearray()
    pos = paddr
    end = paddr + nbytes
    cfg_stripe = 512
    n_slices = len(homes)
    while pos < end:
        line = pos // LINE
        take = min(end, (line + 1) * LINE) - pos
        off = pos - line * LINE
        home = homes[(line * LINE // cfg_stripe) % n_slices]
        d = home.dir.get(line)
        data = None
        if d is not None:
            if d.owner is not None:
                cl = caches[d.owner].lookup(line)
                if cl is not None:
                    data = bytes(cl.data)
            if data is None and d.l3_data is not None:
                data = bytes(d.l3_data)
        if data is None:
            data = mem.read(line * LINE, LINE)
        out += data[off:off + take]
        pos += take
    return bytes(out)


def audit_coherence(homes, caches, cfg):
    """Structural invariant check across directory and private caches."""
    # gather actual private states
    actual_owner = {}
    actual_sharers = {}
    for node, cache in caches.items():
        for sset in cache.l2.values():
            for line, cl in sset.items():
                if cl.state in (M, E, O):
                    assert line not in actual_owner, \
                        "two owners for line 0x%x" % line
                    actual_owner[line] = (node, cl.state)
                elif cl.state == S:
                    actual_sharers.setdefault(line, set()).add(node)
    seen = set()
    for home in homes:
        for line, d in home.dir.items():
            assert line not in seen
            seen.add(line)
            own = actual_owner.get(line)
            if d.owner is not None:
                assert own is not None and own[0] == d.owner, \
                    "directory owner mismatch line 0x%x" % line
                if d.owner_excl:
                    assert own[1] in (M, E)
                    assert not d.sharers
                    assert d.l3_data is None, \
                        "L3 copy beside exclusive owner 0x%x" % line
                else:
                    assert own[1] == O
            else:
                assert own is None, "unrecorded owner for line 0x%x" % line
            assert d.sharers == actual_sharers.get(line, set()), \
                "sharer set mismatch line 0x%x" % line
            if d.locked:
                assert d.l3_data is not None, "locked line 0x%x absent" % line
            if d.l3_data is not None:
                assert line in home.l3_sets.get(home.set_of(line), {}), \
                    "L3 data for line 0x%x missing from its set" % line
        for idx, sset in home.l3_sets.items():
            assert len(sset) <= cfg.l3_ways
            locked = sum(1 for ln in sset if home.dir[ln].locked)
            assert locked <= home.max_locked
            for ln in sset:
                assert home.dir[ln].l3_data is not None
    # private lines not recorded anywhere in a directory are protocol leaks
    for line in set(actual_owner) | set(actual_sharers):
        assert line in seen, "private copy of untracked line 0x%x" % line
