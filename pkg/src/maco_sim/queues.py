"""Matrix task queues.

Each core owns an MTQ whose entries track tasks handed to the matrix engine;
the engine side keeps a paired STQ mirroring accepted tasks.  The MAID a task
gets is simply its queue index.  Entry lifecycle:

    FREE -> PENDING -> RUNNING -> DONE_OK  -> FREE
                  \           \-> DONE_EXC -> FREE
                   \-> DONE_EXC   (parameter faults skip the engine)

Six operations drive the arcs, and nothing else moves an entry: allocate,
start, parameter fault, report (ok or exception), status release, clear.
DONE_OK entries are released by a successful MA_STATE (or MA_CLEAR);
DONE_EXC entries survive until software runs MA_CLEAR, so exception state
cannot be lost by a polling loop.
Queue state belongs to the hardware context, not the process: a process
switch never touches it.
"""

from .engine import ProtocolError

FREE = 0
PENDING = 1
RUNNING = 2
DONE_OK = 3
DONE_EXC = 4

STATE_NAMES = ["FREE", "PENDING", "RUNNING", "DONE_OK", "DONE_EXC"]

LEGAL_TRANSITIONS = {
    (FREE, PENDING),
    (PENDING, RUNNING),
    (PENDING, DONE_EXC),
    (RUNNING, DONE_OK),
    (RUNNING, DONE_EXC),
    (DONE_OK, FREE),
    (DONE_EXC, FREE),
}

# exception_type field values
EXC_NONE = 0
EXC_PARAM = 1
EXC_FLOAT = 2
EXC_PAGE_FAULT = 3
EXC_DATA_ABORT = 4

EXC_NAMES = ["none", "param_fault", "floating_point", "page_fault", "data_abort"]

STATUS_DONE = 1 << 0
STATUS_EXC_EN = 1 << 1
STATUS_EXC_SHIFT = 4
STATUS_REUSE = 1 << 63

CFG_FAIL = (1 << 64) - 1        # MA_CFG writes this to Rd when no entry is free


class QueueEntry:
    __slots__ = ("maid", "valid", "asid", "state", "op", "regs",
                 "exception_type", "exception_en", "alloc_time",
                 "start_time", "report_time")

    def __init__(self, maid):
        self.maid = maid
        self.valid = False
        self.asid = 0
        self.state = FREE
        self.op = None
        self.regs = None
        self.exception_type = EXC_NONE
        self.exception_en = True
        self.alloc_time = 0
        self.start_time = 0
        self.report_time = 0

    def transition(self, new_state):
        if (self.state, new_state) not in LEGAL_TRANSITIONS:
            raise ProtocolError(
                "illegal MTQ transition %s -> %s (maid %d)"
                % (STATE_NAMES[self.state], STATE_NAMES[new_state], self.maid))
        self.state = new_state

    def status_word(self):
        word = 0
        if self.state in (DONE_OK, DONE_EXC):
            word |= STATUS_DONE
        if self.exception_en:
            word |= STATUS_EXC_EN
        word |= (self.exception_type & 0xF) << STATUS_EXC_SHIFT
        return word


class MatrixTaskQueue:
    """CPU-side queue; also used to model the engine-side STQ mirror."""

    def __init__(self, depth=4):
        self.depth = depth
        self.entries = [QueueEntry(i) for i in range(depth)]

    def alloc(self, asid, op, regs, now=0):
        """Claim the lowest-index FREE entry; returns it or None if full."""
        for e in self.entries:
            if e.state == FREE:
                e.transition(PENDING)
                e.valid = True
                e.asid = asid
                e.op = op
                e.regs = list(regs)
                e.exception_type = EXC_NONE
                e.alloc_time = now
                return e
        return None

    def free_count(self):
        return sum(1 for e in self.entries if e.state == FREE)

    def query(self, maid, caller_asid):
        """MA_READ semantics: a 64-bit status word, never a fault.

        A freed or reallocated entry reports the reuse indicator with the
        done bit set, so a stale poller terminates instead of spinning.
        """
        e = self.entries[maid]
        if not e.valid or e.asid != caller_asid:
            return STATUS_REUSE | STATUS_DONE
        return e.status_word()

    def read_and_release(self, maid, caller_asid):
        """MA_STATE semantics: like query, but a DONE_OK entry is freed."""
        e = self.entries[maid]
        if not e.valid or e.asid != caller_asid:
            return STATUS_REUSE | STATUS_DONE
        word = e.status_word()
        if e.state == DONE_OK:
            e.transition(FREE)
            e.valid = False
        return word

    def clear(self, maid, caller_asid):
        """MA_CLEAR: drop a finished entry (the only way out of DONE_EXC).

        Returns True when the entry was freed.  Clearing a FREE entry is a
        no-op; an in-flight entry is left alone.
        """
        e = self.entries[maid]
        if not e.valid or e.asid != caller_asid:
            return False
        if e.state in (DONE_OK, DONE_EXC):
            e.transition(FREE)
            e.valid = False
            return True
        return False

    def mark_running(self, maid, now=0):
        e = self.entries[maid]
        e.transition(RUNNING)
        e.start_time = now
        return e

    def report(self, maid, exception_type=EXC_NONE, now=0):
        """Completion from the engine side; keeps exception state sticky."""
        e = self.entries[maid]
        e.exception_type = exception_type
        e.transition(DONE_EXC if exception_type != EXC_NONE else DONE_OK)
        e.report_time = now
        return e

    def fault_on_alloc(self, entry, exception_type, now=0):
        """A task rejected at validation never reaches the engine: it moves
        straight from PENDING to DONE_EXC."""
        entry.start_time = now
        entry.exception_type = exception_type
        entry.transition(DONE_EXC)
        entry.report_time = now
        return entry

    def snapshot(self):
        return [(e.state, e.valid, e.asid, e.exception_type)
                for e in self.entries]
