"""2D mesh interconnect, message level.

Routing is deterministic X-then-Y.  A message reserves serialization time on
every link along its path in event order (cut-through: the head pays the
per-hop latency at each router, the body's serialization is paid once at the
tail).  Queues are unbounded; contention shows up as reservation pushback on
the per-direction link timelines, which also enforces the per-direction
bandwidth cap exactly.

Requests and responses are tracked as separate classes for accounting and so
protocol layers never make a response wait for a new request to complete;
both classes share the physical 32 bytes/cycle of a link direction.
"""

REQUEST = 0
RESPONSE = 1


class Link:
    __slots__ = ("next_free", "bytes", "busy_cycles", "queue_cycles")

    def __init__(self):
        self.next_free = 0          # ticks
        self.bytes = 0
        self.busy_cycles = 0        # NOC cycles reserved
        self.queue_cycles = 0       # NOC cycles messages waited for this link


class Noc:
    def __init__(self, engine, mesh_w=4, mesh_h=4, link_bytes_per_cycle=32,
                 per_hop_cycles=2, header_bytes=16):
        self.engine = engine
        self.clk = engine.domain("noc")
        self.mesh_w = mesh_w
        self.mesh_h = mesh_h
        self.link_bytes_per_cycle = link_bytes_per_cycle
        self.per_hop_cycles = per_hop_cycles
        self.header_bytes = header_bytes
        self.links = {}             # (src_xy, dst_xy) -> Link
        self.bytes_injected = 0
        self.bytes_delivered = 0
        self.class_bytes = {REQUEST: 0, RESPONSE: 0}
        self.messages_sent = 0

    def coord(self, node):
        return (node % self.mesh_w, node // self.mesh_w)

    def node_at(self, x, y):
        return y * self.mesh_w + x

    def route_xy(self, src, dst):
        """Hop list from src to dst as router coordinates, excluding the
        source router, including the destination."""
        x, y = self.coord(src)
        dx, dy = self.coord(dst)
        path = []
        while x != dx:
            x += 1 if dx > x else -1
            path.append((x, y))
        while y != dy:
            y += 1 if dy > y else -1
            path.append((x, y))
        return path

    def _link(self, a, b):
        link = self.links.get((a, b))
        if link is None:
            link = Link()
            self.links[(a, b)] = link
        return link

    def send(self, src, dst, payload_bytes, msg_class, deliver_fn, arg=None):
        """Schedule deliver_fn(arg) at the deterministic delivery tick.

        Returns the delivery tick.
        """
        eng = self.engine
        period = self.clk.period_ticks
        size = payload_bytes + self.header_bytes
        ser_cycles = -(-size // self.link_bytes_per_cycle)
        self.messages_sent += 1
        self.bytes_injected += size
        self.class_bytes[msg_class] += size

        if src == dst:
            t = eng.now + period        # local loopback, one cycle
        else:
            hop_ticks = self.per_hop_cycles * period
            ser_ticks = ser_cycles * period
            t = eng.now
            prev = self.coord(src)
            for xy in self.route_xy(src, dst):
                link = self._link(prev, xy)
                start = link.next_free if link.next_free > t else t
                if start > t:
                    link.queue_cycles += (start - t) // period
                link.next_free = start + ser_ticks
                link.bytes += size
                link.busy_cycles += ser_cycles
                t = start + hop_ticks
                prev = xy
            t += ser_ticks

        def _deliver(a):
            self.bytes_delivered += size
            deliver_fn(a)

        eng.schedule_at(t, _deliver, arg)
        return t

    def link_utilization_audit(self, elapsed_ticks):
        """Check no link direction ever exceeded its width; returns max
        utilization seen across links (busy cycles / elapsed cycles)."""
        if elapsed_ticks <= 0:
            return 0.0
        elapsed_cycles = elapsed_ticks / self.clk.period_ticks
        worst = 0.0
        for link in self.links.values():
            util = link.busy_cycles / elapsed_cycles
            if util > worst:
                worst = util
            assert link.bytes <= self.link_bytes_per_cycle * elapsed_cycles + self.link_bytes_per_cycle
        return worst
