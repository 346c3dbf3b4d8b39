"""Full-system assembly.

Builds the clock domains, mesh interconnect, sparse physical memory with its
sliced system cache, and one processor + matrix engine pair per node, all
sharing the page-table set.  Also owns workload data placement (virtual
regions backed by randomized physical frames) and the run loop.
"""

import random

from .config import MachineConfig
from .cpu import CpuCore
from .engine import Engine
from .memory import (FunctionalMemory, HomeSlice, PrivateCache, UncachedPort,
                     coherent_read)
from .mmae import MmaeNode
from .noc import Noc, REQUEST
from .queues import MatrixTaskQueue
from .translation import (AddressSpace, FrameAllocator, TranslationService,
                          PAGE_SIZE, PAGE_BITS)

VA_BASE = 0x40_0000
PARAM_MSG_BYTES = 64


class Node:
    """Everything living at one mesh position."""

    __slots__ = ("core", "mmae", "mtq", "svc", "cache", "cpu_port",
                 "mmae_port")


class Machine:
    def __init__(self, mcfg=None, seed=1):
        self.cfg = mcfg or MachineConfig()
        cfg = self.cfg
        if cfg.page_bits != PAGE_BITS:
            raise ValueError("page size is fixed at %d bits" % PAGE_BITS)
        self.engine = Engine(cfg.freqs())
        self.noc = Noc(self.engine, cfg.mesh_w, cfg.mesh_h,
                       cfg.link_bytes_per_cycle, cfg.noc_per_hop_cycles,
                       cfg.noc_header_bytes)
        self.mem = FunctionalMemory(1 << cfg.page_bits)
        self.caches = {}
        self.homes = [HomeSlice(self.engine, self.noc, s, self.mem, cfg,
                                self.caches)
                      for s in range(cfg.l3_slices)]
        self.frames = FrameAllocator(rng=random.Random(seed * 7919 + 13))
        self.page_tables = {}
        self.spaces = {}
        self._cursors = {}

        self.nodes = []
        for n in range(cfg.nodes):
            node = Node()
            node.cache = PrivateCache(self.engine, self.noc, n, cfg,
                                      self.homes)
            self.caches[n] = node.cache
            node.svc = TranslationService(self.engine, cfg, self.page_tables)
            node.mtq = MatrixTaskQueue(cfg.mtq_depth)
            node.mmae_port = UncachedPort(self.engine, self.noc, n, cfg,
                                          self.homes)
            node.cpu_port = UncachedPort(self.engine, self.noc, n, cfg,
                                         self.homes)
            node.mmae = MmaeNode(
                self.engine, n, cfg, self.noc, node.mmae_port, node.svc,
                on_started=self._on_started(node),
                on_report=self._on_report(node))
            node.core = CpuCore(
                self.engine, n, cfg, node.mtq, node.svc, cache=node.cache,
                port=node.cpu_port, dispatch=self._dispatcher(n, node.mmae))
            self.nodes.append(node)

    def _on_started(self, node):
        return lambda maid: node.mtq.mark_running(maid, self.engine.now)

    def _on_report(self, node):
        return lambda maid, exc: node.mtq.report(maid, exc, self.engine.now)

    def _dispatcher(self, n, mmae):
        def dispatch(payload):
            self.noc.send(n, n, PARAM_MSG_BYTES, REQUEST, mmae.submit,
                          payload)
        return dispatch

    # -- address spaces and data placement ----------------------------------

    def address_space(self, asid):
        sp = self.spaces.get(asid)
        if sp is None:
            sp = AddressSpace(asid, self.frames)
            self.spaces[asid] = sp
            self.page_tables[asid] = sp.table
            self._cursors[asid] = VA_BASE
        return sp

    def alloc_region(self, asid, nbytes):
        """Map a fresh page-aligned virtual region; returns its base."""
        sp = self.address_space(asid)
        va = self._cursors[asid]
        self._cursors[asid] += -(-nbytes // PAGE_SIZE) * PAGE_SIZE
        sp.map_range(va, nbytes)
        return va

    def write_virtual(self, asid, va, data):
        """Functional data placement; only valid before traffic runs."""
        self.address_space(asid).write(self.mem, va, data)

    def read_virtual(self, asid, va, nbytes):
        """Globally current bytes for a region (dirty cached copies win)."""
        sp = self.address_space(asid)
        out = bytearray()
        pos = va
        end = va + nbytes
        while pos < end:
            take = min(end, (pos // PAGE_SIZE + 1) * PAGE_SIZE) - pos
            paddr = sp.translate(pos)
            out += coherent_read(self.homes, self.caches, self.mem,
                                 paddr, take)
            pos += take
        return bytes(out)

    # -- execution ----------------------------------------------------------

    def run_schedules(self, schedules, limit_ticks=None):
        """Run one phase list per node to completion.

        schedules: dict node index -> phase list for that node's core.
        """
        for n, phases in schedules.items():
            self.engine.spawn(self.nodes[n].core.run(phases))
        self.engine.run(limit_ticks)
        for n in schedules:
            node = self.nodes[n]
            if not node.core.finished:
                raise RuntimeError("core %d did not finish" % n)
            if node.mmae.active is not None or node.mmae.pending:
                raise RuntimeError("engine %d still has queued tasks" % n)

    @property
    def elapsed_ticks(self):
        return self.engine.now
