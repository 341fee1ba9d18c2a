"""SSCA-2-style driver: R-MAT edges, graph construction, edge extraction.

The graph lives inside a :class:`~hytmlab.memory.TmHeap` in a fixed
layout so every kernel critical section is a handful of word accesses:

====================  =====================================================
region                contents
====================  =====================================================
sync line             global lock counter and spin word (line 0, reserved)
degrees               one word per vertex: insertions so far for that src
adjacency             ``slot_cap`` packed ``(dst, weight)`` words per vertex
overflow              count word + packed ``(src, dst, weight)`` bucket
shared max            one word: running maximum weight (computation kernel)
result                count word + packed result slots
====================  =====================================================

The generation kernel inserts each edge in one critical section (read
the source's degree, write the edge into the next slot — or the
overflow bucket when the per-vertex slots are full — then bump the
degree).  The computation kernel runs two concurrent phases separated
by a barrier: each thread folds its local maximum weight into a shared
maximum one vertex-section at a time, then appends every edge matching
the global maximum to a shared result list.  Scans of already-built,
no-longer-mutated regions use direct reads; all shared mutation flows
through policy-run critical sections.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, List, NamedTuple, Optional, Sequence, TextIO

from .memory import TmHeap
from .policies import PolicyConfig, SectionRunner, hash_seed
from .runtime import CoopBarrier, CoopScheduler, derive_rng
from .stats import ThreadStats
from .stm import SYNC_RESERVED_WORDS

MAX_SCALE = 24
MAX_PACK_WEIGHT = (1 << 16) - 1

_DST_SHIFT = 16
_SRC_SHIFT = 40


class EdgeTuple(NamedTuple):
    src: int
    dst: int
    weight: int


@dataclass(frozen=True)
class RmatParams:
    """R-MAT generator parameters: 2^scale vertices, edgefactor·2^scale edges."""

    scale: int
    edgefactor: int = 8
    a: float = 0.57
    b: float = 0.19
    c: float = 0.19
    d: float = 0.05
    max_weight: int = 255
    seed: int = 0

    def __post_init__(self) -> None:
        if self.scale < 1:
            raise ValueError("scale must be >= 1")
        if self.edgefactor < 1:
            raise ValueError("edgefactor must be >= 1")
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValueError("quadrant probabilities must be non-negative")
        if abs(self.a + self.b + self.c + self.d - 1.0) > 1e-9:
            raise ValueError("quadrant probabilities must sum to 1")
        if self.max_weight < 1:
            raise ValueError("max_weight must be >= 1")

    @property
    def n_vertices(self) -> int:
        return 1 << self.scale

    @property
    def n_edges(self) -> int:
        return self.edgefactor << self.scale


def rmat_edges(params: RmatParams) -> List[EdgeTuple]:
    """Generate the full edge list; deterministic given ``params.seed``.

    Each edge makes ``scale`` recursive quadrant choices with
    probabilities (a, b, c, d); weights are uniform in [1, max_weight].
    """
    rng = derive_rng("rmat", params.seed)
    random = rng.random
    randint = rng.randint
    ab = params.a + params.b
    abc = ab + params.c
    a = params.a
    scale = params.scale
    max_weight = params.max_weight
    edges = []
    append = edges.append
    for _ in range(params.n_edges):
        src = 0
        dst = 0
        for _ in range(scale):
            r = random()
            if r < a:
                sbit = dbit = 0
            elif r < ab:
                sbit, dbit = 0, 1
            elif r < abc:
                sbit, dbit = 1, 0
            else:
                sbit = dbit = 1
            src = (src << 1) | sbit
            dst = (dst << 1) | dbit
        append(EdgeTuple(src, dst, randint(1, max_weight)))
    return edges


def out_degrees(edges: Iterable[EdgeTuple], n_vertices: int) -> List[int]:
    degs = [0] * n_vertices
    for e in edges:
        degs[e.src] += 1
    return degs


def dump_edges(edges: Iterable[EdgeTuple], sink: TextIO) -> int:
    """Write one ``src dst weight`` decimal line per edge; returns count."""
    n = 0
    for e in edges:
        sink.write(f"{e.src} {e.dst} {e.weight}\n")
        n += 1
    return n


def load_edges(source: TextIO) -> List[EdgeTuple]:
    edges = []
    for lineno, line in enumerate(source, 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 'src dst weight', got {line!r}")
        edges.append(EdgeTuple(int(parts[0]), int(parts[1]), int(parts[2])))
    return edges


# -- packed in-heap layout ----------------------------------------------------


def pack_slot(dst: int, weight: int) -> int:
    return (dst << _DST_SHIFT) | weight


def unpack_slot(word: int) -> tuple:
    return word >> _DST_SHIFT, word & MAX_PACK_WEIGHT


def pack_full(src: int, dst: int, weight: int) -> int:
    return (src << _SRC_SHIFT) | (dst << _DST_SHIFT) | weight


def unpack_full(word: int) -> EdgeTuple:
    return EdgeTuple(word >> _SRC_SHIFT,
                     (word >> _DST_SHIFT) & ((1 << (_SRC_SHIFT - _DST_SHIFT)) - 1),
                     word & MAX_PACK_WEIGHT)


class SharedGraph:
    """Address bookkeeping for one graph laid out inside a heap."""

    __slots__ = ("heap", "scale", "edgefactor", "n_vertices", "slot_cap",
                 "edge_cap", "base", "deg_base", "adj_base", "ovf_count_addr",
                 "ovf_base", "max_addr", "res_count_addr", "res_base",
                 "words_needed")

    def __init__(self, heap: Optional[TmHeap], scale: int, edgefactor: int,
                 slot_cap: Optional[int] = None, words_per_line: int = 8):
        if not 1 <= scale <= MAX_SCALE:
            raise ValueError(f"scale must be in [1, {MAX_SCALE}] for packed storage")
        if edgefactor < 1:
            raise ValueError("edgefactor must be >= 1")
        if slot_cap is None:
            slot_cap = 4 * edgefactor
        if slot_cap < 1:
            raise ValueError("slot_cap must be >= 1")
        self.scale = scale
        self.edgefactor = edgefactor
        self.n_vertices = 1 << scale
        self.slot_cap = slot_cap
        self.edge_cap = edgefactor << scale
        wpl = words_per_line if heap is None else heap.words_per_line
        self.base = wpl * math.ceil(SYNC_RESERVED_WORDS / wpl)
        self.deg_base = self.base
        self.adj_base = self.deg_base + self.n_vertices
        self.ovf_count_addr = self.adj_base + self.n_vertices * slot_cap
        self.ovf_base = self.ovf_count_addr + 1
        self.max_addr = self.ovf_base + self.edge_cap
        self.res_count_addr = self.max_addr + 1
        self.res_base = self.res_count_addr + 1
        self.words_needed = self.res_base + self.edge_cap
        if heap is None:
            heap = TmHeap(self.words_needed, words_per_line=words_per_line)
        elif len(heap.words) < self.words_needed:
            raise ValueError(
                f"heap has {len(heap.words)} words; layout needs {self.words_needed}")
        self.heap = heap

    @staticmethod
    def words_for(scale: int, edgefactor: int, slot_cap: Optional[int] = None,
                  words_per_line: int = 8) -> int:
        return SharedGraph(None, scale, edgefactor, slot_cap,
                           words_per_line).words_needed

    # -- addresses -------------------------------------------------------

    def degree_addr(self, v: int) -> int:
        return self.deg_base + v

    def slot_addr(self, v: int, i: int) -> int:
        return self.adj_base + v * self.slot_cap + i

    # -- quiescent decoding ----------------------------------------------

    def degrees(self) -> List[int]:
        w = self.heap.words
        return w[self.deg_base:self.deg_base + self.n_vertices]

    def adjacency(self, v: int) -> List[tuple]:
        """In-slot (dst, weight) pairs for v, in insertion order."""
        w = self.heap.words
        deg = w[self.deg_base + v]
        base = self.adj_base + v * self.slot_cap
        return [unpack_slot(w[base + i]) for i in range(min(deg, self.slot_cap))]

    def overflow_edges(self) -> List[EdgeTuple]:
        w = self.heap.words
        n = w[self.ovf_count_addr]
        return [unpack_full(w[self.ovf_base + i]) for i in range(n)]

    def iter_edges(self) -> Iterable[EdgeTuple]:
        """Every inserted edge exactly once (slots first, then overflow)."""
        for v in range(self.n_vertices):
            for dst, weight in self.adjacency(v):
                yield EdgeTuple(v, dst, weight)
        yield from self.overflow_edges()

    def result_edges(self) -> List[EdgeTuple]:
        w = self.heap.words
        n = w[self.res_count_addr]
        return [unpack_full(w[self.res_base + i]) for i in range(n)]

    def reset_results(self) -> None:
        self.heap.raw_write(self.max_addr, 0)
        self.heap.raw_write(self.res_count_addr, 0)

    def reset(self) -> None:
        """Zero the entire graph region, returning it to the empty state.

        Requires a quiescent heap, like all raw access.
        """
        if not self.heap.is_quiescent():
            raise RuntimeError("reset requires a quiescent heap")
        words = self.heap.words
        for addr in range(self.base, self.words_needed):
            words[addr] = 0


def _check_packable(edges: Sequence[EdgeTuple], graph: SharedGraph) -> None:
    n = graph.n_vertices
    for e in edges:
        if not (0 <= e.src < n and 0 <= e.dst < n):
            raise ValueError(f"edge {e} endpoint out of range for scale {graph.scale}")
        if not 1 <= e.weight <= MAX_PACK_WEIGHT:
            raise ValueError(f"edge {e} weight outside packable range")


# -- kernel bodies -----------------------------------------------------------


class _InsertBody:
    """One edge insertion; fields are rebound per edge by the worker."""

    __slots__ = ("g", "src", "dst", "weight")

    def __init__(self, g: SharedGraph):
        self.g = g

    def __call__(self, h) -> None:
        g = self.g
        src = self.src
        deg = h.read(g.deg_base + src)
        if deg < g.slot_cap:
            h.write(g.adj_base + src * g.slot_cap + deg,
                    (self.dst << _DST_SHIFT) | self.weight)
        else:
            n = h.read(g.ovf_count_addr)
            h.write(g.ovf_base + n, pack_full(src, self.dst, self.weight))
            h.write(g.ovf_count_addr, n + 1)
        h.write(g.deg_base + src, deg + 1)


class _MaxBody:
    """Fold a precomputed local candidate into the shared maximum."""

    __slots__ = ("max_addr", "candidate")

    def __init__(self, max_addr: int):
        self.max_addr = max_addr

    def __call__(self, h) -> None:
        cur = h.read(self.max_addr)
        if self.candidate > cur:
            h.write(self.max_addr, self.candidate)


class _AppendBody:
    """Append one matching edge to the shared result list."""

    __slots__ = ("g", "packed")

    def __init__(self, g: SharedGraph):
        self.g = g

    def __call__(self, h) -> None:
        g = self.g
        n = h.read(g.res_count_addr)
        h.write(g.res_base + n, self.packed)
        h.write(g.res_count_addr, n + 1)


def _partition(n_items: int, n_threads: int, t: int) -> range:
    return range(t * n_items // n_threads, (t + 1) * n_items // n_threads)


def insertion_bodies(graph: SharedGraph, edges: Sequence[EdgeTuple]) -> list:
    """One standalone insertion body per edge (for tuning and tests)."""
    _check_packable(edges, graph)
    bodies = []
    for e in edges:
        body = _InsertBody(graph)
        body.src, body.dst, body.weight = e
        bodies.append(body)
    return bodies


# -- kernels -----------------------------------------------------------------


def generation_kernel(edges: Sequence[EdgeTuple], graph: SharedGraph,
                      cfg: PolicyConfig, n_threads: int,
                      stats: Sequence[ThreadStats], *,
                      seed: int = 0, run: int = 0,
                      switch_interval: int = 17) -> SharedGraph:
    """Concurrently construct the graph from the edge list.

    Edges are split into contiguous index ranges, one per thread; each
    insertion is one policy-run critical section.  The overflow bucket
    absorbs insertions beyond a vertex's slot capacity inside the same
    transaction, so the inserted multiset always equals the input.
    """
    if n_threads < 1:
        raise ValueError("n_threads must be >= 1")
    if len(stats) != n_threads:
        raise ValueError("need one ThreadStats per thread")
    if graph.heap.words[graph.ovf_count_addr] or any(graph.degrees()):
        raise ValueError("generation_kernel requires an empty graph")
    if len(edges) > graph.edge_cap:
        raise ValueError(f"edge list exceeds layout capacity {graph.edge_cap}")
    _check_packable(edges, graph)

    sched = CoopScheduler(seed=hash_seed("gen-sched", seed, run),
                          switch_interval=switch_interval)

    def make_worker(t: int):
        span = _partition(len(edges), n_threads, t)

        def work(ctx) -> None:
            runner = SectionRunner(graph.heap, cfg, ctx)
            body = _InsertBody(graph)
            run_section = runner.run
            for i in span:
                e = edges[i]
                body.src = e[0]
                body.dst = e[1]
                body.weight = e[2]
                run_section(body)
        return work

    for t in range(n_threads):
        sched.spawn(make_worker(t), thread_id=t,
                    rng=derive_rng("worker", seed, t, run), stats=stats[t])
    sched.run()
    return graph


def computation_kernel(graph: SharedGraph, cfg: PolicyConfig, n_threads: int,
                       stats: Sequence[ThreadStats], *,
                       seed: int = 0, run: int = 0,
                       switch_interval: int = 17) -> List[EdgeTuple]:
    """Extract all maximum-weight edges from a constructed graph.

    Phase 1: threads scan their owned vertices' adjacency (read-only,
    direct) and fold each vertex's local maximum into the shared
    maximum word — one critical section per owned vertex, plus exactly
    one section for the thread's slice of the overflow bucket.  A
    barrier separates the phases.  Phase 2: threads append every owned
    edge whose weight equals the global maximum to the shared result
    list, one critical section per matching edge.
    """
    if n_threads < 1:
        raise ValueError("n_threads must be >= 1")
    if len(stats) != n_threads:
        raise ValueError("need one ThreadStats per thread")
    graph.reset_results()

    heap = graph.heap
    words = heap.words
    n_ovf = words[graph.ovf_count_addr]
    sched = CoopScheduler(seed=hash_seed("comp-sched", seed, run),
                          switch_interval=switch_interval)
    barrier = CoopBarrier(n_threads)

    def make_worker(t: int):
        verts = _partition(graph.n_vertices, n_threads, t)
        ovf_span = _partition(n_ovf, n_threads, t)

        def work(ctx) -> None:
            runner = SectionRunner(heap, cfg, ctx)
            max_body = _MaxBody(graph.max_addr)
            run_section = runner.run
            deg_base = graph.deg_base
            adj_base = graph.adj_base
            slot_cap = graph.slot_cap
            wmask = MAX_PACK_WEIGHT
            # Phase 1: one section per owned vertex.
            for v in verts:
                local = 0
                base = adj_base + v * slot_cap
                for i in range(min(words[deg_base + v], slot_cap)):
                    w = words[base + i] & wmask
                    if w > local:
                        local = w
                max_body.candidate = local
                run_section(max_body)
            # ... plus exactly one for this thread's overflow slice.
            local = 0
            for i in ovf_span:
                w = words[graph.ovf_base + i] & wmask
                if w > local:
                    local = w
            max_body.candidate = local
            run_section(max_body)

            barrier.wait(ctx)

            # Phase 2: append owned edges matching the global maximum.
            target = words[graph.max_addr]
            if target == 0:
                return
            append_body = _AppendBody(graph)
            for v in verts:
                base = adj_base + v * slot_cap
                for i in range(min(words[deg_base + v], slot_cap)):
                    word = words[base + i]
                    if word & wmask == target:
                        append_body.packed = pack_full(v, word >> _DST_SHIFT,
                                                       target)
                        run_section(append_body)
            for i in ovf_span:
                word = words[graph.ovf_base + i]
                if word & wmask == target:
                    append_body.packed = word
                    run_section(append_body)
        return work

    for t in range(n_threads):
        sched.spawn(make_worker(t), thread_id=t,
                    rng=derive_rng("worker", seed, t, run), stats=stats[t])
    sched.run()
    return graph.result_edges()


def max_weight_oracle(edges: Sequence[EdgeTuple]) -> List[EdgeTuple]:
    """Sequential reference for the computation kernel."""
    if not edges:
        return []
    m = max(e.weight for e in edges)
    return [e for e in edges if e.weight == m]


def sequential_build(graph: SharedGraph, edges: Sequence[EdgeTuple]) -> SharedGraph:
    """Single-threaded direct construction, bypassing any policy.

    Produces exactly the layout a one-thread generation run produces
    (insertions in list order); the reference for adjacency-level and
    multiset oracles.
    """
    _check_packable(edges, graph)
    if len(edges) > graph.edge_cap:
        raise ValueError(f"edge list exceeds layout capacity {graph.edge_cap}")
    words = graph.heap.words
    deg_base = graph.deg_base
    adj_base = graph.adj_base
    slot_cap = graph.slot_cap
    ovf_count_addr = graph.ovf_count_addr
    ovf_base = graph.ovf_base
    for src, dst, weight in edges:
        deg = words[deg_base + src]
        if deg < slot_cap:
            words[adj_base + src * slot_cap + deg] = (dst << _DST_SHIFT) | weight
        else:
            n = words[ovf_count_addr]
            words[ovf_base + n] = pack_full(src, dst, weight)
            words[ovf_count_addr] = n + 1
        words[deg_base + src] = deg + 1
    return graph


def packed_multiset(edges: Iterable[EdgeTuple]):
    """Multiset of edges as packed ints (cheap to build and compare)."""
    return Counter(pack_full(s, d, w) for s, d, w in edges)


def graph_packed_multiset(graph: SharedGraph):
    """Multiset of every inserted edge, decoded without tuple churn."""
    words = graph.heap.words
    deg_base = graph.deg_base
    adj_base = graph.adj_base
    slot_cap = graph.slot_cap
    packed = []
    append = packed.append
    for v in range(graph.n_vertices):
        deg = words[deg_base + v]
        if deg:
            hi = v << _SRC_SHIFT
            base = adj_base + v * slot_cap
            for i in range(min(deg, slot_cap)):
                append(hi | words[base + i])
    n = words[graph.ovf_count_addr]
    packed.extend(words[graph.ovf_base:graph.ovf_base + n])
    return Counter(packed)
