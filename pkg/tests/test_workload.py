"""R-MAT generation, the packed graph layout, and the two kernels."""

import io

import pytest

from hytmlab import (ALL_POLICY_KINDS, EdgeTuple, PolicyConfig, PolicyKind,
                     RmatParams, SharedGraph, ThreadStats, TmHeap, aggregate,
                     computation_kernel, dump_edges, generation_kernel,
                     graph_packed_multiset, insertion_bodies, load_edges,
                     max_weight_oracle, out_degrees, packed_multiset,
                     rmat_edges, sequential_build)
from hytmlab.workload import (MAX_PACK_WEIGHT, _check_packable, _partition,
                              pack_full, pack_slot, unpack_full, unpack_slot)


# -- R-MAT generator ---------------------------------------------------------


def test_rmat_params_validation():
    with pytest.raises(ValueError):
        RmatParams(scale=0)
    with pytest.raises(ValueError):
        RmatParams(scale=4, edgefactor=0)
    with pytest.raises(ValueError):
        RmatParams(scale=4, a=0.5, b=0.5, c=0.5, d=0.5)
    with pytest.raises(ValueError):
        RmatParams(scale=4, a=1.2, b=-0.2, c=0.0, d=0.0)
    with pytest.raises(ValueError):
        RmatParams(scale=4, max_weight=0)
    p = RmatParams(scale=6, edgefactor=8)
    assert p.n_vertices == 64
    assert p.n_edges == 512


def test_rmat_is_deterministic_per_seed():
    p = RmatParams(scale=7, edgefactor=4, seed=11)
    assert rmat_edges(p) == rmat_edges(p)
    other = rmat_edges(RmatParams(scale=7, edgefactor=4, seed=12))
    assert rmat_edges(p) != other


def test_rmat_scale_10_shape():
    """Exactly edgefactor*2^scale edges over 2^scale vertices, skewed."""
    p = RmatParams(scale=10, edgefactor=8, seed=3)
    edges = rmat_edges(p)
    assert len(edges) == 8192
    assert all(0 <= e.src < 1024 and 0 <= e.dst < 1024 for e in edges)
    assert all(1 <= e.weight <= 255 for e in edges)
    degs = out_degrees(edges, 1024)
    assert sum(degs) == 8192
    mean = 8192 / 1024
    assert max(degs) >= 4 * mean, "R-MAT skew: hubs well above the mean degree"


def test_out_degrees_counts_sources_only():
    edges = [EdgeTuple(0, 3, 9), EdgeTuple(0, 0, 1), EdgeTuple(2, 0, 5)]
    assert out_degrees(edges, 4) == [2, 0, 1, 0]


# -- edge list serialization -------------------------------------------------


def test_dump_load_roundtrip():
    edges = rmat_edges(RmatParams(scale=5, edgefactor=2, seed=8))
    buf = io.StringIO()
    assert dump_edges(edges, buf) == len(edges)
    buf.seek(0)
    assert load_edges(buf) == edges


def test_load_edges_skips_blanks_and_rejects_malformed():
    assert load_edges(io.StringIO("1 2 3\n\n  \n4 5 6\n")) == [
        EdgeTuple(1, 2, 3), EdgeTuple(4, 5, 6)]
    with pytest.raises(ValueError, match="line 2"):
        load_edges(io.StringIO("1 2 3\n4 5\n"))
    with pytest.raises(ValueError):
        load_edges(io.StringIO("a b c\n"))


# -- packed words ------------------------------------------------------------


def test_pack_roundtrips_at_boundaries():
    for dst, weight in [(0, 1), (5, 200), ((1 << 24) - 1, MAX_PACK_WEIGHT)]:
        assert unpack_slot(pack_slot(dst, weight)) == (dst, weight)
    for src, dst, weight in [(0, 0, 1), (7, 3, 40),
                             ((1 << 24) - 1, (1 << 24) - 1, MAX_PACK_WEIGHT)]:
        assert unpack_full(pack_full(src, dst, weight)) == \
            EdgeTuple(src, dst, weight)


def test_check_packable_rejects_bad_edges():
    g = SharedGraph(None, 3, 2)
    _check_packable([EdgeTuple(0, 7, 1)], g)
    with pytest.raises(ValueError, match="out of range"):
        _check_packable([EdgeTuple(0, 8, 1)], g)
    with pytest.raises(ValueError, match="out of range"):
        _check_packable([EdgeTuple(-1, 0, 1)], g)
    with pytest.raises(ValueError, match="weight"):
        _check_packable([EdgeTuple(0, 0, 0)], g)
    with pytest.raises(ValueError, match="weight"):
        _check_packable([EdgeTuple(0, 0, MAX_PACK_WEIGHT + 1)], g)


# -- shared graph layout -----------------------------------------------------


def test_layout_regions_are_contiguous_and_sized():
    g = SharedGraph(None, 4, 2, slot_cap=3)
    assert g.n_vertices == 16
    assert g.edge_cap == 32
    assert g.base == 8, "layout starts on the first line after the sync words"
    assert g.deg_base == g.base
    assert g.adj_base == g.deg_base + 16
    assert g.ovf_count_addr == g.adj_base + 16 * 3
    assert g.ovf_base == g.ovf_count_addr + 1
    assert g.max_addr == g.ovf_base + 32
    assert g.res_count_addr == g.max_addr + 1
    assert g.res_base == g.res_count_addr + 1
    assert g.words_needed == g.res_base + 32
    assert g.words_for(4, 2, 3) == g.words_needed
    assert len(g.heap.words) >= g.words_needed


def test_layout_address_helpers():
    g = SharedGraph(None, 3, 2, slot_cap=5)
    assert g.degree_addr(0) == g.deg_base
    assert g.degree_addr(7) == g.deg_base + 7
    assert g.slot_addr(2, 4) == g.adj_base + 2 * 5 + 4
    assert g.slot_cap == 5


def test_default_slot_cap_is_four_times_edgefactor():
    assert SharedGraph(None, 4, 8).slot_cap == 32


def test_shared_graph_validation():
    with pytest.raises(ValueError):
        SharedGraph(None, 0, 8)
    with pytest.raises(ValueError):
        SharedGraph(None, 25, 8)
    with pytest.raises(ValueError):
        SharedGraph(None, 4, 0)
    with pytest.raises(ValueError):
        SharedGraph(None, 4, 8, slot_cap=0)
    tiny = TmHeap(16, words_per_line=8)
    with pytest.raises(ValueError, match="layout needs"):
        SharedGraph(tiny, 4, 8)


def test_sequential_build_fills_slots_then_overflow():
    g = SharedGraph(None, 2, 2, slot_cap=2)
    edges = [EdgeTuple(1, 0, 10), EdgeTuple(1, 2, 20), EdgeTuple(1, 3, 30),
             EdgeTuple(0, 1, 5)]
    sequential_build(g, edges)
    assert g.degrees() == [1, 3, 0, 0]
    assert g.adjacency(1) == [(0, 10), (2, 20)], "insertion order in slots"
    assert g.adjacency(0) == [(1, 5)]
    assert g.overflow_edges() == [EdgeTuple(1, 3, 30)]
    assert sorted(g.iter_edges()) == sorted(edges)
    assert graph_packed_multiset(g) == packed_multiset(edges)


def test_sequential_build_rejects_overfull_list():
    g = SharedGraph(None, 2, 1)   # edge_cap = 4
    edges = [EdgeTuple(0, 0, 1)] * 5
    with pytest.raises(ValueError, match="capacity"):
        sequential_build(g, edges)


def test_reset_restores_the_empty_graph():
    g = SharedGraph(None, 3, 2, slot_cap=1)
    edges = rmat_edges(RmatParams(scale=3, edgefactor=2, seed=1))
    sequential_build(g, edges)
    first = list(g.heap.words)
    g.reset()
    assert all(g.heap.words[a] == 0 for a in range(g.base, g.words_needed))
    assert g.degrees() == [0] * 8
    assert g.overflow_edges() == []
    sequential_build(g, edges)
    assert list(g.heap.words) == first, "rebuild after reset is identical"


def test_reset_results_clears_only_the_result_region():
    g = SharedGraph(None, 2, 2)
    sequential_build(g, [EdgeTuple(0, 1, 7)])
    g.heap.raw_write(g.max_addr, 7)
    g.heap.raw_write(g.res_count_addr, 1)
    g.heap.raw_write(g.res_base, pack_full(0, 1, 7))
    g.reset_results()
    assert g.heap.words[g.max_addr] == 0
    assert g.result_edges() == []
    assert g.adjacency(0) == [(1, 7)], "adjacency untouched"


def test_partition_covers_everything_disjointly():
    for n_items, n_threads in [(10, 3), (8, 8), (3, 5), (0, 4), (100, 7)]:
        seen = []
        for t in range(n_threads):
            seen.extend(_partition(n_items, n_threads, t))
        assert seen == list(range(n_items))


def test_insertion_bodies_match_sequential_build():
    edges = rmat_edges(RmatParams(scale=3, edgefactor=2, seed=4))
    g = SharedGraph(None, 3, 2, slot_cap=1)
    ref = SharedGraph(None, 3, 2, slot_cap=1)
    sequential_build(ref, edges)
    from hytmlab import run_section
    for body in insertion_bodies(g, edges):
        run_section(body, g.heap, PolicyConfig(PolicyKind.COARSE_LOCK))
    assert list(g.heap.words) == list(ref.heap.words)


# -- oracles -----------------------------------------------------------------


def test_max_weight_oracle_keeps_ties_and_multiplicity():
    edges = [EdgeTuple(0, 1, 9), EdgeTuple(1, 2, 3), EdgeTuple(2, 3, 9),
             EdgeTuple(0, 1, 9)]
    assert max_weight_oracle(edges) == [EdgeTuple(0, 1, 9), EdgeTuple(2, 3, 9),
                                        EdgeTuple(0, 1, 9)]
    assert max_weight_oracle([]) == []


# -- kernels -----------------------------------------------------------------


def kernel_cfg(kind):
    return PolicyConfig(kind, rng_seed=5)


@pytest.mark.parametrize("kind", ALL_POLICY_KINDS, ids=lambda k: k.value)
def test_generation_matches_sequential_build_as_multiset(kind):
    params = RmatParams(scale=5, edgefactor=4, seed=2)
    edges = rmat_edges(params)
    g = SharedGraph(None, 5, 4)
    stats = [ThreadStats() for _ in range(3)]
    generation_kernel(edges, g, kernel_cfg(kind), 3, stats, seed=2)
    ref = sequential_build(SharedGraph(None, 5, 4), edges)
    assert graph_packed_multiset(g) == graph_packed_multiset(ref)
    assert g.heap.is_quiescent()
    assert g.heap.words[0] == 0 and g.heap.words[1] == 0
    aggregate(stats).check_identities()
    assert sum(s.sections_completed for s in stats) == len(edges)


@pytest.mark.parametrize("kind", ALL_POLICY_KINDS, ids=lambda k: k.value)
def test_computation_matches_oracle_as_multiset(kind):
    params = RmatParams(scale=5, edgefactor=4, seed=6)
    edges = rmat_edges(params)
    g = sequential_build(SharedGraph(None, 5, 4), edges)
    stats = [ThreadStats() for _ in range(4)]
    got = computation_kernel(g, kernel_cfg(kind), 4, stats, seed=6)
    want = max_weight_oracle(edges)
    assert packed_multiset(got) == packed_multiset(want)
    assert g.heap.words[g.max_addr] == max(e.weight for e in edges)
    aggregate(stats).check_identities()


def test_generation_requires_an_empty_graph():
    edges = [EdgeTuple(0, 1, 2)]
    g = sequential_build(SharedGraph(None, 3, 2), [EdgeTuple(1, 1, 1)])
    with pytest.raises(ValueError, match="empty graph"):
        generation_kernel(edges, g, kernel_cfg(PolicyKind.COARSE_LOCK), 1,
                          [ThreadStats()])


def test_generation_validates_arguments():
    g = SharedGraph(None, 3, 2)
    cfg = kernel_cfg(PolicyKind.COARSE_LOCK)
    with pytest.raises(ValueError, match="n_threads"):
        generation_kernel([], g, cfg, 0, [])
    with pytest.raises(ValueError, match="one ThreadStats"):
        generation_kernel([], g, cfg, 2, [ThreadStats()])
    too_many = [EdgeTuple(0, 0, 1)] * (g.edge_cap + 1)
    with pytest.raises(ValueError, match="capacity"):
        generation_kernel(too_many, g, cfg, 1, [ThreadStats()])


def test_computation_validates_arguments():
    g = SharedGraph(None, 3, 2)
    cfg = kernel_cfg(PolicyKind.COARSE_LOCK)
    with pytest.raises(ValueError, match="n_threads"):
        computation_kernel(g, cfg, 0, [])
    with pytest.raises(ValueError, match="one ThreadStats"):
        computation_kernel(g, cfg, 2, [ThreadStats()])


def test_computation_on_empty_graph_returns_nothing():
    g = SharedGraph(None, 3, 2)
    got = computation_kernel(g, kernel_cfg(PolicyKind.HYTM_FIX), 2,
                             [ThreadStats(), ThreadStats()])
    assert got == []
    assert g.heap.words[g.max_addr] == 0


def test_computation_is_rerunnable_on_the_same_graph():
    edges = rmat_edges(RmatParams(scale=4, edgefactor=2, seed=9))
    g = sequential_build(SharedGraph(None, 4, 2), edges)
    first = computation_kernel(g, kernel_cfg(PolicyKind.STM_ONLY), 2,
                               [ThreadStats(), ThreadStats()], seed=1)
    second = computation_kernel(g, kernel_cfg(PolicyKind.STM_ONLY), 2,
                                [ThreadStats(), ThreadStats()], seed=1)
    assert packed_multiset(first) == packed_multiset(second)
    assert packed_multiset(first) == packed_multiset(max_weight_oracle(edges))


def test_generation_is_deterministic_per_seed():
    edges = rmat_edges(RmatParams(scale=4, edgefactor=4, seed=0))
    outcomes = []
    for _ in range(2):
        g = SharedGraph(None, 4, 4, slot_cap=2)
        stats = [ThreadStats() for _ in range(4)]
        generation_kernel(edges, g, kernel_cfg(PolicyKind.HYTM_RND), 4, stats,
                          seed=42)
        outcomes.append((list(g.heap.words),
                         [s.htm_begins for s in stats]))
    assert outcomes[0] == outcomes[1], \
        "same seed, same interleaving, same layout and same retry counts"


def test_small_slot_cap_forces_overflow_under_every_policy():
    edges = rmat_edges(RmatParams(scale=4, edgefactor=8, seed=7))
    g = SharedGraph(None, 4, 8, slot_cap=1)
    stats = [ThreadStats() for _ in range(2)]
    generation_kernel(edges, g, kernel_cfg(PolicyKind.HYTM_DYAD), 2, stats,
                      seed=7)
    assert g.heap.words[g.ovf_count_addr] > 0
    ref = sequential_build(SharedGraph(None, 4, 8, slot_cap=1), edges)
    assert graph_packed_multiset(g) == graph_packed_multiset(ref)
