import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nodal_surplus.builtins import builtin
from nodal_surplus.graph import (
    GraphError,
    biconnected_components,
    block_decomposition,
    build_graph,
    format_graph,
    graph_bridges,
    parse_graph,
    parse_length,
    spanning_cut,
    topology_summary,
)

BUILTINS = ["figure8", "dumbbell", "chain1221", "chain321", "pumpkin-chain:2,1,3"]


# --- oracles ---------------------------------------------------------------


def subdivided(g):
    """Simple graph with a midpoint node per edge (handles loops and parallel edges)."""
    h = nx.Graph()
    h.add_nodes_from(("v", v) for v in range(g.V))
    for j, (u, v) in enumerate(g.endpoints):
        if u == v:
            # a loop needs two interior points to stay simple
            h.add_edges_from([(("v", u), ("m", j, 0)), (("m", j, 0), ("m", j, 1)), (("m", j, 1), ("v", u))])
        else:
            h.add_edges_from([(("v", u), ("m", j)), (("m", j), ("v", v))])
    return h


def gf2_cycle_rank(g):
    """Rank over GF(2) of the edge-incidence vectors of a networkx cycle basis of the subdivision."""
    h = subdivided(g)
    rows = []
    for cyc in nx.cycle_basis(h):
        vec = np.zeros(g.E, dtype=np.uint8)
        nodes = set(cyc)
        for j, (u, v) in enumerate(g.endpoints):
            mid = ("m", j) if u != v else ("m", j, 0)
            if mid in nodes:
                vec[j] = 1
        rows.append(vec)
    if not rows:
        return 0
    M = np.array(rows)
    rank = 0
    for col in range(M.shape[1]):
        piv = np.flatnonzero(M[rank:, col])
        if piv.size == 0:
            continue
        p = rank + piv[0]
        M[[rank, p]] = M[[p, rank]]
        for r in range(M.shape[0]):
            if r != rank and M[r, col]:
                M[r] ^= M[rank]
        rank += 1
        if rank == M.shape[0]:
            break
    return rank


def random_graph(draw_edges, V):
    return build_graph(range(V), [(j, u, v, 1.0 + 0.1 * j) for j, (u, v) in enumerate(draw_edges)])


@st.composite
def multigraphs(draw):
    V = draw(st.integers(1, 6))
    # spanning tree first so the graph is connected
    edges = [(draw(st.integers(0, i - 1)), i) for i in range(1, V)]
    extra = draw(st.lists(st.tuples(st.integers(0, V - 1), st.integers(0, V - 1)), max_size=6))
    edges += extra
    if not edges:
        edges = [(0, 0)]
    return random_graph(edges, V)


# --- construction ------------------------------------------------------------


def test_figure8_construction():
    g = build_graph([0], [(0, 0, 0, math.pi), (1, 0, 0, math.e)])
    assert (g.V, g.E, g.beta) == (1, 2, 2)
    assert g.loops == (0, 1)


def test_single_edge_is_tree():
    g = build_graph([0, 1], [(0, 0, 1, 1.0)])
    assert g.beta == 0
    assert spanning_cut(g).edges == ()


@pytest.mark.parametrize("edges", [[(0, 0, 1, 0.0)], [(0, 0, 1, -1.0)], []])
def test_invalid_edges_rejected(edges):
    with pytest.raises(GraphError):
        build_graph([0, 1], edges)


def test_disconnected_rejected():
    with pytest.raises(GraphError):
        build_graph([0, 1, 2, 3], [(0, 0, 1, 1.0), (1, 2, 3, 1.0)])


def test_dirichlet_only_at_leaves():
    build_graph([(0, True), 1], [(0, 0, 1, 1.0)])
    with pytest.raises(GraphError):
        build_graph([(0, True), 1], [(0, 0, 1, 1.0), (1, 0, 1, 2.0)])


def test_nontrivial_flag():
    assert not build_graph([0], [(0, 0, 0, 1.0)]).nontrivial
    assert not build_graph([0, 1, 2], [(0, 0, 1, 1.0), (1, 1, 2, 1.0), (2, 2, 0, 1.0)]).nontrivial
    assert builtin("figure8").nontrivial


@pytest.mark.parametrize(
    "token,value",
    [("pi", math.pi), ("2pi/3", 2 * math.pi / 3), ("e", math.e), ("sqrt2", math.sqrt(2)), ("1.5", 1.5),
     ("3/4", 0.75), ("2*sqrt5", 2 * math.sqrt(5)), ("1e-3", 1e-3)],
)
def test_parse_length(token, value):
    assert parse_length(token) == pytest.approx(value, rel=1e-15)


def test_parse_length_rejects_garbage():
    with pytest.raises(ValueError):
        parse_length("tau")


def test_parse_graph_roundtrip():
    text = "# dumbbell\nvertex 0\nvertex 1\nedge 0 0 0 pi  # loop\nedge 1 0 1 e\nedge 2 1 1 1\n"
    g = parse_graph(text)
    assert g == builtin("dumbbell")
    assert parse_graph(format_graph(g)) == g


def test_parse_graph_dirichlet_and_errors():
    g = parse_graph("vertex 0 dirichlet\nvertex 1\nedge 5 0 1 2\n")
    assert g.dirichlet == (True, False) and g.edge_ids == (5,)
    with pytest.raises(GraphError, match="line 1"):
        parse_graph("vertx 0\n")
    with pytest.raises(GraphError):
        parse_graph("vertex 0\nedge 0 0 7 1\n")


# --- topology ----------------------------------------------------------------


def test_topology_summary_examples():
    d = topology_summary(builtin("dumbbell"))
    assert d.beta == 2
    f = topology_summary(builtin("figure8", [1.3, 2.9]))
    assert f.generic_fraction == pytest.approx(0.5, abs=1e-15)
    assert topology_summary(builtin("pumpkin-chain:1,1,1")).generic_fraction == 1.0


@pytest.mark.parametrize("name", BUILTINS)
def test_beta_matches_gf2_rank(name):
    g = builtin(name)
    assert topology_summary(g).beta == gf2_cycle_rank(g)


@settings(max_examples=60, deadline=None)
@given(multigraphs())
def test_beta_matches_gf2_rank_random(g):
    assert g.beta == gf2_cycle_rank(g)
    assert 0.5 <= topology_summary(g).generic_fraction <= 1.0


# --- cut set ------------------------------------------------------------------


def _is_spanning_tree(g, removed):
    h = nx.MultiGraph()
    h.add_nodes_from(range(g.V))
    h.add_edges_from(e for j, e in enumerate(g.endpoints) if j not in removed)
    return nx.is_connected(h) and h.number_of_edges() == g.V - 1 and nx.is_forest(nx.Graph(h))


def test_cut_examples():
    assert set(spanning_cut(builtin("figure8")).edges) == {0, 1}
    assert spanning_cut(builtin("dumbbell")).edges == (0, 2)


@settings(max_examples=60, deadline=None)
@given(multigraphs())
def test_cut_leaves_spanning_tree(g):
    cut = spanning_cut(g)
    assert len(cut) == g.beta
    assert set(g.loops) <= set(cut.edges)
    assert _is_spanning_tree(g, set(cut.edges))
    assert spanning_cut(g) == cut  # deterministic


# --- blocks --------------------------------------------------------------------


def _nx_components(g):
    """Edge sets of biconnected components via networkx on the subdivision."""
    h = subdivided(g)
    out = set()
    for comp in nx.biconnected_component_edges(h):
        edges = set()
        for a, b in comp:
            for n in (a, b):
                if n[0] == "m":
                    edges.add(n[1])
        out.add(frozenset(edges))
    return out


@settings(max_examples=60, deadline=None)
@given(multigraphs())
def test_biconnected_components_match_networkx(g):
    ours = {frozenset(es) for _, es in biconnected_components(g)}
    assert ours == _nx_components(g)


@settings(max_examples=60, deadline=None)
@given(multigraphs())
def test_bridges_match_networkx(g):
    h = subdivided(g)
    nxb = {n[1] for a, b in nx.bridges(h) for n in (a, b) if n[0] == "m"}
    assert set(graph_bridges(g)) == nxb


@settings(max_examples=60, deadline=None)
@given(multigraphs())
def test_block_betas_sum(g):
    bd = block_decomposition(g)
    assert sum(bd.betas) == g.beta
    assert sorted(bd.flux_partition) == sorted(b for b, blk in enumerate(bd.blocks) for _ in range(blk.beta))


def test_block_examples():
    d = block_decomposition(builtin("dumbbell"))
    assert d.kind == "edge-separation" and d.betas == (1, 1) and d.disjoint_cycles
    assert {b.bridge for b in d.blocks} - {None} == {1}
    c = block_decomposition(builtin("chain321"))
    assert c.kind == "vertex-separation" and c.betas == (2, 1)
    c = block_decomposition(builtin("chain1221"))
    assert c.kind == "vertex-separation" and not c.disjoint_cycles
    f = block_decomposition(builtin("figure8"))
    assert f.kind == "vertex-separation" and f.betas == (1, 1)


def test_builtin_flux_partition_follows_cut():
    for name in BUILTINS:
        g = builtin(name)
        cut = spanning_cut(g)
        bd = block_decomposition(g, cut)
        for j, e in enumerate(cut.edges):
            assert e in bd.blocks[bd.flux_partition[j]].edges
