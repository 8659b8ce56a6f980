import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_instance
from depfl.assembly import (EdgeKind, EmptyGraph, Mode, Node, Role, assemble, normalize_adjacency,
                            reduction_stats)
from depfl.ast_graph import (InconsistentCounts, UnknownMethod, build_method_graph,
                             count_token_savings)
from depfl.call_graph import CallGraph, build_call_graph, reachable_from
from depfl.facts import CallFacts


# -- method graphs -----------------------------------------------------------

def test_method_graph_passthrough():
    inst = make_instance({"M": [("If", "IfStatement", None), ("R1", "ReturnStatement", "If"),
                                ("R2", "ReturnStatement", None)]},
                         tests={"T": "fail"}, covers={("T", "If")}, truth={"M"})
    g = build_method_graph(inst.code, "M")
    assert [sid for sid, _ in g.nodes] == ["If", "R1", "R2"]
    assert all(dst != "M" for _, dst in g.edges)
    assert g.reachable() == {"M", "If", "R1", "R2"}


def test_empty_method_graph():
    inst = make_instance({"M": [], "N": [("s", "ReturnStatement", None)]},
                         tests={"T": "fail"}, covers={("T", "s")}, truth={"N"})
    g = build_method_graph(inst.code, "M")
    assert g.nodes == () and g.edges == ()


def test_unknown_method():
    inst = make_instance({"M": []}, tests={"T": "fail"}, covers=set(), truth={"M"})
    with pytest.raises(UnknownMethod):
        build_method_graph(inst.code, "Z")


def test_method_graph_rebuild_identical():
    inst = make_instance({"M": [("b", "IfStatement", None), ("a", "ReturnStatement", "b")]},
                         tests={"T": "fail"}, covers={("T", "a")}, truth={"M"})
    assert build_method_graph(inst.code, "M") == build_method_graph(inst.code, "M")


@pytest.mark.parametrize("before, after, expected", [
    ((200, 1000), (50, 100), (75.00, 90.00)),
    ((10, 10), (10, 10), (0.0, 0.0)),
])
def test_token_savings(before, after, expected):
    r = count_token_savings(before, after)
    assert (r.pct_nodes, r.pct_edges) == expected


def test_token_savings_table_total_counts_as_printed():
    # displayed Total-row counts; the oracle is direct arithmetic on them
    r = count_token_savings((1.27e6, 47.54e6), (391.4e3, 11.91e6))
    assert r.pct_nodes == round((1.27e6 - 391.4e3) / 1.27e6 * 100, 2) == 69.18
    assert r.pct_edges == round((47.54e6 - 11.91e6) / 47.54e6 * 100, 2) == 74.95


def test_token_savings_inconsistent():
    with pytest.raises(InconsistentCounts):
        count_token_savings((10, 10), (11, 5))


# -- call graph -------------------------------------------------------------

def test_call_graph_dedup_and_empty():
    g = build_call_graph(CallFacts(frozenset({("A", "B"), ("B", "C")})), ["A", "B", "C"])
    assert g.adjacency == {"A": {"B"}, "B": {"C"}, "C": frozenset()}
    assert build_call_graph(CallFacts(frozenset({("A", "A")}))).adjacency == {"A": {"A"}}
    assert all(not v for v in build_call_graph(CallFacts(), ["A", "B", "C"]).adjacency.values())


def test_reachability_examples():
    g = CallGraph({"A": frozenset("B"), "B": frozenset("C"), "C": frozenset(), "D": frozenset()})
    assert reachable_from(g, {"A"}) == {"A", "B", "C"}
    assert reachable_from(g, set()) == set()
    cyc = CallGraph({"A": frozenset("B"), "B": frozenset("A")})
    assert reachable_from(cyc, {"A"}) == {"A", "B"}


def closure_oracle(n, edges):
    """Boolean Floyd-Warshall transitive closure (reflexive)."""
    R = np.eye(n, dtype=bool)
    for a, b in edges:
        R[a, b] = True
    for k in range(n):
        R |= R[:, [k]] & R[[k], :]
    return R


graphs = st.integers(1, 50).flatmap(lambda n: st.tuples(
    st.just(n),
    st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=3 * n),
    st.sets(st.integers(0, n - 1), max_size=n),
    st.sets(st.integers(0, n - 1), max_size=n)))


@settings(max_examples=150, deadline=None)
@given(graphs)
def test_reachability_properties(case):
    n, edges, roots1, extra = case
    cg = build_call_graph(CallFacts(frozenset((str(a), str(b)) for a, b in edges)), map(str, range(n)))
    r1 = reachable_from(cg, map(str, roots1))
    R = closure_oracle(n, edges)
    assert r1 == {str(j) for i in roots1 for j in range(n) if R[i, j]}
    r2 = reachable_from(cg, map(str, roots1 | extra))
    assert r1 <= r2
    assert reachable_from(cg, r1) == r1


# -- assembly ---------------------------------------------------------------

def test_lang62_pruning(lang62):
    grace = assemble(lang62, Mode.GRACE)
    dep = assemble(lang62, Mode.DEPGRAPH)
    assert grace.ids(Role.STATEMENT) == {"S1", "S2", "S3", "S4"}
    assert dep.ids(Role.STATEMENT) == {"S1", "S2", "S3"}
    assert dep.ids(Role.METHOD) == {"lang.Entities#unescape(String)"}
    # the passing test touches only S4 among fail-covered statements
    assert "lang.EntitiesTest#testEscape" in grace.ids(Role.TEST)
    assert "lang.EntitiesTest#testEscape" not in dep.ids(Role.TEST)


def test_all_reachable_adds_only_call_edges():
    inst = make_instance({"A": [("a1", "IfStatement", None)], "B": [("b1", "ReturnStatement", None)]},
                         calls={("T", "A"), ("A", "B")}, tests={"T": "fail"},
                         covers={("T", "a1"), ("T", "b1")}, truth={"B"})
    g, d = assemble(inst, Mode.GRACE), assemble(inst, Mode.DEPGRAPH)
    assert [n.id for n in g.nodes] == [n.id for n in d.nodes]
    assert g.edge_count(EdgeKind.CALL) == 0
    assert d.edge_count(EdgeKind.CALL) == 1
    assert d.edge_count() == g.edge_count() + 1


def test_passing_test_on_pruned_statements_dropped():
    # hand trace: only A and B are fail-covered; P covers only C's statement,
    # which no failing test covers, so P is retained in neither mode.
    inst = make_instance({"A": [("a", "IfStatement", None)], "B": [("b", "ReturnStatement", None)],
                          "C": [("c", "ReturnStatement", None)]},
                         calls={("F", "A"), ("A", "B"), ("P", "C")},
                         tests={"F": "fail", "P": "pass", "Q": "pass"},
                         covers={("F", "a"), ("F", "b"), ("P", "c"), ("Q", "b")}, truth={"B"})
    for mode in Mode:
        g = assemble(inst, mode)
        assert g.ids(Role.TEST) == {"F", "Q"}
        assert g.ids(Role.METHOD) == {"A", "B"}


def test_pruned_parent_rehangs_on_ancestor():
    inst = make_instance({"A": [("if", "IfStatement", None), ("ret", "ReturnStatement", "if")]},
                         calls={("T", "A")}, tests={"T": "fail", "P": "pass"},
                         covers={("T", "ret"), ("P", "if")}, truth={"A"})
    g = assemble(inst)
    i = g.index_of
    assert (i["A"], i["ret"], EdgeKind.CODE) in g.edges


def test_empty_graph():
    inst = make_instance({"A": [("a", "IfStatement", None)]}, calls=set(), tests={"T": "fail"},
                         covers={("T", "a")}, truth={"A"})
    assert assemble(inst, Mode.GRACE).ids(Role.METHOD) == {"A"}
    with pytest.raises(EmptyGraph):
        assemble(inst, Mode.DEPGRAPH)


def test_coverage_edges_at_both_levels(lang62):
    g = assemble(lang62, Mode.DEPGRAPH)
    i = g.index_of
    t = i["lang.EntitiesTest#testNumberOverflow"]
    assert (i["S1"], t, EdgeKind.COVERAGE) in g.edges
    assert (i["lang.Entities#unescape(String)"], t, EdgeKind.COVERAGE) in g.edges
    g2 = assemble(lang62, Mode.DEPGRAPH, method_coverage_edges=False)
    assert g2.edge_count(EdgeKind.COVERAGE) == g.edge_count(EdgeKind.COVERAGE) - 1


def test_node_indices_dense(lang62):
    g = assemble(lang62, Mode.GRACE)
    assert [n.index for n in g.nodes] == list(range(len(g.nodes)))
    assert all(0 <= a < len(g.nodes) and 0 <= b < len(g.nodes) for a, b, _ in g.edges)


def test_reduction_stats_identical(lang62):
    g = assemble(lang62, Mode.GRACE)
    r = reduction_stats(g, g)
    assert (r.pct_nodes, r.pct_edges) == (0.0, 0.0)


# -- normalized adjacency -------------------------------------------------------

def _graph_with_edges(n, edges):
    inst = make_instance({"M0": [("s", "ReturnStatement", None)]}, calls={("T", "M0")},
                         tests={"T": "fail"}, covers={("T", "s")}, truth={"M0"})
    g = assemble(inst)
    nodes = tuple(Node(i, Role.METHOD, f"M{i}", g.nodes[0].kind) for i in range(n))
    return replace(g, nodes=nodes, edges=tuple((a, b, EdgeKind.CALL) for a, b in edges))


def test_adjacency_two_nodes():
    A = normalize_adjacency(_graph_with_edges(2, [(0, 1)])).to_dense()
    assert np.allclose(A, [[0.5, 0.5], [0.5, 0.5]], atol=0, rtol=1e-15)


def test_adjacency_isolated():
    assert normalize_adjacency(_graph_with_edges(1, [])).to_dense().tolist() == [[1.0]]


def test_adjacency_path():
    A = normalize_adjacency(_graph_with_edges(3, [(0, 1), (1, 2)])).to_dense()
    assert A[0, 1] == pytest.approx(1 / math.sqrt(2 * 3), rel=1e-15)


def dense_oracle(n, edges):
    A = np.zeros((n, n))
    for a, b in edges:
        A[a, b] = A[b, a] = 1.0
    A = np.maximum(A, np.eye(n))
    d = A.sum(axis=1)
    Dm = np.diag(1 / np.sqrt(d))
    return Dm @ A @ Dm


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 30).flatmap(lambda n: st.tuples(
    st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=60))))
def test_adjacency_matches_dense_oracle(case):
    n, edges = case
    adj = normalize_adjacency(_graph_with_edges(n, edges))
    A = adj.to_dense()
    assert np.abs(A - dense_oracle(n, edges)).max() <= 1e-12
    assert np.array_equal(A, A.T)
    assert (adj.vals > 0).all() and np.isfinite(adj.vals).all()


def test_reduction_stats_edge_growth_allowed_node_growth_not():
    r = reduction_stats((10, 10), (10, 12))
    assert r.pct_edges == -20.0
    with pytest.raises(InconsistentCounts):
        reduction_stats((10, 10), (11, 10))
