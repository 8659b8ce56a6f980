"""Assemble the unified method/statement/test graph for one fault instance.

Two modes:

* ``GRACE``: keep methods and statements covered by at least one failing
  test; link tests by coverage only.
* ``DEPGRAPH``: additionally drop covered methods that the static call graph
  cannot reach from any failing test's entry calls, and add caller -> callee
  edges between the surviving methods.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping

import numpy as np
import scipy.sparse as sp

from .ast_graph import ReductionStat, make_reduction
from .call_graph import build_call_graph, entry_methods, reachable_from
from .facts import AstNodeKind, FaultInstance, Outcome


class Mode(str, enum.Enum):
    GRACE = "grace"
    DEPGRAPH = "depgraph"


class Role(str, enum.Enum):
    METHOD = "method"
    STATEMENT = "statement"
    TEST = "test"


class EdgeKind(str, enum.Enum):
    CODE = "code"
    CALL = "call"
    COVERAGE = "coverage"


class EmptyGraph(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    index: int
    role: Role
    id: str
    kind: AstNodeKind | Outcome


@dataclass(frozen=True)
class UnifiedGraph:
    instance_id: str
    mode: Mode
    nodes: tuple[Node, ...]
    edges: tuple[tuple[int, int, EdgeKind], ...]
    node_attrs: Mapping[int, Any] = field(default_factory=dict)

    @cached_property
    def index_of(self) -> dict[str, int]:
        return {n.id: n.index for n in self.nodes}

    @cached_property
    def method_nodes(self) -> tuple[Node, ...]:
        return tuple(n for n in self.nodes if n.role is Role.METHOD)

    def ids(self, role: Role) -> set[str]:
        return {n.id for n in self.nodes if n.role is role}

    def edge_count(self, kind: EdgeKind | None = None) -> int:
        return sum(1 for e in self.edges if kind is None or e[2] is kind)


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Symmetric D^-1/2 (A + I) D^-1/2 in coordinate form, row-major sorted."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    @cached_property
    def csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(self.n, self.n))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        out[self.rows, self.cols] = self.vals
        return out


def assemble(instance: FaultInstance, mode: Mode | str = Mode.DEPGRAPH, *,
             method_coverage_edges: bool = True) -> UnifiedGraph:
    """Build the pruned graph for ``instance``.

    ``method_coverage_edges`` adds one test -> method coverage edge whenever a
    test covers at least one retained statement of that method.
    """
    mode = Mode(mode)
    code, cov = instance.code, instance.coverage
    failing = cov.failing

    fail_covered = {s for t, s in cov.covered if t in failing}
    covered_methods = {code.statement_index[s].owner for s in fail_covered}
    if mode is Mode.DEPGRAPH:
        cg = build_call_graph(instance.calls, code.method_index)
        reach = reachable_from(cg, entry_methods(instance.calls, failing))
        methods = covered_methods & reach
    else:
        methods = covered_methods
    stmts = {s for s in fail_covered if code.statement_index[s].owner in methods}
    if not methods:
        raise EmptyGraph(f"{instance.fault_id}: nothing covered by failing tests survives {mode.value} pruning")
    tests = {t for t, s in cov.covered if s in stmts}

    nodes: list[Node] = []
    for m in sorted(methods):
        nodes.append(Node(len(nodes), Role.METHOD, m, AstNodeKind.METHOD_DECLARATION))
    for s in sorted(stmts):
        nodes.append(Node(len(nodes), Role.STATEMENT, s, code.statement_index[s].kind))
    for t in sorted(tests):
        nodes.append(Node(len(nodes), Role.TEST, t, cov.outcomes[t]))
    idx = {n.id: n.index for n in nodes}

    edges: set[tuple[int, int, EdgeKind]] = set()
    parent = {e.dst: e.src for e in code.edges if e.rel == "parent"}
    for s in stmts:
        # re-hang statements whose parent was pruned on the nearest retained ancestor
        anc = parent[s]
        while anc not in idx:
            anc = parent[anc]
        edges.add((idx[anc], idx[s], EdgeKind.CODE))
    for e in code.edges:
        if e.rel == "next" and e.src in idx and e.dst in idx:
            edges.add((idx[e.src], idx[e.dst], EdgeKind.CODE))
    if mode is Mode.DEPGRAPH:
        for a, b in instance.calls.edges:
            if a in methods and b in methods:
                edges.add((idx[a], idx[b], EdgeKind.CALL))
    for t, s in cov.covered:
        if s in stmts:
            edges.add((idx[s], idx[t], EdgeKind.COVERAGE))
            if method_coverage_edges:
                edges.add((idx[code.statement_index[s].owner], idx[t], EdgeKind.COVERAGE))

    return UnifiedGraph(instance.fault_id, mode, tuple(nodes), tuple(sorted(edges)))


def normalize_adjacency(g: UnifiedGraph) -> NormalizedAdjacency:
    n = len(g.nodes)
    if n == 0:
        raise EmptyGraph("cannot normalize an empty graph")
    pairs = {(i, i) for i in range(n)}
    for a, b, _ in g.edges:
        pairs.add((a, b))
        pairs.add((b, a))
    coo = np.array(sorted(pairs), dtype=np.int64)
    rows, cols = coo[:, 0], coo[:, 1]
    deg = np.bincount(rows, minlength=n).astype(float)
    vals = 1.0 / np.sqrt(deg[rows] * deg[cols])
    return NormalizedAdjacency(n, rows, cols, vals)


def _size(g: UnifiedGraph | tuple[float, float]) -> tuple[float, float]:
    return (len(g.nodes), len(g.edges)) if isinstance(g, UnifiedGraph) else tuple(g)


def reduction_stats(before: UnifiedGraph | tuple[float, float],
                    after: UnifiedGraph | tuple[float, float]) -> ReductionStat:
    """Either graphs or raw ``(nodes, edges)`` counts.

    Nodes never grow under pruning. Edges may: when nothing is pruned, the
    call edges added in depgraph mode outnumber what was removed.
    """
    (nb, eb), (na, ea) = _size(before), _size(after)
    return make_reduction(nb, na, eb, ea, edge_growth=True)


def graph_to_json(g: UnifiedGraph) -> dict:
    def attrs(i):
        a = g.node_attrs.get(i)
        return a.to_json() if a is not None else None

    return {
        "instance": g.instance_id,
        "mode": g.mode.value,
        "nodes": [{"index": n.index, "role": n.role.value, "id": n.id, "kind": n.kind.value,
                   "attrs": attrs(n.index)} for n in g.nodes],
        "edges": [[a, b, k.value] for a, b, k in g.edges],
    }
