"""Statement-level method graphs.

Token-level AST nodes never reach this layer; ingestion only admits statement
and method-declaration nodes. The helpers here expose per-method subgraphs and
the before/after size accounting used when a frontend also reports token
counts.
"""
from __future__ import annotations

from dataclasses import dataclass

from .facts import AstNodeKind, CodeFacts


class UnknownMethod(KeyError):
    pass


class InconsistentCounts(ValueError):
    pass


@dataclass(frozen=True)
class MethodGraph:
    root: str
    nodes: tuple[tuple[str, AstNodeKind], ...]
    edges: tuple[tuple[str, str], ...]  # parent -> child and sequential edges, as given

    def reachable(self) -> set[str]:
        adj: dict[str, list[str]] = {}
        for a, b in self.edges:
            adj.setdefault(a, []).append(b)
        seen, stack = {self.root}, [self.root]
        while stack:
            for nxt in adj.get(stack.pop(), ()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return seen


@dataclass(frozen=True)
class ReductionStat:
    nodes_before: int
    nodes_after: int
    edges_before: int
    edges_after: int
    pct_nodes: float
    pct_edges: float


def build_method_graph(code: CodeFacts, m: str) -> MethodGraph:
    if m not in code.method_index:
        raise UnknownMethod(m)
    stmts = sorted(code.statements_of.get(m, []), key=lambda s: s.id)
    members = {s.id for s in stmts} | {m}
    for s in stmts:
        if s.kind is AstNodeKind.METHOD_DECLARATION:
            raise ValueError(f"statement {s.id!r} carries the method-root kind")
    edges = tuple((e.src, e.dst) for e in code.edges if e.src in members and e.dst in members)
    return MethodGraph(m, tuple((s.id, s.kind) for s in stmts), edges)


def pct_reduction(before: int | float, after: int | float, allow_growth: bool = False) -> float:
    if after > before and not allow_growth:
        raise InconsistentCounts(f"after ({after}) exceeds before ({before})")
    if before == 0:
        return 0.0
    return round((before - after) / before * 100.0, 2)


def make_reduction(nodes_before, nodes_after, edges_before, edges_after,
                   edge_growth: bool = False) -> ReductionStat:
    """``edge_growth`` permits a negative edge reduction (added call edges)."""
    return ReductionStat(nodes_before, nodes_after, edges_before, edges_after,
                         pct_reduction(nodes_before, nodes_after),
                         pct_reduction(edges_before, edges_after, edge_growth))


def count_token_savings(token_graph_size: tuple[float, float], pruned: MethodGraph | tuple[float, float]
                        ) -> ReductionStat:
    """Node/edge reduction from a token-level graph to the pruned statement graph.

    ``pruned`` may be a MethodGraph (counted as root + statements, and its edges)
    or a raw ``(nodes, edges)`` pair for aggregate accounting.
    """
    nb, eb = token_graph_size
    if isinstance(pruned, MethodGraph):
        na, ea = len(pruned.nodes) + 1, len(pruned.edges)
    else:
        na, ea = pruned
    return make_reduction(nb, na, eb, ea)
