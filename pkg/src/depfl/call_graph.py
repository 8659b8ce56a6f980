"""Static caller -> callee graph and reachability."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping

from .facts import CallFacts


@dataclass(frozen=True)
class CallGraph:
    adjacency: Mapping[str, frozenset[str]]

    def callees(self, m: str) -> frozenset[str]:
        return self.adjacency.get(m, frozenset())


def build_call_graph(calls: CallFacts, methods: Iterable[str] = ()) -> CallGraph:
    """Deduplicated adjacency. ``methods`` seeds empty entries for call-free methods.

    Test-entry edges (caller is a test id) are kept as ordinary sources so that
    reachability from a test can be asked directly.
    """
    adj: dict[str, set[str]] = {m: set() for m in methods}
    for caller, callee in calls.edges:
        adj.setdefault(caller, set()).add(callee)
        adj.setdefault(callee, set())
    return CallGraph({k: frozenset(v) for k, v in sorted(adj.items())})


def reachable_from(g: CallGraph, roots: Iterable[str]) -> set[str]:
    seen = set(roots)
    queue = deque(seen)
    while queue:
        for nxt in g.callees(queue.popleft()):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def entry_methods(calls: CallFacts, tests: Iterable[str]) -> set[str]:
    """Methods invoked directly by any of ``tests``."""
    tests = set(tests)
    return {callee for caller, callee in calls.edges if caller in tests}

