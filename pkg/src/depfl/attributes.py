"""Node attributes: name-based test correlation and code-change history."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from typing import Sequence

from .assembly import Role, UnifiedGraph
from .facts import STATEMENT_KINDS, AstNodeKind, ChangeFacts, FaultInstance, Outcome

SIX_MONTHS_S = 15_778_800  # 182.625 days

METHOD_KIND_CODE = len(STATEMENT_KINDS)
TEST_KIND_CODE = METHOD_KIND_CODE + 1
KIND_CODE = {k: i for i, k in enumerate(STATEMENT_KINDS)}
KIND_CODE[AstNodeKind.METHOD_DECLARATION] = METHOD_KIND_CODE

_TOKEN_RE = re.compile(r"[A-Z]+(?=[A-Z][a-z]|[0-9]|$)|[A-Z]?[a-z]+|[A-Z]+|[0-9]+")


class EmptyFailingTests(ValueError):
    pass


class UnknownMethodFile(KeyError):
    pass


class MissingChangeFacts(ValueError):
    pass


def tokenize(identifier: str) -> list[str]:
    """Camel-case split: ``parseHTML4Doc`` -> ``['parse', 'html', '4', 'doc']``."""
    out = []
    for chunk in re.split(r"[^A-Za-z0-9]+", identifier):
        out.extend(t.lower() for t in _TOKEN_RE.findall(chunk))
    return out


def simple_name(node_id: str) -> str:
    """``pkg.Cls#name(sig)`` -> ``name``; falls back to the last dotted part."""
    name = node_id.split("#", 1)[1] if "#" in node_id else node_id.rsplit(".", 1)[-1]
    return name.split("(", 1)[0]


def similarity(method_tokens: set[str], test_tokens: set[str]) -> float:
    if not test_tokens:
        return 0.0
    return len(method_tokens & test_tokens) / len(test_tokens)


def test_correlation(method_name: str, failing_tests: Sequence[str]) -> float:
    """Best overlap ratio of the method's name tokens against any failing test name."""
    if not failing_tests:
        raise EmptyFailingTests("test correlation needs at least one failing test")
    wm = set(tokenize(method_name))
    return max(similarity(wm, set(tokenize(t))) for t in failing_tests)


test_correlation.__test__ = False


@dataclass(frozen=True)
class ChangeMetrics:
    churn_all: int = 0
    churn_recent: int = 0
    mmc_all: int = 0
    mmc_recent: int = 0

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.churn_all, self.churn_recent, self.mmc_all, self.mmc_recent)


def change_metrics(method: str, changes: ChangeFacts, faulty_ts: int,
                   method_span: tuple[int, int]) -> ChangeMetrics:
    try:
        path = changes.method_files[method]
    except KeyError:
        raise UnknownMethodFile(method) from None
    lo, hi = method_span
    window_start = faulty_ts - SIX_MONTHS_S
    churn_all = churn_recent = 0
    commits_all: set[str] = set()
    commits_recent: set[str] = set()
    for h in changes.hunks:
        if h.file != path or h.span[1] < lo or h.span[0] > hi:
            continue
        lines = h.added + h.deleted
        churn_all += lines
        commits_all.add(h.commit)
        if window_start <= changes.commits[h.commit] < faulty_ts:
            churn_recent += lines
            commits_recent.add(h.commit)
    return ChangeMetrics(churn_all, churn_recent, len(commits_all), len(commits_recent))


@dataclass(frozen=True)
class AttributeConfig:
    code_change: bool = True


@dataclass(frozen=True)
class AttributeVector:
    role: Role
    kind_code: int
    test_correlation: float | None = None
    change: tuple[float, float, float, float] | None = None  # scaled churn_all, churn_recent, mmc_all, mmc_recent
    outcome: int | None = None  # pass 0 / fail 1

    def method_features(self) -> tuple[float, ...]:
        tc = self.test_correlation or 0.0
        return (tc, *(self.change or (0.0, 0.0, 0.0, 0.0)))

    def to_json(self) -> dict:
        out = {"role": self.role.value, "kind_code": self.kind_code}
        if self.test_correlation is not None:
            out["test_correlation"] = self.test_correlation
        if self.change is not None:
            out["change"] = list(self.change)
        if self.outcome is not None:
            out["outcome"] = self.outcome
        return out


def _minmax_log(values: list[float]) -> list[float]:
    logs = [math.log1p(v) for v in values]
    lo, hi = min(logs), max(logs)
    if hi == lo:
        return [0.0] * len(logs)
    return [(v - lo) / (hi - lo) for v in logs]


def attach_attributes(g: UnifiedGraph, instance: FaultInstance,
                      config: AttributeConfig = AttributeConfig()) -> UnifiedGraph:
    if config.code_change and (instance.changes is None or instance.faulty_commit_ts is None):
        raise MissingChangeFacts(f"{instance.fault_id}: code-change attributes need changes.jsonl "
                                 "and faulty_commit_ts")
    failing_names = [simple_name(t) for t in sorted(instance.coverage.failing)]
    methods = g.method_nodes

    scaled: dict[int, tuple[float, ...]] = {}
    if config.code_change and methods:
        raw = [change_metrics(n.id, instance.changes, instance.faulty_commit_ts,
                              instance.code.method_index[n.id].span).as_tuple() for n in methods]
        cols = [_minmax_log([r[j] for r in raw]) for j in range(4)]
        scaled = {n.index: tuple(cols[j][i] for j in range(4)) for i, n in enumerate(methods)}

    attrs = {}
    for n in g.nodes:
        if n.role is Role.METHOD:
            attrs[n.index] = AttributeVector(
                n.role, METHOD_KIND_CODE,
                test_correlation=test_correlation(simple_name(n.id), failing_names),
                change=scaled.get(n.index))
        elif n.role is Role.STATEMENT:
            attrs[n.index] = AttributeVector(n.role, KIND_CODE[n.kind])
        else:
            attrs[n.index] = AttributeVector(n.role, TEST_KIND_CODE,
                                             outcome=int(n.kind is Outcome.FAIL))
    return replace(g, node_attrs=attrs)
