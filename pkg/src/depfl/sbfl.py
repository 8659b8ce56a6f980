"""Ochiai spectrum baseline with statement -> method aggregation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import fmean

from .facts import FaultInstance

AGGREGATORS = {"max": max, "mean": fmean, "sum": math.fsum}


@dataclass(frozen=True)
class SpectrumCounts:
    a_ef: int
    a_nf: int
    a_ep: int
    a_np: int = 0


def ochiai(c: SpectrumCounts) -> float:
    denom = math.sqrt((c.a_ef + c.a_nf) * (c.a_ef + c.a_ep))
    if denom == 0:
        return 0.0
    return c.a_ef / denom


def spectra(instance: FaultInstance) -> dict[str, SpectrumCounts]:
    cov = instance.coverage
    n_fail, n_pass = len(cov.failing), len(cov.passing)
    out = {}
    for s in instance.code.statement_index:
        tests = cov.tests_covering.get(s, frozenset())
        ef = len(tests & cov.failing)
        ep = len(tests & cov.passing)
        out[s] = SpectrumCounts(ef, n_fail - ef, ep, n_pass - ep)
    return out


def rank_methods_ochiai(instance: FaultInstance, aggregate: str = "max") -> list[tuple[str, float]]:
    """Ranked ``(method, score)`` pairs, best first; ties break on method id.

    Every method with at least one statement is a candidate.
    """
    agg = AGGREGATORS[aggregate]
    per_method: dict[str, list[float]] = {}
    for s, counts in spectra(instance).items():
        per_method.setdefault(instance.code.statement_index[s].owner, []).append(ochiai(counts))
    scored = [(m, float(agg(v))) for m, v in per_method.items()]
    return sorted(scored, key=lambda ms: (-ms[1], ms[0]))
