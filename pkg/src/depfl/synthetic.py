"""Synthetic fault corpora with known ground truth.

Each instance has a call graph split into a statically reachable side (reached
from the failing tests' entry calls) and an unreachable side that no reachable
method calls. A configurable share of the methods covered by failing tests sits
on the unreachable side, mimicking coverage without a call path (e.g. field
initializers). The generator records which methods it made reachable and the
graph sizes that pruning should produce, so downstream checks have an oracle
that does not go through the pipeline.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from .facts import (STATEMENT_KINDS, AstNodeKind, CallFacts, ChangeFacts, CodeEdge, CodeFacts,
                    CoverageFacts, FaultInstance, Hunk, Method, Outcome, Statement)

Difficulty = Literal["easy", "medium", "hard"]

FAULTY_TS = 1_600_000_000
DAY = 86_400

_VERBS = ("get", "set", "parse", "read", "write", "build", "find", "load", "check", "format",
          "escape", "merge", "split", "apply", "resolve", "compute", "convert", "update", "encode",
          "decode", "match", "append", "render", "validate", "create")
_NOUNS = ("Value", "Entity", "Token", "Node", "Buffer", "Header", "Option", "Field", "Record",
          "Stream", "Path", "Name", "Range", "Date", "Number", "String", "Map", "Entry", "Char",
          "Index", "Line", "Block", "Key", "Type", "Format", "Digest", "Zone", "Parser")
_COMPOUND = {AstNodeKind.IF, AstNodeKind.FOR, AstNodeKind.WHILE, AstNodeKind.DO,
             AstNodeKind.SWITCH, AstNodeKind.TRY}


class InfeasibleConfig(ValueError):
    pass


@dataclass(frozen=True)
class Preset:
    fault_pass_prob: float   # chance a passing test also covers the faulty method
    decoy_frac: float        # share of non-faulty covered methods hit by every failing test
    decoy_pass_prob: float   # chance a passing test covers a decoy
    name_signal: float       # chance a failing test is named after the faulty method


PRESETS: dict[str, Preset] = {
    "easy": Preset(0.0, 0.0, 0.0, 1.0),
    "medium": Preset(0.3, 0.35, 0.05, 0.5),
    "hard": Preset(0.6, 0.6, 0.0, 0.2),
}


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    n_methods: int = 20
    stmts_per_method: tuple[int, int] = (2, 6)
    n_tests: int = 12
    fail_fraction: float = 0.25
    covered_fraction: float = 0.6
    unreachable_covered_fraction: float = 0.25
    difficulty: Difficulty = "easy"
    change_density: float = 1.0        # 0 disables change facts
    n_faulty: int = 1
    fault_churn_boost: int = 3         # extra recent commits on each faulty method
    name_signal: float | None = None   # overrides the preset's value when set
    pass_cover_prob: float = 0.3

    def preset(self) -> Preset:
        p = PRESETS[self.difficulty]
        return p if self.name_signal is None else replace(p, name_signal=self.name_signal)


@dataclass(frozen=True)
class GeneratorTruth:
    """Construction-time bookkeeping used as an oracle."""

    covered_methods: frozenset[str]
    reachable_methods: frozenset[str]    # every method on the reachable side
    unreachable_covered: frozenset[str]
    grace_size: tuple[int, int]          # (nodes, edges) expected after failing-coverage pruning
    depgraph_size: tuple[int, int]       # (nodes, edges) expected after reachability pruning

    @property
    def retained_methods(self) -> frozenset[str]:
        return self.covered_methods & self.reachable_methods

    def expected_pct(self) -> tuple[float, float]:
        (nb, eb), (na, ea) = self.grace_size, self.depgraph_size
        return (nb - na) / nb * 100.0, (eb - ea) / eb * 100.0


@dataclass(frozen=True)
class GeneratedInstance:
    instance: FaultInstance
    truth: GeneratorTruth


def _check(cfg: GeneratorConfig) -> None:
    for name in ("fail_fraction", "covered_fraction", "unreachable_covered_fraction"):
        v = getattr(cfg, name)
        if not 0.0 <= v <= 1.0:
            raise InfeasibleConfig(f"{name}={v} outside [0, 1]")
    if cfg.n_methods < 2:
        raise InfeasibleConfig("need at least two methods")
    if cfg.n_tests < 1:
        raise InfeasibleConfig("need at least one test")
    lo, hi = cfg.stmts_per_method
    if lo < 1 or hi < lo:
        raise InfeasibleConfig("stmts_per_method must satisfy 1 <= lo <= hi")
    if cfg.difficulty not in PRESETS:
        raise InfeasibleConfig(f"unknown difficulty {cfg.difficulty!r}")
    if not 1 <= cfg.n_faulty < cfg.n_methods:
        raise InfeasibleConfig("n_faulty must be in [1, n_methods)")


def _method_names(rng: np.random.Generator, n: int) -> list[str]:
    names: list[str] = []
    seen = set()
    while len(names) < n:
        name = _VERBS[rng.integers(len(_VERBS))] + _NOUNS[rng.integers(len(_NOUNS))]
        if rng.random() < 0.3:
            name += _NOUNS[rng.integers(len(_NOUNS))]
        if name not in seen:
            seen.add(name)
            names.append(name)
    return names


def _camel(name: str) -> str:
    return name[0].upper() + name[1:]


def generate(cfg: GeneratorConfig, prefix: str = "p", fault_id: str | None = None) -> GeneratedInstance:
    """Generate one instance together with its construction record."""
    _check(cfg)
    rng = np.random.default_rng(cfg.seed)
    preset = cfg.preset()
    n = cfg.n_methods

    # --- methods and statements --------------------------------------------
    names = _method_names(rng, n)
    n_classes = max(1, n // 5)
    cls_of = [int(rng.integers(n_classes)) for _ in range(n)]
    next_line = [1] * n_classes
    methods, stmts, edges = [], [], []
    mids: list[str] = []
    stmt_of: dict[str, list[str]] = {}
    method_file: dict[str, str] = {}
    spans: dict[str, tuple[int, int]] = {}
    for k in range(n):
        c = cls_of[k]
        mid = f"org.{prefix}.C{c}#{names[k]}()"
        mids.append(mid)
        count = int(rng.integers(cfg.stmts_per_method[0], cfg.stmts_per_method[1] + 1))
        start = next_line[c]
        span = (start, start + count + 1)
        next_line[c] = span[1] + 2
        spans[mid] = span
        methods.append(Method(mid, span))
        method_file[mid] = f"src/org/{prefix}/C{c}.java"
        ids, children, compound = [], {mid: []}, [mid]
        for j in range(count):
            sid = f"{mid}/s{j:02d}"
            kind = STATEMENT_KINDS[int(rng.integers(len(STATEMENT_KINDS)))]
            parent = compound[int(rng.integers(len(compound)))]
            stmts.append(Statement(sid, mid, kind, (start + 1 + j, start + 1 + j)))
            edges.append(CodeEdge(parent, sid))
            sibs = children.setdefault(parent, [])
            if sibs:
                edges.append(CodeEdge(sibs[-1], sid, "next"))
            sibs.append(sid)
            if kind in _COMPOUND:
                compound.append(sid)
                children[sid] = []
            ids.append(sid)
        stmt_of[mid] = ids

    # --- partition ------------------------------------------------------------
    order = [mids[i] for i in rng.permutation(n)]
    n_cov = max(cfg.n_faulty + 1, int(round(cfg.covered_fraction * n)))
    n_cov = min(n_cov, n)
    n_unreach = int(round(cfg.unreachable_covered_fraction * n_cov))
    if n_cov - n_unreach < cfg.n_faulty:
        raise InfeasibleConfig("unreachable fraction leaves no reachable slot for the faulty method(s)")
    covered = order[:n_cov]
    faulty = covered[:cfg.n_faulty]
    others = covered[cfg.n_faulty:]
    unreach_cov = others[len(others) - n_unreach:] if n_unreach else []
    reach_cov = [m for m in covered if m not in unreach_cov]
    uncovered = order[n_cov:]
    half = len(uncovered) // 2
    reach_side = reach_cov + uncovered[:half]
    unreach_side = unreach_cov + uncovered[half:]

    # --- tests -----------------------------------------------------------------
    n_fail = max(1, int(round(cfg.fail_fraction * cfg.n_tests)))
    n_fail = min(n_fail, cfg.n_tests)
    n_pass = cfg.n_tests - n_fail
    name_of = dict(zip(mids, names))

    def test_name(target: str, i: int) -> str:
        return f"test{_camel(name_of[target])}{i}"

    fail_tests, pass_tests = [], []
    for i in range(n_fail):
        target = faulty[0] if rng.random() < preset.name_signal else covered[int(rng.integers(n_cov))]
        fail_tests.append(f"org.{prefix}.Suite{i % 3}Test#{test_name(target, i)}")
    for i in range(n_pass):
        target = mids[int(rng.integers(n))]
        pass_tests.append(f"org.{prefix}.Suite{i % 3}Test#{test_name(target, n_fail + i)}")

    # --- failing coverage (method granularity: all statements) ---------------
    cov_methods: dict[str, set[str]] = {t: set(faulty) for t in fail_tests}
    n_decoys = int(round(preset.decoy_frac * len(others)))
    # decoys prefer the unreachable side, like coverage-only initializers
    decoys = set((unreach_cov + [m for m in others if m not in unreach_cov])[:n_decoys])
    for m in others:
        if m in decoys or n_fail == 1:
            hit = fail_tests
        else:
            k = int(rng.integers(1, n_fail))
            hit = [fail_tests[i] for i in rng.choice(n_fail, size=k, replace=False)]
        for t in hit:
            cov_methods[t].add(m)
    covered_pairs = {(t, s) for t, ms in cov_methods.items() for m in ms for s in stmt_of[m]}

    # --- passing coverage (random statement prefixes) -------------------------
    pass_cov: dict[str, set[str]] = {t: set() for t in pass_tests}
    full_cover: set[tuple[str, str]] = set()
    for t in pass_tests:
        for m in mids:
            if m in faulty:
                p = preset.fault_pass_prob
            elif m in decoys:
                p = preset.decoy_pass_prob
            else:
                p = cfg.pass_cover_prob
            if rng.random() < p:
                pass_cov[t].add(m)
    if pass_tests:
        # non-decoy, non-faulty covered methods need some passing coverage
        for m in others:
            if m in decoys:
                continue
            if n_fail == 1 or not any(m in ms for ms in pass_cov.values()):
                t = pass_tests[int(rng.integers(n_pass))]
                pass_cov[t].add(m)
                full_cover.add((t, m))
    for t, ms in pass_cov.items():
        for m in sorted(ms):
            ids = stmt_of[m]
            upto = len(ids) if (t, m) in full_cover else int(rng.integers(1, len(ids) + 1))
            covered_pairs.update((t, s) for s in ids[:upto])

    # --- call graph -------------------------------------------------------------
    calls: set[tuple[str, str]] = set()
    entries = [m for m in reach_cov if m not in faulty][:2] or list(faulty)
    placed = list(entries)
    for m in [m for m in reach_side if m not in entries]:
        calls.add((placed[int(rng.integers(len(placed)))], m))
        placed.append(m)
    for m in reach_side:
        for _ in range(int(rng.integers(0, 2))):
            calls.add((m, reach_side[int(rng.integers(len(reach_side)))]))
    for m in unreach_side:
        for _ in range(int(rng.integers(0, 3))):
            calls.add((m, mids[int(rng.integers(n))]))
    for t in fail_tests:
        for m in entries:
            calls.add((t, m))
    for t in pass_tests:
        for m in sorted(pass_cov[t])[:2]:
            calls.add((t, m))

    # --- change history ---------------------------------------------------------
    changes = None
    if cfg.change_density > 0:
        commits: dict[str, int] = {}
        hunks: set[Hunk] = set()
        n_commits = max(4, int(round(cfg.change_density * n)))
        for i in range(n_commits):
            commits[f"c{i:04d}"] = FAULTY_TS - int(rng.integers(DAY, 3 * 365 * DAY))
        pool = sorted(commits)

        def touch(m: str, commit: str, big: bool) -> None:
            lo, hi = spans[m]
            a = int(rng.integers(lo, hi + 1))
            b = min(hi, a + int(rng.integers(0, 3)))
            scale = 6 if big else 1
            hunks.add(Hunk(commit, method_file[m], (a, b), int(rng.integers(0, 4)) * scale + 1,
                           int(rng.integers(0, 3)) * scale))

        for m in mids:
            for _ in range(int(rng.poisson(cfg.change_density))):
                touch(m, pool[int(rng.integers(len(pool)))], False)
        for j, m in enumerate(faulty):
            for b in range(cfg.fault_churn_boost):
                cid = f"r{j:02d}{b:02d}"
                commits[cid] = FAULTY_TS - int(rng.integers(DAY, 150 * DAY))
                touch(m, cid, True)
        changes = ChangeFacts(dict(sorted(commits.items())), tuple(sorted(hunks)),
                              dict(sorted(method_file.items())))

    outcomes = {t: Outcome.FAIL for t in fail_tests}
    outcomes.update({t: Outcome.PASS for t in pass_tests})
    inst = FaultInstance(
        fault_id=fault_id or f"{prefix}-seed{cfg.seed}",
        code=CodeFacts(tuple(sorted(methods)), tuple(sorted(stmts, key=lambda s: s.id)),
                       tuple(sorted(set(edges)))),
        calls=CallFacts(frozenset(calls)),
        coverage=CoverageFacts(dict(sorted(outcomes.items())), frozenset(covered_pairs)),
        ground_truth=frozenset(faulty),
        changes=changes,
        faulty_commit_ts=FAULTY_TS if changes is not None else None,
    )

    # --- bookkeeping oracle ------------------------------------------------------
    all_tests_of: dict[str, set[str]] = {m: set() for m in mids}
    for t, ms in cov_methods.items():
        for m in ms:
            all_tests_of[m].add(t)
    for t, ms in pass_cov.items():
        for m in ms:
            all_tests_of[m].add(t)
    n_code_edges = {m: sum(1 for e in edges if e.dst in set(stmt_of[m])) for m in mids}
    pairs_of = {m: sum(1 for t, s in covered_pairs if s in set(stmt_of[m])) for m in mids}

    def size(keep: list[str], with_calls: bool) -> tuple[int, int]:
        keep_set = set(keep)
        tests = set().union(*(all_tests_of[m] for m in keep))
        nodes = len(keep) + sum(len(stmt_of[m]) for m in keep) + len(tests)
        e = sum(n_code_edges[m] + pairs_of[m] + len(all_tests_of[m]) for m in keep)
        if with_calls:
            e += sum(1 for a, b in calls if a in keep_set and b in keep_set)
        return nodes, e

    truth = GeneratorTruth(
        covered_methods=frozenset(covered),
        reachable_methods=frozenset(reach_side),
        unreachable_covered=frozenset(unreach_cov),
        grace_size=size(covered, False),
        depgraph_size=size(reach_cov, True),
    )
    return GeneratedInstance(inst, truth)


def generate_instance(cfg: GeneratorConfig) -> FaultInstance:
    return generate(cfg).instance


def _sub_seed(seed: int, project: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, project, index]).generate_state(1)[0])


def generate_corpus_with_truth(cfg: GeneratorConfig, n_instances: int, n_projects: int = 1
                               ) -> dict[str, list[GeneratedInstance]]:
    if n_instances < 1 or n_projects < 1:
        raise InfeasibleConfig("need at least one project and one instance")
    out = {}
    for j in range(n_projects):
        prefix = f"p{j}"
        out[prefix] = [
            generate(replace(cfg, seed=_sub_seed(cfg.seed, j, i)), prefix, f"{prefix}-f{i:03d}")
            for i in range(n_instances)
        ]
    return out


def generate_corpus(cfg: GeneratorConfig, n_instances: int, n_projects: int = 1
                    ) -> dict[str, list[FaultInstance]]:
    return {p: [g.instance for g in gs]
            for p, gs in generate_corpus_with_truth(cfg, n_instances, n_projects).items()}
