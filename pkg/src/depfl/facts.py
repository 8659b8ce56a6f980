"""Neutral fact formats: code, call, coverage, change and label records.

A fault instance lives in one directory::

    code.jsonl      {"k":"method","id":..,"span":[s,e]}
                    {"k":"stmt","id":..,"owner":..,"kind":..,"span":[s,e]}
                    {"k":"edge","from":..,"to":..}            (optional "rel": "parent" | "next")
    calls.jsonl     {"caller":..,"callee":..}                 (caller may be a test id)
    coverage.jsonl  {"test":..,"outcome":"pass"|"fail"}  /  {"test":..,"covers":stmt_id}
    changes.jsonl   {"commit":..,"ts":int}
                    {"commit":..,"file":..,"span":[s,e],"add":int,"del":int}
                    {"method":..,"file":..}
    labels.json     {"faulty_methods":[..],"faulty_commit_ts":int}

Unknown fields are rejected. Duplicate call and coverage records collapse.
"""
from __future__ import annotations

import enum
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator

NODE_KIND_VERSION = 1


class AstNodeKind(enum.Enum):
    IF = "IfStatement"
    RETURN = "ReturnStatement"
    FOR = "ForStatement"
    WHILE = "WhileStatement"
    DO = "DoStatement"
    SWITCH = "SwitchStatement"
    TRY = "TryStatement"
    THROW = "ThrowStatement"
    ASSERT = "AssertStatement"
    BREAK = "BreakStatement"
    CONTINUE = "ContinueStatement"
    LOCAL_VAR = "LocalVariableDeclaration"
    EXPRESSION = "ExpressionStatement"
    METHOD_DECLARATION = "MethodDeclaration"


# Version NODE_KIND_VERSION of the preserved statement taxonomy. Order fixes the kind codes.
STATEMENT_KINDS: tuple[AstNodeKind, ...] = tuple(
    k for k in AstNodeKind if k is not AstNodeKind.METHOD_DECLARATION
)
assert len(STATEMENT_KINDS) == 13


class Outcome(enum.Enum):
    PASS = "pass"
    FAIL = "fail"


class FactsError(Exception):
    """Base class for ingestion failures."""


class MissingFile(FactsError):
    pass


class SchemaViolation(FactsError):
    pass


class DanglingReference(FactsError):
    pass


class NoFailingTest(FactsError):
    pass


Span = tuple[int, int]


@dataclass(frozen=True, order=True)
class Method:
    id: str
    span: Span


@dataclass(frozen=True, order=True)
class Statement:
    id: str
    owner: str
    kind: AstNodeKind = field(compare=False)
    span: Span = (1, 1)


@dataclass(frozen=True, order=True)
class CodeEdge:
    src: str
    dst: str
    rel: str = "parent"  # "parent" (tree edge) or "next" (sequential sibling)


@dataclass(frozen=True)
class CodeFacts:
    methods: tuple[Method, ...]
    statements: tuple[Statement, ...]
    edges: tuple[CodeEdge, ...]

    @cached_property
    def method_index(self) -> dict[str, Method]:
        return {m.id: m for m in self.methods}

    @cached_property
    def statement_index(self) -> dict[str, Statement]:
        return {s.id: s for s in self.statements}

    @cached_property
    def statements_of(self) -> dict[str, list[Statement]]:
        out: dict[str, list[Statement]] = {m.id: [] for m in self.methods}
        for s in self.statements:
            out.setdefault(s.owner, []).append(s)
        return out

    def owner_of(self, node_id: str) -> str | None:
        if node_id in self.method_index:
            return node_id
        s = self.statement_index.get(node_id)
        return s.owner if s else None


@dataclass(frozen=True)
class CallFacts:
    edges: frozenset[tuple[str, str]] = frozenset()


@dataclass(frozen=True)
class CoverageFacts:
    outcomes: dict[str, Outcome]
    covered: frozenset[tuple[str, str]]  # (test, statement)

    @cached_property
    def failing(self) -> frozenset[str]:
        return frozenset(t for t, o in self.outcomes.items() if o is Outcome.FAIL)

    @cached_property
    def passing(self) -> frozenset[str]:
        return frozenset(t for t, o in self.outcomes.items() if o is Outcome.PASS)

    @cached_property
    def tests_covering(self) -> dict[str, frozenset[str]]:
        acc: dict[str, set[str]] = defaultdict(set)
        for t, s in self.covered:
            acc[s].add(t)
        return {s: frozenset(ts) for s, ts in acc.items()}


@dataclass(frozen=True, order=True)
class Hunk:
    commit: str
    file: str
    span: Span
    added: int
    deleted: int


@dataclass(frozen=True)
class ChangeFacts:
    commits: dict[str, int]
    hunks: tuple[Hunk, ...]
    method_files: dict[str, str]


@dataclass(frozen=True)
class FaultInstance:
    fault_id: str
    code: CodeFacts
    calls: CallFacts
    coverage: CoverageFacts
    ground_truth: frozenset[str]
    changes: ChangeFacts | None = None
    faulty_commit_ts: int | None = None


@dataclass
class ValidationReport:
    violations: list[tuple[str, str]] = field(default_factory=list)  # (fault_id, message)

    def __bool__(self) -> bool:
        return bool(self.violations)

    def __len__(self) -> int:
        return len(self.violations)

    def format(self) -> str:
        return "\n".join(f"{fid}: {msg}" for fid, msg in self.violations)


# ---------------------------------------------------------------------------
# parsing

def _read_jsonl(path: Path) -> Iterator[tuple[int, dict]]:
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(f"{path.name}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise SchemaViolation(f"{path.name}:{lineno}: expected an object")
            yield lineno, rec


def _check_keys(rec: dict, required: set[str], optional: set[str], where: str) -> None:
    keys = set(rec)
    missing = required - keys
    if missing:
        raise SchemaViolation(f"{where}: missing field(s) {sorted(missing)}")
    extra = keys - required - optional
    if extra:
        raise SchemaViolation(f"{where}: unknown field(s) {sorted(extra)}")


def _str(rec: dict, key: str, where: str) -> str:
    v = rec[key]
    if not isinstance(v, str) or not v:
        raise SchemaViolation(f"{where}: {key!r} must be a non-empty string")
    return v


def _int(rec: dict, key: str, where: str, minimum: int | None = None) -> int:
    v = rec[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaViolation(f"{where}: {key!r} must be an integer")
    if minimum is not None and v < minimum:
        raise SchemaViolation(f"{where}: {key!r} must be >= {minimum}")
    return v


def _span(rec: dict, where: str) -> Span:
    v = rec["span"]
    if (not isinstance(v, list) or len(v) != 2
            or any(isinstance(x, bool) or not isinstance(x, int) for x in v)):
        raise SchemaViolation(f"{where}: span must be [start, end] integers")
    s, e = v
    if s < 1 or s > e:
        raise SchemaViolation(f"{where}: bad span {v} (need 1 <= start <= end)")
    return (s, e)


def _kind(rec: dict, where: str) -> AstNodeKind:
    try:
        kind = AstNodeKind(rec["kind"])
    except ValueError:
        raise SchemaViolation(f"{where}: unknown statement kind {rec['kind']!r}") from None
    if kind is AstNodeKind.METHOD_DECLARATION:
        raise SchemaViolation(f"{where}: MethodDeclaration is reserved for method roots")
    return kind


def parse_code(path: Path) -> CodeFacts:
    methods, stmts, edges = [], [], set()
    for lineno, rec in _read_jsonl(path):
        where = f"{path.name}:{lineno}"
        k = rec.get("k")
        if k == "method":
            _check_keys(rec, {"k", "id", "span"}, set(), where)
            methods.append(Method(_str(rec, "id", where), _span(rec, where)))
        elif k == "stmt":
            _check_keys(rec, {"k", "id", "owner", "kind", "span"}, set(), where)
            stmts.append(Statement(_str(rec, "id", where), _str(rec, "owner", where),
                                   _kind(rec, where), _span(rec, where)))
        elif k == "edge":
            _check_keys(rec, {"k", "from", "to"}, {"rel"}, where)
            rel = rec.get("rel", "parent")
            if rel not in ("parent", "next"):
                raise SchemaViolation(f"{where}: rel must be 'parent' or 'next'")
            edges.add(CodeEdge(_str(rec, "from", where), _str(rec, "to", where), rel))
        else:
            raise SchemaViolation(f"{where}: unknown record kind {k!r}")
    # identical duplicates collapse; conflicting duplicates survive for the checker
    return CodeFacts(tuple(sorted(set(methods))), tuple(sorted(set(stmts), key=_stmt_key)),
                     tuple(sorted(edges)))


def _stmt_key(s: Statement):
    return (s.id, s.owner, s.kind.value, s.span)


def parse_calls(path: Path) -> CallFacts:
    edges = set()
    for lineno, rec in _read_jsonl(path):
        where = f"{path.name}:{lineno}"
        _check_keys(rec, {"caller", "callee"}, set(), where)
        edges.add((_str(rec, "caller", where), _str(rec, "callee", where)))
    return CallFacts(frozenset(edges))


def parse_coverage(path: Path) -> CoverageFacts:
    outcomes: dict[str, Outcome] = {}
    covered = set()
    for lineno, rec in _read_jsonl(path):
        where = f"{path.name}:{lineno}"
        if "outcome" in rec:
            _check_keys(rec, {"test", "outcome"}, set(), where)
            test = _str(rec, "test", where)
            try:
                outcome = Outcome(rec["outcome"])
            except ValueError:
                raise SchemaViolation(f"{where}: outcome must be 'pass' or 'fail'") from None
            if outcomes.get(test, outcome) is not outcome:
                raise SchemaViolation(f"{where}: conflicting outcomes for test {test!r}")
            outcomes[test] = outcome
        else:
            _check_keys(rec, {"test", "covers"}, set(), where)
            covered.add((_str(rec, "test", where), _str(rec, "covers", where)))
    return CoverageFacts(dict(sorted(outcomes.items())), frozenset(covered))


def parse_changes(path: Path) -> ChangeFacts:
    commits: dict[str, int] = {}
    hunks = set()
    method_files: dict[str, str] = {}
    for lineno, rec in _read_jsonl(path):
        where = f"{path.name}:{lineno}"
        if "method" in rec:
            _check_keys(rec, {"method", "file"}, set(), where)
            m, f = _str(rec, "method", where), _str(rec, "file", where)
            if method_files.get(m, f) != f:
                raise SchemaViolation(f"{where}: method {m!r} mapped to two files")
            method_files[m] = f
        elif "ts" in rec:
            _check_keys(rec, {"commit", "ts"}, set(), where)
            c, ts = _str(rec, "commit", where), _int(rec, "ts", where)
            if commits.get(c, ts) != ts:
                raise SchemaViolation(f"{where}: commit {c!r} has two timestamps")
            commits[c] = ts
        else:
            _check_keys(rec, {"commit", "file", "span", "add", "del"}, set(), where)
            hunks.add(Hunk(_str(rec, "commit", where), _str(rec, "file", where), _span(rec, where),
                           _int(rec, "add", where, 0), _int(rec, "del", where, 0)))
    return ChangeFacts(dict(sorted(commits.items())), tuple(sorted(hunks)),
                       dict(sorted(method_files.items())))


def parse_labels(path: Path) -> tuple[frozenset[str], int | None]:
    try:
        rec = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"{path.name}: invalid JSON ({exc.msg})") from None
    if not isinstance(rec, dict):
        raise SchemaViolation(f"{path.name}: expected an object")
    _check_keys(rec, {"faulty_methods"}, {"faulty_commit_ts"}, path.name)
    fm = rec["faulty_methods"]
    if not isinstance(fm, list) or not all(isinstance(x, str) and x for x in fm):
        raise SchemaViolation(f"{path.name}: faulty_methods must be a list of ids")
    ts = _int(rec, "faulty_commit_ts", path.name) if "faulty_commit_ts" in rec else None
    return frozenset(fm), ts


REQUIRED_FILES = ("code.jsonl", "calls.jsonl", "coverage.jsonl", "labels.json")


def load_fault_instance(path: str | Path) -> FaultInstance:
    """Load and validate one fault-instance directory.

    Raises the first violation found as MissingFile, SchemaViolation,
    DanglingReference or NoFailingTest.
    """
    root = Path(path)
    for name in REQUIRED_FILES:
        if not (root / name).is_file():
            raise MissingFile(f"{root}: missing {name}")
    code = parse_code(root / "code.jsonl")
    calls = parse_calls(root / "calls.jsonl")
    coverage = parse_coverage(root / "coverage.jsonl")
    truth, ts = parse_labels(root / "labels.json")
    changes = parse_changes(root / "changes.jsonl") if (root / "changes.jsonl").is_file() else None
    inst = FaultInstance(root.name, code, calls, coverage, truth, changes, ts)
    for err, msg in check_instance(inst):
        raise err(f"{root.name}: {msg}")
    return inst


def load_project(path: str | Path) -> list[FaultInstance]:
    """Load every instance directory under ``path``, sorted by fault id."""
    root = Path(path)
    if (root / "code.jsonl").is_file():
        return [load_fault_instance(root)]
    dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not dirs:
        raise MissingFile(f"{root}: no fault instance directories")
    return [load_fault_instance(d) for d in dirs]


def load_corpus(path: str | Path) -> dict[str, list[FaultInstance]]:
    """Load ``path/<project>/<instance>/`` into a project map."""
    root = Path(path)
    projects = sorted(p for p in root.iterdir() if p.is_dir())
    if not projects:
        raise MissingFile(f"{root}: no project directories")
    return {p.name: load_project(p) for p in projects}


# ---------------------------------------------------------------------------
# validation

def check_instance(inst: FaultInstance) -> Iterator[tuple[type[FactsError], str]]:
    code = inst.code
    method_ids = Counter(m.id for m in code.methods)
    for mid, n in sorted(method_ids.items()):
        if n > 1:
            yield SchemaViolation, f"method {mid!r} declared {n} times"

    owners: dict[str, set[str]] = defaultdict(set)
    for s in code.statements:
        owners[s.id].add(s.owner)
        if s.owner not in method_ids:
            yield DanglingReference, f"statement {s.id!r} owned by unknown method {s.owner!r}"
        if s.id in method_ids:
            yield SchemaViolation, f"id {s.id!r} used for both a method and a statement"
    for sid, os_ in sorted(owners.items()):
        if len(os_) > 1:
            yield SchemaViolation, f"statement in two methods: {sid!r} ({', '.join(sorted(os_))})"

    stmt_owner = {s.id: s.owner for s in code.statements}
    node_owner = dict(stmt_owner)
    node_owner.update({m: m for m in method_ids})
    parents: dict[str, list[str]] = defaultdict(list)
    adj: dict[str, list[str]] = defaultdict(list)
    for e in code.edges:
        if e.src not in node_owner or e.dst not in node_owner:
            missing = e.src if e.src not in node_owner else e.dst
            yield DanglingReference, f"code edge {e.src!r}->{e.dst!r} references unknown node {missing!r}"
            continue
        if e.dst in method_ids:
            yield SchemaViolation, f"code edge into method root {e.dst!r}"
            continue
        if node_owner[e.src] != node_owner[e.dst]:
            yield SchemaViolation, (f"statement in two methods: code edge {e.src!r}->{e.dst!r} "
                                    "crosses method boundary")
            continue
        if e.rel == "parent":
            parents[e.dst].append(e.src)
        elif e.src in method_ids:
            yield SchemaViolation, f"sequential edge from method root {e.src!r}"
        adj[e.src].append(e.dst)
    for sid in sorted(stmt_owner):
        n = len(parents.get(sid, ()))
        if n != 1:
            yield SchemaViolation, f"statement {sid!r} has {n} parent edges (need exactly 1)"
    cyc = _find_cycle(adj)
    if cyc:
        yield SchemaViolation, f"code edges form a cycle through {cyc!r}"

    tests = inst.coverage.outcomes
    for caller, callee in sorted(inst.calls.edges):
        if caller not in method_ids and caller not in tests:
            yield DanglingReference, f"call edge from unknown caller {caller!r}"
        if callee not in method_ids:
            yield DanglingReference, f"call edge to unknown method {callee!r}"
    for t, s in sorted(inst.coverage.covered):
        if t not in tests:
            yield DanglingReference, f"coverage of undeclared test {t!r}"
        if s not in stmt_owner:
            yield DanglingReference, f"coverage references unknown statement {s!r}"
    for t in tests:
        if t in node_owner:
            yield SchemaViolation, f"test id {t!r} collides with a code node id"
    if not inst.coverage.failing:
        yield NoFailingTest, "no failing test"

    if not inst.ground_truth:
        yield SchemaViolation, "ground truth is empty"
    for m in sorted(inst.ground_truth):
        if m not in method_ids:
            yield DanglingReference, f"ground-truth method {m!r} unknown"

    ch = inst.changes
    if ch is not None:
        for h in ch.hunks:
            if h.commit not in ch.commits:
                yield DanglingReference, f"hunk references unknown commit {h.commit!r}"
        for m in ch.method_files:
            if m not in method_ids:
                yield DanglingReference, f"file mapping for unknown method {m!r}"
        if inst.faulty_commit_ts is not None:
            late = [c for c, ts in ch.commits.items() if ts > inst.faulty_commit_ts]
            if late:
                yield SchemaViolation, f"commit {sorted(late)[0]!r} is newer than the faulty commit"


def _find_cycle(adj: dict[str, list[str]]) -> str | None:
    WHITE, GREY, BLACK = 0, 1, 2
    color: dict[str, int] = defaultdict(int)
    for start in sorted(adj):
        if color[start]:
            continue
        stack = [(start, iter(adj.get(start, ())))]
        color[start] = GREY
        while stack:
            node, it = stack[-1]
            for nxt in it:
                if color[nxt] == GREY:
                    return nxt
                if color[nxt] == WHITE:
                    color[nxt] = GREY
                    stack.append((nxt, iter(adj.get(nxt, ()))))
                    break
            else:
                color[node] = BLACK
                stack.pop()
    return None


def validate_corpus(instances: Iterable[FaultInstance]) -> ValidationReport:
    report = ValidationReport()
    for inst in instances:
        for _, msg in check_instance(inst):
            report.violations.append((inst.fault_id, msg))
    return report


# ---------------------------------------------------------------------------
# canonical serialization

def _dump(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_files(inst: FaultInstance) -> dict[str, str]:
    """Canonical text of every file for ``inst`` (sorted keys, sorted records)."""
    code = [_dump({"k": "method", "id": m.id, "span": list(m.span)}) for m in inst.code.methods]
    code += [_dump({"k": "stmt", "id": s.id, "owner": s.owner, "kind": s.kind.value,
                    "span": list(s.span)}) for s in inst.code.statements]
    for e in inst.code.edges:
        rec = {"k": "edge", "from": e.src, "to": e.dst}
        if e.rel != "parent":
            rec["rel"] = e.rel
        code.append(_dump(rec))
    calls = [_dump({"caller": a, "callee": b}) for a, b in inst.calls.edges]
    cov = [_dump({"test": t, "outcome": o.value}) for t, o in inst.coverage.outcomes.items()]
    cov += [_dump({"test": t, "covers": s}) for t, s in inst.coverage.covered]
    labels = {"faulty_methods": sorted(inst.ground_truth)}
    if inst.faulty_commit_ts is not None:
        labels["faulty_commit_ts"] = inst.faulty_commit_ts
    out = {
        "code.jsonl": _lines(code),
        "calls.jsonl": _lines(calls),
        "coverage.jsonl": _lines(cov),
        "labels.json": _dump(labels) + "\n",
    }
    if inst.changes is not None:
        ch = inst.changes
        rows = [_dump({"commit": c, "ts": ts}) for c, ts in ch.commits.items()]
        rows += [_dump({"commit": h.commit, "file": h.file, "span": list(h.span),
                        "add": h.added, "del": h.deleted}) for h in ch.hunks]
        rows += [_dump({"method": m, "file": f}) for m, f in ch.method_files.items()]
        out["changes.jsonl"] = _lines(rows)
    return out


def _lines(rows: list[str]) -> str:
    return "".join(r + "\n" for r in sorted(rows))


def write_fault_instance(inst: FaultInstance, path: str | Path) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for name, text in canonical_files(inst).items():
        (root / name).write_text(text, encoding="utf-8")
    return root
