import json
import random
import shutil

import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_instance
from depfl.facts import (STATEMENT_KINDS, AstNodeKind, CodeEdge, DanglingReference, MissingFile,
                         NoFailingTest, SchemaViolation, Statement, canonical_files,
                         load_fault_instance, validate_corpus, write_fault_instance)
from depfl.synthetic import GeneratorConfig, generate_instance


def write(tmp_path, files):
    for name, lines in files.items():
        if name == "labels.json":
            (tmp_path / name).write_text(json.dumps(lines))
        else:
            (tmp_path / name).write_text("".join(json.dumps(r) + "\n" for r in lines))
    return tmp_path


MINIMAL = {
    "code.jsonl": [{"k": "method", "id": "M", "span": [1, 3]},
                   {"k": "stmt", "id": "S1", "owner": "M", "kind": "ReturnStatement", "span": [2, 2]},
                   {"k": "edge", "from": "M", "to": "S1"}],
    "calls.jsonl": [{"caller": "T", "callee": "M"}],
    "coverage.jsonl": [{"test": "T", "outcome": "fail"}, {"test": "T", "covers": "S1"}],
    "labels.json": {"faulty_methods": ["M"]},
}


def test_kind_taxonomy_has_thirteen_statement_kinds():
    assert len(STATEMENT_KINDS) == 13
    assert AstNodeKind.METHOD_DECLARATION not in STATEMENT_KINDS


def test_minimal_instance(tmp_path):
    inst = load_fault_instance(write(tmp_path, MINIMAL))
    assert len(inst.code.methods) == 1
    assert len(inst.code.statements) == 1
    assert len(inst.coverage.outcomes) == 1
    assert inst.ground_truth == {"M"}
    assert inst.changes is None


def test_dangling_coverage(tmp_path):
    files = dict(MINIMAL, **{"coverage.jsonl": MINIMAL["coverage.jsonl"] + [{"test": "T", "covers": "S99"}]})
    with pytest.raises(DanglingReference, match="S99"):
        load_fault_instance(write(tmp_path, files))


def test_all_pass_rejected(tmp_path):
    files = dict(MINIMAL, **{"coverage.jsonl": [{"test": "T", "outcome": "pass"},
                                                {"test": "T", "covers": "S1"}]})
    with pytest.raises(NoFailingTest):
        load_fault_instance(write(tmp_path, files))


def test_missing_file(tmp_path):
    write(tmp_path, MINIMAL)
    (tmp_path / "coverage.jsonl").unlink()
    with pytest.raises(MissingFile, match="coverage.jsonl"):
        load_fault_instance(tmp_path)


@pytest.mark.parametrize("bad", [
    {"k": "stmt", "id": "S2", "owner": "M", "kind": "Lambda", "span": [2, 2]},
    {"k": "stmt", "id": "S2", "owner": "M", "kind": "MethodDeclaration", "span": [2, 2]},
    {"k": "stmt", "id": "S2", "owner": "M", "kind": "IfStatement", "span": [3, 2]},
    {"k": "method", "id": "N", "span": [1, 2], "extra": 1},
    {"k": "widget", "id": "W"},
])
def test_schema_violations(tmp_path, bad):
    files = dict(MINIMAL, **{"code.jsonl": MINIMAL["code.jsonl"] + [bad]})
    with pytest.raises(SchemaViolation):
        load_fault_instance(write(tmp_path, files))


def test_cycle_rejected(tmp_path):
    code = [{"k": "method", "id": "M", "span": [1, 4]},
            {"k": "stmt", "id": "S1", "owner": "M", "kind": "IfStatement", "span": [2, 2]},
            {"k": "stmt", "id": "S2", "owner": "M", "kind": "IfStatement", "span": [3, 3]},
            {"k": "edge", "from": "S1", "to": "S2"},
            {"k": "edge", "from": "S2", "to": "S1"}]
    files = dict(MINIMAL, **{"code.jsonl": code})
    with pytest.raises(SchemaViolation, match="cycle|parent"):
        load_fault_instance(write(tmp_path, files))


def test_duplicates_collapse(tmp_path):
    files = dict(MINIMAL)
    files["calls.jsonl"] = MINIMAL["calls.jsonl"] * 3
    files["coverage.jsonl"] = MINIMAL["coverage.jsonl"] + [{"test": "T", "covers": "S1"}]
    inst = load_fault_instance(write(tmp_path, files))
    assert len(inst.calls.edges) == 1
    assert len(inst.coverage.covered) == 1


def test_validate_corpus_clean():
    insts = [generate_instance(GeneratorConfig(seed=s)) for s in range(3)]
    assert len(validate_corpus(insts)) == 0


def test_self_call_is_valid():
    inst = make_instance({"A": [("s", "ReturnStatement", None)]}, calls={("A", "A"), ("T", "A")},
                         tests={"T": "fail"}, covers={("T", "s")}, truth={"A"})
    assert not validate_corpus([inst])


def test_statement_in_two_methods():
    inst = make_instance({"A": [("s", "ReturnStatement", None)], "B": [("t", "ReturnStatement", None)]},
                         tests={"T": "fail"}, covers={("T", "s")}, truth={"A"})
    clash = Statement("s", "B", AstNodeKind.RETURN, (5, 5))
    code = type(inst.code)(inst.code.methods, inst.code.statements + (clash,), inst.code.edges)
    bad = type(inst)(inst.fault_id, code, inst.calls, inst.coverage, inst.ground_truth)
    report = validate_corpus([bad])
    assert any("statement in two methods" in msg for _, msg in report.violations)


def test_cross_method_edge_reported():
    inst = make_instance({"A": [("s", "IfStatement", None)], "B": [("t", "ReturnStatement", None)]},
                         tests={"T": "fail"}, covers={("T", "s")}, truth={"A"})
    code = type(inst.code)(inst.code.methods, inst.code.statements,
                           inst.code.edges + (CodeEdge("s", "t"),))
    bad = type(inst)(inst.fault_id, code, inst.calls, inst.coverage, inst.ground_truth)
    assert any("statement in two methods" in m for _, m in validate_corpus([bad]).violations)


def test_round_trip_byte_identical(tmp_path):
    inst = generate_instance(GeneratorConfig(seed=5))
    write_fault_instance(inst, tmp_path / "a")
    loaded = load_fault_instance(tmp_path / "a")
    assert canonical_files(loaded) == canonical_files(inst)
    write_fault_instance(loaded, tmp_path / "b")
    for name in canonical_files(inst):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_referential_closure_after_load(tmp_path):
    inst = load_fault_instance(write_fault_instance(generate_instance(GeneratorConfig(seed=9)), tmp_path))
    nodes = set(inst.code.method_index) | set(inst.code.statement_index)
    assert all(e.src in nodes and e.dst in nodes for e in inst.code.edges)
    assert all(b in inst.code.method_index for _, b in inst.calls.edges)
    assert all(s in inst.code.statement_index and t in inst.coverage.outcomes
               for t, s in inst.coverage.covered)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_load_is_order_insensitive(tmp_path_factory, seed):
    inst = generate_instance(GeneratorConfig(seed=seed % 1000, n_methods=6, n_tests=5))
    a = write_fault_instance(inst, tmp_path_factory.mktemp("a"))
    b = tmp_path_factory.mktemp("b")
    rng = random.Random(seed)
    for f in a.iterdir():
        lines = f.read_text().splitlines(keepends=True)
        if f.suffix == ".jsonl":
            rng.shuffle(lines)
        (b / f.name).write_text("".join(lines))
    shutil.rmtree(a)
    assert canonical_files(load_fault_instance(b)) == canonical_files(inst)
