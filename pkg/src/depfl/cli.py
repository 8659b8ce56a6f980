"""Command-line entry point: ``depfl <subcommand> ...``.

Exit codes: 0 success, 1 invalid input facts, 2 any other runtime error.
Progress goes to stderr; artifacts go to ``--output`` (``-`` means stdout).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .assembly import Mode, assemble, graph_to_json, reduction_stats
from .attributes import AttributeConfig, attach_attributes
from .evaluation import TECHNIQUES, cross_project, leave_one_out
from .facts import FactsError, FaultInstance, load_fault_instance, load_project, validate_corpus, write_fault_instance
from .ggnn import TrainConfig, load_checkpoint, prepare, rank, save_checkpoint, train
from .sbfl import AGGREGATORS, rank_methods_ochiai
from .synthetic import GeneratorConfig, generate_corpus

log = logging.getLogger("depfl")

RANK_FIELDS = ("instance_id", "rank", "method_id", "score")
STATS_FIELDS = ("instance_id", "nodes_before", "nodes_after", "edges_before", "edges_after",
                "pct_nodes", "pct_edges")


def _load_projects(path: str) -> dict[str, list[FaultInstance]]:
    """An instance dir, a project dir of instances, or a corpus dir of projects."""
    root = Path(path)
    if (root / "code.jsonl").is_file():
        return {root.name: [load_fault_instance(root)]}
    subdirs = sorted(p for p in root.iterdir() if p.is_dir()) if root.is_dir() else []
    if not subdirs:
        from .facts import MissingFile
        raise MissingFile(f"{root}: no fault instances found")
    if any((d / "code.jsonl").is_file() for d in subdirs):
        return {root.name: load_project(root)}
    return {d.name: load_project(d) for d in subdirs}


def _instances(paths: Sequence[str]) -> list[FaultInstance]:
    out = []
    for p in paths:
        for insts in _load_projects(p).values():
            out.extend(insts)
    return out


def _emit(text: str, output: str) -> None:
    if output == "-":
        sys.stdout.write(text)
    else:
        Path(output).parent.mkdir(parents=True, exist_ok=True)
        Path(output).write_text(text, encoding="utf-8")
        log.info("wrote %s", output)


def _csv(fields: Sequence[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _train_config(args) -> TrainConfig:
    return TrainConfig(lr=args.lr, epochs=args.epochs, dim=args.dim, seed=args.seed)


def _attr_config(args) -> AttributeConfig:
    return AttributeConfig(code_change=args.code_change)


# ---------------------------------------------------------------------------
# subcommands

def cmd_ingest(args) -> int:
    insts = _instances(args.paths)
    report = validate_corpus(insts)
    if report:
        print(report.format(), file=sys.stderr)
        return 1
    log.info("%d instance(s) valid", len(insts))
    return 0


def cmd_build_graph(args) -> int:
    inst = load_fault_instance(args.instance)
    g = attach_attributes(assemble(inst, args.mode), inst, _attr_config(args))
    _emit(json.dumps(graph_to_json(g), sort_keys=True, indent=1) + "\n", args.output)
    return 0


def cmd_stats(args) -> int:
    rows = []
    for inst in _instances(args.paths):
        r = reduction_stats(assemble(inst, Mode.GRACE), assemble(inst, Mode.DEPGRAPH))
        rows.append({"instance_id": inst.fault_id, "nodes_before": r.nodes_before,
                     "nodes_after": r.nodes_after, "edges_before": r.edges_before,
                     "edges_after": r.edges_after, "pct_nodes": f"{r.pct_nodes:.2f}",
                     "pct_edges": f"{r.pct_edges:.2f}"})
    _emit(_csv(STATS_FIELDS, rows), args.output)
    return 0


def _prepared(insts, args):
    attr = _attr_config(args)
    return [prepare(attach_attributes(assemble(i, args.mode), i, attr), i.ground_truth) for i in insts]


def cmd_train(args) -> int:
    insts = _instances(args.paths)
    config = _train_config(args)
    history: list[float] = []
    params = train(_prepared(insts, args), config, history)
    for epoch, loss in enumerate(history, 1):
        log.info("epoch %d loss %.6f", epoch, loss)
    if args.output == "-":
        raise SystemExit("train needs --output for the checkpoint file")
    save_checkpoint(params, args.output, config)
    return 0


def cmd_rank(args) -> int:
    params = load_checkpoint(args.checkpoint)
    rows = []
    for inst in _instances(args.paths):
        (pg,) = _prepared([inst], args)
        out = rank(pg, params)
        rows += [{"instance_id": inst.fault_id, "rank": k, "method_id": m,
                  "score": repr(out.scores[m])} for k, m in enumerate(out.ranked, 1)]
    _emit(_csv(RANK_FIELDS, rows), args.output)
    return 0


def cmd_baseline(args) -> int:
    rows = []
    for inst in _instances(args.paths):
        rows += [{"instance_id": inst.fault_id, "rank": k, "method_id": m, "score": repr(s)}
                 for k, (m, s) in enumerate(rank_methods_ochiai(inst, args.aggregate), 1)]
    _emit(_csv(RANK_FIELDS, rows), args.output)
    return 0


def cmd_eval(args) -> int:
    projects = _load_projects(args.corpus)
    techniques = [t.strip() for t in args.techniques.split(",") if t.strip()]
    unknown = [t for t in techniques if t not in TECHNIQUES]
    if unknown:
        raise SystemExit(f"unknown technique(s): {', '.join(unknown)}")
    config = _train_config(args)
    if args.protocol == "loo":
        report = leave_one_out(projects, techniques, config, jobs=args.jobs)
    else:
        report = cross_project(projects, techniques, config, jobs=args.jobs)
    _emit(report.to_csv(), args.output)
    return 0


def cmd_gen_corpus(args) -> int:
    cfg = GeneratorConfig(seed=args.seed, n_methods=args.methods, n_tests=args.tests,
                          difficulty=args.difficulty,
                          unreachable_covered_fraction=args.unreachable,
                          change_density=args.change_density)
    corpus = generate_corpus(cfg, args.instances, args.projects)
    out = Path(args.output)
    for project, insts in corpus.items():
        for inst in insts:
            write_fault_instance(inst, out / project / inst.fault_id)
    log.info("generated %d project(s) x %d instance(s) under %s", args.projects, args.instances, out)
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.DEPGRAPH.value)
    p.add_argument("--with-code-change", dest="code_change", action="store_true", default=True)
    p.add_argument("--no-code-change", dest="code_change", action="store_false")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--seed", type=int, default=42)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depfl", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file whose keys override flag defaults")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate fault-instance directories")
    p.add_argument("paths", nargs="+")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-graph", help="dump the assembled, attributed graph as JSON")
    p.add_argument("instance")
    _add_model_flags(p)
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("stats", help="graph-size reduction, grace vs depgraph, as CSV")
    p.add_argument("paths", nargs="+")
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train on instances and write a checkpoint")
    p.add_argument("paths", nargs="+")
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rank", help="rank candidate methods with a checkpoint")
    p.add_argument("paths", nargs="+")
    p.add_argument("--checkpoint", required=True)
    _add_model_flags(p)
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("baseline", help="Ochiai ranking")
    p.add_argument("paths", nargs="+")
    p.add_argument("--aggregate", choices=sorted(AGGREGATORS), default="max")
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", help="leave-one-out or cross-project evaluation report")
    p.add_argument("corpus")
    p.add_argument("--protocol", choices=("loo", "cross"), default="loo")
    p.add_argument("--techniques", default=",".join(TECHNIQUES))
    _add_train_flags(p)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen-corpus", help="write a synthetic corpus in the facts layout")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--projects", type=int, default=2)
    p.add_argument("--instances", type=int, default=25)
    p.add_argument("--methods", type=int, default=20)
    p.add_argument("--tests", type=int, default=12)
    p.add_argument("--difficulty", choices=("easy", "medium", "hard"), default="easy")
    p.add_argument("--unreachable", type=float, default=0.25)
    p.add_argument("--change-density", type=float, default=1.0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gen_corpus)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str], args) -> argparse.Namespace:
    overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if not isinstance(overrides, dict):
        raise SystemExit("--config must hold a JSON object")
    if "code_change" in overrides:
        overrides["code_change"] = bool(overrides["code_change"])
    for action in parser._subparsers._group_actions:  # the subcommand dispatcher
        for sp in action.choices.values():
            known = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in overrides.items() if k in known})
    return parser.parse_args(argv)


def run(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.config:
            args = _apply_config(parser, argv, args)
        return args.func(args)
    except FactsError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(f"error: {exc.code}", file=sys.stderr)
            return 2
        raise
    except Exception as exc:  # noqa: BLE001 - mapped to exit code 2
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
