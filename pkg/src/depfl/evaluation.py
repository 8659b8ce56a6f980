"""Top-N / MFR / MAR scoring and the leave-one-out and cross-project protocols."""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from statistics import fmean
from typing import Iterable, Mapping, Sequence

from .assembly import EmptyGraph, Mode, assemble
from .attributes import AttributeConfig, attach_attributes
from .facts import FaultInstance
from .ggnn import GgnnParameters, PreparedGraph, TrainConfig, prepare, rank, train
from .sbfl import rank_methods_ochiai

log = logging.getLogger(__name__)

TOP_N = (1, 3, 5, 10)
CSV_FIELDS = ("project", "technique", "top1", "top3", "top5", "top10", "mfr", "mar", "misses")


class EmptyRanking(ValueError):
    pass


@dataclass(frozen=True)
class RankScore:
    first_rank: float
    avg_rank: float
    hits: dict[int, int]
    missed: bool = False


def score_ranking(ranked: Sequence[str], truth: Iterable[str]) -> RankScore:
    """1-based ranks; faulty methods absent from ``ranked`` get rank ``len(ranked) + 1``.

    The penalty rank feeds MFR/MAR only and never counts as a Top-N hit.
    """
    if not ranked:
        raise EmptyRanking("cannot score an empty ranking")
    truth = set(truth)
    if not truth:
        raise ValueError("truth set is empty")
    pos = {m: i + 1 for i, m in enumerate(ranked)}
    penalty = len(ranked) + 1
    ranks = [pos.get(m, penalty) for m in truth]
    first = min(ranks)
    found = min((r for r in ranks if r < penalty), default=None)
    hits = {n: int(found is not None and found <= n) for n in TOP_N}
    return RankScore(float(first), fmean(ranks), hits,
                     missed=any(m not in pos for m in truth))


def missed_entirely(n_methods: int) -> RankScore:
    """Score for an instance whose graph pruned away every candidate."""
    r = float(n_methods + 1)
    return RankScore(r, r, {n: 0 for n in TOP_N}, missed=True)


# ---------------------------------------------------------------------------
# techniques

@dataclass(frozen=True)
class Technique:
    name: str
    mode: Mode | None = None          # None: Ochiai baseline, no graph
    code_change: bool = False

    @property
    def learned(self) -> bool:
        return self.mode is not None


TECHNIQUES = {
    "ochiai": Technique("ochiai"),
    "grace": Technique("grace", Mode.GRACE, False),
    "depgraph_nochange": Technique("depgraph_nochange", Mode.DEPGRAPH, False),
    "depgraph": Technique("depgraph", Mode.DEPGRAPH, True),
}


def prepare_instance(inst: FaultInstance, tech: Technique) -> PreparedGraph | None:
    """Assembled, attributed graph for ``inst``; None when pruning leaves nothing."""
    try:
        g = assemble(inst, tech.mode)
    except EmptyGraph:
        log.warning("%s: empty graph under %s", inst.fault_id, tech.mode.value)
        return None
    g = attach_attributes(g, inst, AttributeConfig(code_change=tech.code_change))
    return prepare(g, inst.ground_truth)


def _score_learned(pg: PreparedGraph | None, inst: FaultInstance, params: GgnnParameters) -> RankScore:
    if pg is None:
        return missed_entirely(len(inst.code.methods))
    return score_ranking(rank(pg, params).ranked, inst.ground_truth)


def score_ochiai(inst: FaultInstance) -> RankScore:
    ranked = [m for m, _ in rank_methods_ochiai(inst)]
    if not ranked:
        return missed_entirely(len(inst.code.methods))
    return score_ranking(ranked, inst.ground_truth)


# ---------------------------------------------------------------------------
# aggregation

@dataclass
class ProjectScores:
    project: str
    technique: str
    n: int
    top: dict[int, float]
    mfr: float
    mar: float
    misses: float

    def row(self) -> dict:
        out = {"project": self.project, "technique": self.technique}
        for n in TOP_N:
            out[f"top{n}"] = _fmt(self.top[n])
        out.update(mfr=_fmt(self.mfr), mar=_fmt(self.mar), misses=_fmt(self.misses))
        return out

    def rate(self, n: int = 1) -> float:
        return self.top[n] / self.n if self.n else 0.0


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else f"{v:.4f}"


def aggregate(project: str, technique: str, scores: Sequence[RankScore]) -> ProjectScores:
    return ProjectScores(
        project, technique, len(scores),
        {n: sum(s.hits[n] for s in scores) for n in TOP_N},
        fmean(s.first_rank for s in scores),
        fmean(s.avg_rank for s in scores),
        sum(s.missed for s in scores),
    )


def average(project: str, technique: str, parts: Sequence[ProjectScores]) -> ProjectScores:
    """Mean of per-model metrics (fractional Top-N counts are expected)."""
    return ProjectScores(
        project, technique, parts[0].n,
        {n: fmean(p.top[n] for p in parts) for n in TOP_N},
        fmean(p.mfr for p in parts), fmean(p.mar for p in parts), fmean(p.misses for p in parts),
    )


def total(technique: str, rows: Sequence[ProjectScores]) -> ProjectScores:
    n = sum(r.n for r in rows)
    return ProjectScores(
        "Total", technique, n,
        {k: sum(r.top[k] for r in rows) for k in TOP_N},
        sum(r.mfr * r.n for r in rows) / n,
        sum(r.mar * r.n for r in rows) / n,
        sum(r.misses for r in rows),
    )


@dataclass
class EvaluationReport:
    protocol: str
    rows: list[ProjectScores] = field(default_factory=list)

    def techniques(self) -> list[str]:
        return list(dict.fromkeys(r.technique for r in self.rows))

    def get(self, project: str, technique: str) -> ProjectScores:
        for r in self.rows:
            if r.project == project and r.technique == technique:
                return r
        raise KeyError((project, technique))

    def with_totals(self) -> list[ProjectScores]:
        out = list(self.rows)
        for tech in self.techniques():
            out.append(total(tech, [r for r in self.rows if r.technique == tech]))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in self.with_totals():
            w.writerow(r.row())
        return buf.getvalue()


# ---------------------------------------------------------------------------
# protocols

def _loo_fold(args) -> RankScore:
    i, graphs, instances, config = args
    train_set = [g for j, g in enumerate(graphs) if j != i and g is not None]
    params = train(train_set, config)
    return _score_learned(graphs[i], instances[i], params)


def _map(fn, items: list, jobs: int) -> list:
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def leave_one_out_scores(instances: Sequence[FaultInstance], tech: Technique,
                         config: TrainConfig = TrainConfig(), jobs: int = 1) -> list[RankScore]:
    instances = sorted(instances, key=lambda i: i.fault_id)
    if not tech.learned:
        return [score_ochiai(i) for i in instances]
    if len(instances) < 2:
        raise ValueError("leave-one-out needs at least two instances")
    graphs = [prepare_instance(i, tech) for i in instances]
    return _map(_loo_fold, [(k, graphs, instances, config) for k in range(len(instances))], jobs)


def leave_one_out(corpus: Mapping[str, Sequence[FaultInstance]] | Sequence[FaultInstance],
                  techniques: Sequence[str] = ("depgraph",), config: TrainConfig = TrainConfig(),
                  jobs: int = 1) -> EvaluationReport:
    """Within-project leave-one-out for every project and technique."""
    if not isinstance(corpus, Mapping):
        corpus = {"project": list(corpus)}
    report = EvaluationReport("loo")
    for project in sorted(corpus):
        for name in techniques:
            tech = TECHNIQUES[name]
            log.info("loo: %s / %s", project, name)
            scores = leave_one_out_scores(corpus[project], tech, config, jobs)
            report.rows.append(aggregate(project, name, scores))
    return report


def cross_project(corpora: Mapping[str, Sequence[FaultInstance]],
                  techniques: Sequence[str] = ("depgraph",), config: TrainConfig = TrainConfig(),
                  jobs: int = 1) -> EvaluationReport:
    """Train one model per source project, evaluate it on every other project, average."""
    if len(corpora) < 2:
        raise ValueError("cross-project evaluation needs at least two projects")
    projects = sorted(corpora)
    insts = {p: sorted(corpora[p], key=lambda i: i.fault_id) for p in projects}
    report = EvaluationReport("cross")
    for name in techniques:
        tech = TECHNIQUES[name]
        if not tech.learned:
            for p in projects:
                report.rows.append(aggregate(p, name, [score_ochiai(i) for i in insts[p]]))
            continue
        graphs = {p: [prepare_instance(i, tech) for i in insts[p]] for p in projects}
        models = dict(zip(projects, _map(
            _train_project, [([g for g in graphs[q] if g is not None], config) for q in projects], jobs)))
        for p in projects:
            per_model = []
            for q in projects:
                if q == p:
                    continue
                scores = [_score_learned(g, i, models[q]) for g, i in zip(graphs[p], insts[p])]
                per_model.append(aggregate(p, name, scores))
            report.rows.append(average(p, name, per_model))
    return report


def _train_project(args) -> GgnnParameters:
    graphs, config = args
    return train(graphs, config)
