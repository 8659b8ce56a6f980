"""Gated graph network that ranks candidate methods.

Forward pass for one graph:

1. embed every node into ``d`` dims (method roots: ``d-1`` kind dims plus one
   learned mix of test correlation and change metrics);
2. five gated propagation steps over the normalized adjacency, each followed
   by a residual connection and layer normalization;
3. a linear head on method rows and a softmax over the candidate methods.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .assembly import NormalizedAdjacency, Role, UnifiedGraph, normalize_adjacency
from .attributes import TEST_KIND_CODE
from .facts import STATEMENT_KINDS
from .tensor import DisconnectedParameter, NonFiniteResult, ShapeMismatch, Tape, Tensor, backward

log = logging.getLogger(__name__)

N_METHOD_FEATURES = 5  # test correlation, churn_all, churn_recent, mmc_all, mmc_recent
CHECKPOINT_FORMAT = "depfl-ggnn"
CHECKPOINT_VERSION = 1


class UnattributedNode(ValueError):
    pass


class NoMethodNodes(ValueError):
    pass


class TruthNotInCandidates(ValueError):
    pass


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.01
    epochs: int = 10
    dim: int = 32
    seed: int = 42
    iterations: int = 5
    init_range: float = 0.1


@dataclass
class GgnnParameters:
    dim: int
    iterations: int
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def tensors(self) -> dict[str, Tensor]:
        return {k: Tensor(v, k) for k, v in self.arrays.items()}

    def copy(self) -> "GgnnParameters":
        return GgnnParameters(self.dim, self.iterations, {k: v.copy() for k, v in self.arrays.items()})

    def __eq__(self, other) -> bool:
        return (isinstance(other, GgnnParameters) and self.dim == other.dim
                and self.iterations == other.iterations
                and self.arrays.keys() == other.arrays.keys()
                and all(np.array_equal(v, other.arrays[k]) for k, v in self.arrays.items()))


def parameter_shapes(dim: int, iterations: int = 5) -> dict[str, tuple[int, int]]:
    if dim < 4:
        raise ValueError("embedding dimension must be >= 4")
    shapes = {
        "stmt_embed": (len(STATEMENT_KINDS), dim),
        "method_embed": (1, dim - 1),
        "attr_mix": (N_METHOD_FEATURES, 1),
        "test_embed": (1, dim),
        "fail_offset": (1, dim),
    }
    for gate in ("f", "i", "g"):
        shapes[f"W_{gate}"] = (dim, dim)
        shapes[f"b_{gate}"] = (1, dim)
    for t in range(iterations):
        shapes[f"ln{t}_scale"] = (1, dim)
        shapes[f"ln{t}_shift"] = (1, dim)
    shapes["head_W"] = (dim, 1)
    shapes["head_b"] = (1, 1)
    return shapes


def init_parameters(dim: int = 32, seed: int = 42, iterations: int = 5,
                    init_range: float = 0.1) -> GgnnParameters:
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in parameter_shapes(dim, iterations).items():
        if name.endswith("_scale"):
            arrays[name] = np.ones(shape)
        elif name.endswith("_shift"):
            arrays[name] = np.zeros(shape)
        else:
            arrays[name] = rng.uniform(-init_range, init_range, size=shape)
    return GgnnParameters(dim, iterations, arrays)


# ---------------------------------------------------------------------------
# graph preparation

@dataclass(frozen=True)
class PreparedGraph:
    """Index arrays and constants for one attributed graph."""

    instance_id: str
    adj: NormalizedAdjacency
    perm: np.ndarray          # concat order (methods, statements, tests) -> node order
    method_rows: np.ndarray
    method_ids: tuple[str, ...]
    method_features: np.ndarray  # m x 5
    stmt_kinds: np.ndarray
    test_fail: np.ndarray        # t x 1
    truth_mask: np.ndarray       # 1 x m
    truth: frozenset[str]

    @property
    def has_truth(self) -> bool:
        return bool(self.truth_mask.any())


def prepare(g: UnifiedGraph, truth: Iterable[str] = ()) -> PreparedGraph:
    truth = frozenset(truth)
    m_rows, s_rows, t_rows = [], [], []
    feats, kinds, fails = [], [], []
    for n in g.nodes:
        a = g.node_attrs.get(n.index)
        if a is None:
            raise UnattributedNode(f"{g.instance_id}: node {n.id!r} has no attributes")
        if n.role is Role.METHOD:
            m_rows.append(n.index)
            feats.append(a.method_features())
        elif n.role is Role.STATEMENT:
            s_rows.append(n.index)
            kinds.append(a.kind_code)
        else:
            if a.kind_code != TEST_KIND_CODE:
                raise UnattributedNode(f"{g.instance_id}: test node {n.id!r} has kind {a.kind_code}")
            t_rows.append(n.index)
            fails.append(a.outcome)
    order = np.array(m_rows + s_rows + t_rows, dtype=np.int64)
    perm = np.empty_like(order)
    perm[order] = np.arange(len(order))
    ids = tuple(g.nodes[i].id for i in m_rows)
    return PreparedGraph(
        instance_id=g.instance_id,
        adj=normalize_adjacency(g),
        perm=perm,
        method_rows=np.array(m_rows, dtype=np.int64),
        method_ids=ids,
        method_features=np.array(feats, dtype=float).reshape(len(m_rows), N_METHOD_FEATURES),
        stmt_kinds=np.array(kinds, dtype=np.int64),
        test_fail=np.array(fails, dtype=float).reshape(len(t_rows), 1),
        truth_mask=np.array([[1.0 if m in truth else 0.0 for m in ids]]),
        truth=truth,
    )


# ---------------------------------------------------------------------------
# forward pass

def embed(tape: Tape, pg: PreparedGraph, P: dict[str, Tensor]) -> Tensor:
    m, t = len(pg.method_rows), pg.test_fail.shape[0]
    kind = tape.take_rows(P["method_embed"], np.zeros(m, dtype=np.int64))
    mix = tape.matmul(Tensor(pg.method_features), P["attr_mix"])
    e_method = tape.concat_cols(kind, mix)
    e_stmt = tape.take_rows(P["stmt_embed"], pg.stmt_kinds)
    e_test = tape.add(tape.take_rows(P["test_embed"], np.zeros(t, dtype=np.int64)),
                      tape.matmul(Tensor(pg.test_fail), P["fail_offset"]))
    return tape.take_rows(tape.concat_rows([e_method, e_stmt, e_test]), pg.perm)


def propagate(tape: Tape, X: Tensor, adj: NormalizedAdjacency, P: dict[str, Tensor],
              iterations: int = 5) -> Tensor:
    if X.shape[0] != adj.n:
        raise ShapeMismatch(f"{X.shape[0]} feature rows vs adjacency of size {adj.n}")
    c = X
    for t in range(iterations):
        a = tape.spmm(adj, c)
        f = tape.sigmoid(tape.add(tape.matmul(a, P["W_f"]), P["b_f"]))
        i = tape.sigmoid(tape.add(tape.matmul(a, P["W_i"]), P["b_i"]))
        g = tape.tanh(tape.add(tape.matmul(a, P["W_g"]), P["b_g"]))
        updated = tape.add(tape.hadamard(f, c), tape.hadamard(i, g))
        c = tape.layer_norm(tape.add(updated, c), P[f"ln{t}_scale"], P[f"ln{t}_shift"])
    return c


def head(tape: Tape, Z: Tensor, pg: PreparedGraph, P: dict[str, Tensor]) -> tuple[Tensor, Tensor]:
    """Raw scores (m x 1) and candidate probabilities (1 x m)."""
    if len(pg.method_rows) == 0:
        raise NoMethodNodes(pg.instance_id)
    zm = tape.take_rows(Z, pg.method_rows)
    raw = tape.add(tape.matmul(zm, P["head_W"]), P["head_b"])
    return raw, tape.softmax_rows(tape.transpose(raw))


def loss_on_tape(tape: Tape, probs: Tensor, truth_mask: np.ndarray) -> Tensor:
    return tape.scale(tape.sum(tape.hadamard(tape.log(probs), Tensor(truth_mask))), -1.0)


def forward(pg: PreparedGraph, params: GgnnParameters, tape: Tape | None = None):
    """Returns (tape, tensors, raw, probs)."""
    tape = tape or Tape()
    P = params.tensors()
    X = embed(tape, pg, P)
    Z = propagate(tape, X, pg.adj, P, params.iterations)
    raw, probs = head(tape, Z, pg, P)
    return tape, P, raw, probs


# ---------------------------------------------------------------------------
# ranking and loss

@dataclass(frozen=True)
class RankingOutput:
    scores: dict[str, float]
    raw: dict[str, float]

    @property
    def ranked(self) -> list[str]:
        return sorted(self.scores, key=lambda m: (-self.scores[m], m))


def ranking_from(method_ids: Sequence[str], raw: np.ndarray, probs: np.ndarray) -> RankingOutput:
    return RankingOutput(dict(zip(method_ids, probs.ravel().tolist())),
                         dict(zip(method_ids, raw.ravel().tolist())))


def score_and_rank(Z: Tensor, pg: PreparedGraph, params: GgnnParameters) -> RankingOutput:
    tape = Tape()
    raw, probs = head(tape, Z, pg, params.tensors())
    return ranking_from(pg.method_ids, raw.data, probs.data)


def rank(pg: PreparedGraph, params: GgnnParameters) -> RankingOutput:
    _, _, raw, probs = forward(pg, params)
    return ranking_from(pg.method_ids, raw.data, probs.data)


def listwise_loss(out: RankingOutput, truth: Iterable[str]) -> float:
    truth = set(truth)
    missing = truth - out.scores.keys()
    if missing:
        raise TruthNotInCandidates(f"faulty method(s) not among candidates: {sorted(missing)}")
    return float(-sum(np.log(out.scores[m]) for m in sorted(truth)))


def loss_and_grads(pg: PreparedGraph, params: GgnnParameters) -> tuple[float, dict[str, np.ndarray]]:
    tape, P, _, probs = forward(pg, params)
    loss = loss_on_tape(tape, probs, pg.truth_mask)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DisconnectedParameter)
        grads = backward(tape, loss, P)
    return float(loss.data[0, 0]), grads


# ---------------------------------------------------------------------------
# training

def train(graphs: Sequence[PreparedGraph], config: TrainConfig = TrainConfig(),
          history: list[float] | None = None) -> GgnnParameters:
    """Plain gradient descent, one graph per step, graphs in sorted instance order."""
    if not graphs:
        raise ValueError("training corpus is empty")
    params = init_parameters(config.dim, config.seed, config.iterations, config.init_range)
    usable = sorted((g for g in graphs if g.has_truth), key=lambda g: g.instance_id)
    skipped = len(graphs) - len(usable)
    if skipped:
        log.info("skipping %d training graph(s) whose faulty methods were pruned", skipped)
    for epoch in range(config.epochs):
        total = 0.0
        for pg in usable:
            try:
                loss, grads = loss_and_grads(pg, params)
            except NonFiniteResult as exc:
                raise NonFiniteLoss(f"epoch {epoch + 1}, instance {pg.instance_id}: {exc}") from exc
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"epoch {epoch + 1}, instance {pg.instance_id}: loss {loss}")
            total += loss
            if config.lr:
                for k, g in grads.items():
                    params.arrays[k] -= config.lr * g
        mean = total / max(len(usable), 1)
        if history is not None:
            history.append(mean)
        log.debug("epoch %d/%d mean loss %.6f", epoch + 1, config.epochs, mean)
    return params


# ---------------------------------------------------------------------------
# checkpoints

def checkpoint_json(params: GgnnParameters, config: TrainConfig | None = None) -> str:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dim": params.dim,
        "iterations": params.iterations,
        "config": asdict(config) if config else None,
        "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                   for k, v in sorted(params.arrays.items())},
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def save_checkpoint(params: GgnnParameters, path: str | Path, config: TrainConfig | None = None) -> None:
    Path(path).write_text(checkpoint_json(params, config), encoding="utf-8")


def load_checkpoint(path: str | Path) -> GgnnParameters:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION} checkpoint")
    dim, iters = doc["dim"], doc["iterations"]
    expected = parameter_shapes(dim, iters)
    arrays = {}
    for name, shape in expected.items():
        rec = doc["params"].get(name)
        if rec is None or tuple(rec["shape"]) != shape:
            raise ValueError(f"{path}: parameter {name!r} missing or mis-shaped")
        arrays[name] = np.array(rec["data"], dtype=np.float64).reshape(shape)
    return GgnnParameters(dim, iters, arrays)
