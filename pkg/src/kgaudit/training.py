"""Self-adversarial negative sampling loss, Adagrad and the training loop."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import sparse

from .graph import Graph
from .models import Model, canonical_kind, score_arrays

logger = logging.getLogger(__name__)

# Hyperparameters imported from prior tuning on Hetionet (dim, epochs, lr, negatives).
TUNED_HYPERPARAMS = {
    "ComplEx": dict(dim=272, epochs=700, lr=0.03, negatives=91),
    "DistMult": dict(dim=80, epochs=400, lr=0.02, negatives=41),
    "RotatE": dict(dim=512, epochs=500, lr=0.03, negatives=41),
    "TransE": dict(dim=304, epochs=500, lr=0.02, negatives=61),
    "TransH": dict(dim=480, epochs=800, lr=0.005, negatives=1),
}


class TrainingDivergence(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 500
    lr: float = 0.02
    negatives: int = 61
    batch_size: int = 1024
    margin: float = 9.0
    adv_temperature: float = 1.0
    seed: int = 0
    deterministic: bool = True
    dim: int = 304
    norm: str = "L2"
    corruption: str = "both"
    dtype: str = "float32"

    def __post_init__(self):
        for name in ("epochs", "negatives", "batch_size", "dim"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.lr < 0 or self.adv_temperature < 0:
            raise ValueError("lr and adv_temperature must be nonnegative")
        if self.corruption not in ("head", "tail", "both"):
            raise ValueError(f"corruption must be head, tail or both, got {self.corruption!r}")

    @classmethod
    def tuned(cls, kind: str, **overrides) -> "TrainConfig":
        return cls(**{**TUNED_HYPERPARAMS[canonical_kind(kind)], **overrides})

    def to_dict(self) -> dict:
        return asdict(self)


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _sigmoid(x):
    return np.exp(_log_sigmoid(x))


def adversarial_weights(neg_scores: np.ndarray, alpha: float) -> np.ndarray:
    """Softmax of ``alpha * score`` over the last axis."""
    z = alpha * np.asarray(neg_scores, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def nssa_loss(pos_score, neg_scores, gamma: float, alpha: float, weights=None) -> float:
    """-log sig(gamma + f+) - sum_i w_i log sig(-f_i - gamma), w = softmax(alpha f-).

    ``weights`` may be passed to hold the adversarial weights fixed.
    """
    neg = np.atleast_1d(np.asarray(neg_scores, dtype=np.float64))
    if neg.size == 0:
        raise ValueError("at least one negative score is required")
    w = adversarial_weights(neg, alpha) if weights is None else np.asarray(weights)
    return float(-_log_sigmoid(gamma + pos_score) - (w * _log_sigmoid(-neg - gamma)).sum())


def corrupt(triple, mode: str, k: int, n_entities: int, rng) -> np.ndarray:
    """``k`` negatives for one index triple; see :func:`corrupt_batch`."""
    return corrupt_batch(np.asarray(triple, dtype=np.int64).reshape(1, 3), mode, k, n_entities, rng)[0]


def corrupt_batch(triples: np.ndarray, mode: str, k: int, n_entities: int, rng) -> np.ndarray:
    """``(B, k, 3)`` negatives: each replaces the head or tail with a uniform
    entity different from the one it replaces."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if n_entities < 2:
        raise ValueError("corruption needs at least two entities")
    b = len(triples)
    neg = np.repeat(triples[:, None, :], k, axis=1)
    if mode == "head":
        side = np.zeros((b, k), dtype=np.int64)
    elif mode == "tail":
        side = np.full((b, k), 2, dtype=np.int64)
    elif mode == "both":
        side = 2 * (rng.random((b, k)) < 0.5).astype(np.int64)
    else:
        raise ValueError(f"unknown corruption mode {mode!r}")
    orig = np.take_along_axis(neg, side[..., None], axis=2)[..., 0]
    draw = rng.integers(0, n_entities - 1, size=(b, k))
    draw = draw + (draw >= orig)
    np.put_along_axis(neg, side[..., None], draw[..., None], axis=2)
    return neg


@dataclass
class SparseGrad:
    """Row gradients for the embeddings touched by a batch."""
    rows: dict[str, np.ndarray] = field(default_factory=dict)
    values: dict[str, np.ndarray] = field(default_factory=dict)

    def as_dict(self) -> dict[str, dict[int, np.ndarray]]:
        return {k: {int(i): v for i, v in zip(self.rows[k], self.values[k])} for k in self.rows}


def _scatter(idx_blocks, coefs, vals_blocks):
    """Sum ``coef[i] * vals[i]`` into rows keyed by ``idx[i]`` over several blocks.

    Uses a sparse incidence matrix so each row sum runs in a fixed order.
    """
    idx = np.concatenate(idx_blocks)
    rows, inv = np.unique(idx, return_inverse=True)
    out = None
    start = 0
    for blk_idx, vals in zip(idx_blocks, vals_blocks):
        n = len(blk_idx)
        a = sparse.csr_matrix((coefs, (inv[start:start + n], np.arange(n))), shape=(len(rows), n))
        part = a @ vals
        out = part if out is None else out + part
        start += n
    return rows, np.asarray(out, dtype=np.float64)


def batch_loss_and_grad(model: Model, pos: np.ndarray, neg: np.ndarray, gamma: float, alpha: float):
    """Mean NSSA loss over ``pos`` (B, 3) with negatives ``neg`` (B, k, 3).

    Returns ``(losses per positive, SparseGrad)``; adversarial weights are
    treated as constants.
    """
    bsz, k = neg.shape[:2]
    allt = np.concatenate([pos, neg.reshape(-1, 3)])
    h, r, t = allt[:, 0], allt[:, 1], allt[:, 2]
    w = model.normal[r] if model.kind == "TransH" else None
    s, g = score_arrays(model, model.entity[h], model.relation[r], model.entity[t], w, with_grad=True)
    s = s.astype(np.float64)
    fp, fn = s[:bsz], s[bsz:].reshape(bsz, k)
    wts = adversarial_weights(fn, alpha)
    losses = -_log_sigmoid(gamma + fp) - (wts * _log_sigmoid(-fn - gamma)).sum(1)
    coef = np.concatenate([-_sigmoid(-gamma - fp), (wts * _sigmoid(fn + gamma)).ravel()]) / bsz
    grad = SparseGrad()
    grad.rows["entity"], grad.values["entity"] = _scatter([h, t], coef, [g["h"], g["t"]])
    grad.rows["relation"], grad.values["relation"] = _scatter([r], coef, [g["r"]])
    if w is not None:
        grad.rows["normal"], grad.values["normal"] = _scatter([r], coef, [g["w"]])
    return losses, grad


def grad(model: Model, positive, negatives, gamma: float, alpha: float) -> SparseGrad:
    """Gradient of the NSSA loss of one positive and its negatives."""
    pos = np.asarray(positive, dtype=np.int64).reshape(1, 3)
    neg = np.asarray(negatives, dtype=np.int64).reshape(1, -1, 3)
    if neg.shape[1] == 0:
        raise ValueError("at least one negative is required")
    return batch_loss_and_grad(model, pos, neg, gamma, alpha)[1]


@dataclass
class OptimizerState:
    """Adagrad accumulators of squared gradients, one per parameter table."""
    accum: dict[str, np.ndarray]
    eps: float = 1e-10

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray], eps: float = 1e-10) -> "OptimizerState":
        return cls({k: np.zeros_like(v) for k, v in params.items()}, eps)


def adagrad_step(params: dict[str, np.ndarray], grads, state: OptimizerState, lr: float) -> None:
    """In-place Adagrad: G += g^2; theta -= lr * g / (sqrt(G) + eps).

    ``grads`` is either a :class:`SparseGrad` (row updates) or a dict of
    dense arrays shaped like ``params``.
    """
    if isinstance(grads, SparseGrad):
        for k, rows in grads.rows.items():
            g = grads.values[k]
            if g.shape[1:] != params[k].shape[1:]:
                raise ValueError(f"shape mismatch for {k}: {g.shape} vs {params[k].shape}")
            acc = state.accum[k]
            acc[rows] += g * g
            params[k][rows] -= lr * g / (np.sqrt(acc[rows]) + state.eps)
        return
    for k, g in grads.items():
        g = np.asarray(g)
        if g.shape != params[k].shape:
            raise ValueError(f"shape mismatch for {k}: {g.shape} vs {params[k].shape}")
        state.accum[k] += g * g
        params[k] -= lr * g / (np.sqrt(state.accum[k]) + state.eps)


def train(graph: Graph, kind: str, cfg: TrainConfig, triples: np.ndarray | None = None):
    """Train a fresh model on ``graph`` (or on ``triples`` over its registry).

    Returns ``(model, per-epoch mean loss list)``.  Deterministic for a given
    config: all randomness flows from ``cfg.seed`` and every reduction runs in
    a fixed order.
    """
    data = graph.triples if triples is None else np.asarray(triples, dtype=np.int64)
    if len(data) == 0:
        raise ValueError("no training triples")
    rng = np.random.default_rng(cfg.seed)
    norm = cfg.norm if canonical_kind(kind) in ("TransE", "TransH") else None
    model = Model.init(kind, graph.n_entities, graph.n_relations, cfg.dim, norm, rng, dtype=np.dtype(cfg.dtype))
    state = OptimizerState.zeros_like(model.params())
    trace = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(data))
        total = 0.0
        for i in range(0, len(order), cfg.batch_size):
            pos = data[order[i:i + cfg.batch_size]]
            neg = corrupt_batch(pos, cfg.corruption, cfg.negatives, graph.n_entities, rng)
            losses, g = batch_loss_and_grad(model, pos, neg, cfg.margin, cfg.adv_temperature)
            batch_total = float(losses.sum())
            if not np.isfinite(batch_total):
                raise TrainingDivergence(f"non-finite loss at epoch {epoch}, batch {i // cfg.batch_size}")
            total += batch_total
            adagrad_step(model.params(), g, state, cfg.lr)
            model.project()
        trace.append(total / len(data))
        logger.debug("epoch %d mean loss %.6f", epoch, trace[-1])
    return model, trace
