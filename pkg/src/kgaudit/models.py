"""Embedding tables and the five interaction functions.

Complex-valued models (ComplEx, RotatE) store each vector as ``[real | imag]``
so the stored width is twice the logical dimension.  RotatE relations are
stored the same way and kept at unit modulus per coordinate.

All scores follow "higher is more plausible".
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("TransE", "TransH", "DistMult", "ComplEx", "RotatE")
TRANSLATIONAL = ("TransE", "TransH")
COMPLEX = ("ComplEx", "RotatE")


def canonical_kind(kind: str) -> str:
    for k in KINDS:
        if k.lower() == str(kind).lower():
            return k
    raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")


@dataclass
class Model:
    kind: str
    dim: int
    entity: np.ndarray
    relation: np.ndarray
    normal: np.ndarray | None = None
    norm: str | None = None

    def __post_init__(self):
        self.kind = canonical_kind(self.kind)
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.kind in TRANSLATIONAL:
            self.norm = (self.norm or "L2").upper()
            if self.norm not in ("L1", "L2"):
                raise ValueError(f"norm must be L1 or L2, got {self.norm!r}")
        elif self.norm is not None:
            raise ValueError(f"norm is undefined for {self.kind}")
        w = self.width
        if self.entity.shape[1] != w or self.relation.shape[1] != w:
            raise ValueError(f"{self.kind} dim {self.dim} expects stored width {w}")
        if self.kind == "TransH" and (self.normal is None or self.normal.shape != self.relation.shape):
            raise ValueError("TransH needs one normal vector per relation")

    @property
    def width(self) -> int:
        return 2 * self.dim if self.kind in COMPLEX else self.dim

    # entity and relation dimensions
    @property
    def m(self) -> int:
        return self.dim

    @property
    def n(self) -> int:
        return self.dim

    @property
    def n_entities(self) -> int:
        return len(self.entity)

    @property
    def n_relations(self) -> int:
        return len(self.relation)

    @property
    def dtype(self):
        return self.entity.dtype

    def params(self) -> dict[str, np.ndarray]:
        p = {"entity": self.entity, "relation": self.relation}
        if self.normal is not None:
            p["normal"] = self.normal
        return p

    def copy(self) -> "Model":
        return Model(self.kind, self.dim, self.entity.copy(), self.relation.copy(),
                     None if self.normal is None else self.normal.copy(), self.norm)

    def project(self) -> None:
        """Enforce RotatE unit modulus and TransH unit normals in place."""
        if self.kind == "RotatE":
            d = self.dim
            mod = np.sqrt(self.relation[:, :d] ** 2 + self.relation[:, d:] ** 2)
            mod[mod == 0] = 1.0
            self.relation[:, :d] /= mod
            self.relation[:, d:] /= mod
        elif self.kind == "TransH":
            nrm = np.linalg.norm(self.normal, axis=1, keepdims=True)
            nrm[nrm == 0] = 1.0
            self.normal /= nrm

    @classmethod
    def init(cls, kind: str, n_entities: int, n_relations: int, dim: int, norm: str | None = None,
             rng=None, dtype=np.float64) -> "Model":
        """Uniform(-6/sqrt(dim), 6/sqrt(dim)) tables; RotatE phases uniform on [-pi, pi]."""
        kind = canonical_kind(kind)
        rng = np.random.default_rng(rng)
        width = 2 * dim if kind in COMPLEX else dim
        bound = 6.0 / np.sqrt(dim)
        ent = rng.uniform(-bound, bound, (n_entities, width))
        normal = None
        if kind == "RotatE":
            phase = rng.uniform(-np.pi, np.pi, (n_relations, dim))
            rel = np.concatenate([np.cos(phase), np.sin(phase)], axis=1)
        else:
            rel = rng.uniform(-bound, bound, (n_relations, width))
        if kind == "TransH":
            normal = rng.normal(size=(n_relations, dim))
        if kind not in TRANSLATIONAL:
            norm = None
        model = cls(kind, dim, ent.astype(dtype), rel.astype(dtype),
                    None if normal is None else normal.astype(dtype), norm)
        model.project()
        return model


def _dist_and_grad(d: np.ndarray, norm: str):
    """-||d|| along the last axis and its gradient w.r.t. d (0 at kinks)."""
    if norm == "L1":
        return -np.abs(d).sum(-1), -np.sign(d)
    nrm = np.sqrt((d * d).sum(-1))
    safe = np.where(nrm > 0, nrm, 1.0)
    return -nrm, -d / safe[..., None] * (nrm > 0)[..., None]


def _split(x, d):
    return x[..., :d], x[..., d:]


def score_arrays(model: Model, h: np.ndarray, r: np.ndarray, t: np.ndarray, w: np.ndarray | None = None,
                 with_grad: bool = False):
    """Score embedding arrays that broadcast against each other.

    ``h``, ``r``, ``t`` (and ``w`` for TransH) are raw stored vectors.  With
    ``with_grad`` also returns the gradient of the score w.r.t. each input as
    a dict with keys ``h``, ``r``, ``t`` (and ``w``), broadcast to the common
    shape.
    """
    out = _score_arrays(model, h, r, t, w, with_grad)
    if not with_grad:
        return out
    s, g = out
    shape = np.broadcast_shapes(*(np.shape(x) for x in (h, r, t) + ((w,) if w is not None else ())))
    return s, {k: np.broadcast_to(v, shape) for k, v in g.items()}


def _score_arrays(model, h, r, t, w, with_grad):
    kind, d = model.kind, model.dim
    if kind == "TransE":
        s, g = _dist_and_grad(h + r - t, model.norm)
        if not with_grad:
            return s
        return s, {"h": g, "r": g, "t": -g}
    if kind == "TransH":
        u = h - t
        wu = (w * u).sum(-1, keepdims=True)
        s, g = _dist_and_grad(u - wu * w + r, model.norm)
        if not with_grad:
            return s
        wg = (w * g).sum(-1, keepdims=True)
        gh = g - wg * w
        return s, {"h": gh, "r": g, "t": -gh, "w": -wg * u - wu * g}
    if kind == "DistMult":
        s = (h * r * t).sum(-1)
        if not with_grad:
            return s
        return s, {"h": r * t, "r": h * t, "t": h * r}
    a, b = _split(h, d)
    c, e_ = _split(r, d)
    e, f = _split(t, d)
    if kind == "ComplEx":
        re = a * c - b * e_
        im = a * e_ + b * c
        s = (re * e + im * f).sum(-1)
        if not with_grad:
            return s
        gh = np.concatenate(np.broadcast_arrays(c * e + e_ * f, -e_ * e + c * f), -1)
        gr = np.concatenate(np.broadcast_arrays(a * e + b * f, -b * e + a * f), -1)
        gt = np.concatenate(np.broadcast_arrays(re, im), -1)
        return s, {"h": gh, "r": gr, "t": gt}
    # RotatE: negative sum of per-coordinate complex moduli
    x = a * c - b * e_ - e
    y = a * e_ + b * c - f
    mod = np.sqrt(x * x + y * y)
    s = -mod.sum(-1)
    if not with_grad:
        return s
    safe = np.where(mod > 0, mod, 1.0)
    gx, gy = -x / safe * (mod > 0), -y / safe * (mod > 0)
    gh = np.concatenate(np.broadcast_arrays(gx * c + gy * e_, -gx * e_ + gy * c), -1)
    gr = np.concatenate(np.broadcast_arrays(gx * a + gy * b, -gx * b + gy * a), -1)
    gt = np.concatenate(np.broadcast_arrays(-gx, -gy), -1)
    return s, {"h": gh, "r": gr, "t": gt}


def _check_ids(model: Model, h, r, t):
    for name, ids, n in (("head", h, model.n_entities), ("relation", r, model.n_relations),
                         ("tail", t, model.n_entities)):
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= n):
            raise KeyError(f"unknown {name} index")


def score_triples(model: Model, h, r, t) -> np.ndarray:
    """Vectorised scores for index arrays ``h``, ``r``, ``t``."""
    h, r, t = (np.asarray(x, dtype=np.int64) for x in (h, r, t))
    _check_ids(model, h, r, t)
    w = model.normal[r] if model.kind == "TransH" else None
    return score_arrays(model, model.entity[h], model.relation[r], model.entity[t], w)


def score(model: Model, h: int, r: int, t: int) -> float:
    """Plausibility of one triple given entity/relation indices."""
    return float(score_triples(model, [h], [r], [t])[0])


def score_candidates(model: Model, fixed: int, r: int, candidates: np.ndarray, side: str = "tail",
                     chunk: int = 65536) -> np.ndarray:
    """Scores of (fixed, r, c) for every candidate c (``side='tail'``) or
    (c, r, fixed) for ``side='head'``."""
    cand = np.asarray(candidates, dtype=np.int64)
    _check_ids(model, [fixed], [r], cand)
    e_fix = model.entity[fixed]
    rel = model.relation[r]
    w = model.normal[r] if model.kind == "TransH" else None
    out = np.empty(len(cand), dtype=model.dtype)
    for i in range(0, len(cand), chunk):
        c = model.entity[cand[i:i + chunk]]
        out[i:i + chunk] = (score_arrays(model, e_fix, rel, c, w) if side == "tail"
                            else score_arrays(model, c, rel, e_fix, w))
    return out
