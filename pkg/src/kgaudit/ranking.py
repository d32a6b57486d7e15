"""Partial-triple completion, ranks and MR / MRR / Hits@k."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph
from .models import Model, score_candidates

TIE_POLICIES = ("realistic", "optimistic", "pessimistic")


@dataclass(frozen=True)
class Query:
    """``(entity, relation, ?)`` for direction ``tail`` or ``(?, relation, entity)`` for ``head``.

    ``entity`` and ``relation`` are ids or indices of the graph they are used with.
    """
    entity: object
    relation: object
    direction: str = "tail"
    scope: str = "typed"  # "typed" (schema-valid type) or "all"

    def __post_init__(self):
        if self.direction not in ("tail", "head"):
            raise ValueError(f"direction must be tail or head, got {self.direction!r}")
        if self.scope not in ("typed", "all"):
            raise ValueError(f"scope must be typed or all, got {self.scope!r}")

    def resolve(self, graph: Graph) -> tuple[int, int]:
        return graph._e(self.entity), graph._r(self.relation)


def candidate_scope(graph: Graph, relation, direction: str, scope: str) -> np.ndarray:
    if scope == "all":
        return np.arange(graph.n_entities)
    sig = graph.relations[graph._r(relation)].signature
    return graph.entities_of_type(sig[1] if direction == "tail" else sig[0])


@dataclass
class RankedList:
    query: Query
    entities: np.ndarray  # entity indices, best first
    scores: np.ndarray
    policy: str = "raw"

    def __len__(self):
        return len(self.entities)

    def top(self, k: int) -> np.ndarray:
        return self.entities[:k]


def complete(model: Model, graph: Graph, query: Query, exclude=None) -> RankedList:
    """Score every in-scope candidate and sort descending (ties by entity index).

    ``exclude``: entity indices dropped from the list (used for filtering).
    """
    fixed, r = query.resolve(graph)
    cand = candidate_scope(graph, r, query.direction, query.scope)
    policy = "raw"
    if exclude is not None and len(exclude):
        cand = np.setdiff1d(cand, exclude)
        policy = "filtered"
    if len(cand) == 0:
        raise ValueError("empty candidate scope")
    s = score_candidates(model, fixed, r, cand, query.direction)
    order = np.lexsort((cand, -s))
    return RankedList(query, cand[order], s[order], policy)


def _rank_from_counts(greater, equal, tie: str):
    if tie == "optimistic":
        return greater + 1.0
    if tie == "pessimistic":
        return greater + equal
    if tie == "realistic":
        return greater + (equal + 1) / 2.0
    raise ValueError(f"unknown tie policy {tie!r}")


def rank_of(ranked: RankedList, entity: int, tie: str = "realistic") -> float:
    """1-based rank of ``entity``; realistic = mean of best and worst rank among ties."""
    pos = np.flatnonzero(ranked.entities == entity)
    if len(pos) == 0:
        raise KeyError(f"entity {entity} not in candidate scope")
    s = ranked.scores[pos[0]]
    return float(_rank_from_counts(int((ranked.scores > s).sum()), int((ranked.scores == s).sum()), tie))


@dataclass
class RankMetrics:
    mr: float
    mrr: float
    hits: dict[int, float]
    n: int
    ranks: np.ndarray = field(default=None, repr=False)

    def to_record(self, policy: str, direction: str, stratum: str = "all") -> dict:
        rec = {"policy": policy, "direction": direction, "stratum": stratum,
               "MR": self.mr, "MRR": self.mrr}
        for k, v in self.hits.items():
            rec[f"hits{k}"] = v
        rec["n"] = self.n
        return rec


def aggregate(ranks, ks=(1, 10)) -> RankMetrics:
    ranks = np.asarray(ranks, dtype=np.float64)
    n = len(ranks)
    if n == 0:
        return RankMetrics(float("nan"), float("nan"), {k: float("nan") for k in ks}, 0, ranks)
    return RankMetrics(math.fsum(ranks) / n, math.fsum(1.0 / ranks) / n,
                       {k: int((ranks <= k).sum()) / n for k in ks}, n, ranks)


def _known_index(known: np.ndarray):
    by_hr, by_rt = defaultdict(list), defaultdict(list)
    for h, r, t in known.tolist():
        by_hr[(h, r)].append(t)
        by_rt[(r, t)].append(h)
    return by_hr, by_rt


def triple_ranks(model: Model, graph: Graph, triples: np.ndarray, policy: str = "filtered",
                 direction: str = "tail", scope: str = "typed", known: np.ndarray | None = None,
                 tie: str = "realistic") -> np.ndarray:
    """Rank of the true completion of every triple (index array ``(n, 3)``).

    Filtered ranking removes the other completions listed in ``known``
    (default: every triple of ``graph``) from the candidate list.
    """
    if policy not in ("raw", "filtered"):
        raise ValueError(f"unknown filter policy {policy!r}")
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if policy == "filtered":
        by_hr, by_rt = _known_index(graph.triples if known is None else np.asarray(known).reshape(-1, 3))
    ranks = np.empty(len(triples))
    tail = direction == "tail"
    groups = defaultdict(list)
    for i, (h, r, t) in enumerate(triples.tolist()):
        groups[(h, r) if tail else (t, r)].append(i)
    for (fixed, r), idx in groups.items():
        cand = candidate_scope(graph, r, direction, scope)
        s = score_candidates(model, fixed, r, cand, direction)
        lookup = {c: j for j, c in enumerate(cand.tolist())}
        if policy == "filtered":
            others = by_hr.get((fixed, r), []) if tail else by_rt.get((r, fixed), [])
            true_mask = np.zeros(len(cand), dtype=bool)
            pos = [lookup[o] for o in others if o in lookup]
            true_mask[pos] = True
        for i in idx:
            target = triples[i, 2] if tail else triples[i, 0]
            if target not in lookup:
                raise ValueError(f"completion entity {target} outside the candidate scope")
            j = lookup[target]
            keep = np.ones(len(cand), dtype=bool)
            if policy == "filtered":
                keep &= ~true_mask
                keep[j] = True
            sj = s[j]
            ranks[i] = _rank_from_counts(int((s[keep] > sj).sum()), int((s[keep] == sj).sum()), tie)
    return ranks


def evaluate(model: Model, graph: Graph, triples: np.ndarray, policy: str = "filtered",
             directions=("tail",), scope: str = "typed", known=None, tie: str = "realistic",
             ks=(1, 10)) -> dict[str, RankMetrics]:
    """Metrics per direction (keys ``tail`` / ``head``) plus ``both`` when two are given."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if len(triples) == 0:
        raise ValueError("no test triples")
    out, allranks = {}, []
    for d in directions:
        rk = triple_ranks(model, graph, triples, policy, d, scope, known, tie)
        out[d] = aggregate(rk, ks)
        allranks.append(rk)
    if len(directions) > 1:
        out["both"] = aggregate(np.concatenate(allranks), ks)
    return out


@dataclass(frozen=True)
class Stratum:
    """Degree band ``lo <= degree < hi``."""
    name: str
    lo: float
    hi: float

    def contains(self, deg: np.ndarray) -> np.ndarray:
        return (deg >= self.lo) & (deg < self.hi)


def connectivity_strata() -> list[Stratum]:
    """Low: degree < 200; high: degree > 1000."""
    return [Stratum("low", 0, 200), Stratum("high", 1001, math.inf)]


def decile_strata(degrees: np.ndarray, q: float = 0.1) -> list[Stratum]:
    """Bottom and top ``q``-quantile bands of ``degrees`` (inclusive at the cut)."""
    lo_cut = float(np.quantile(degrees, q))
    hi_cut = float(np.quantile(degrees, 1 - q))
    if lo_cut >= hi_cut:
        raise ValueError("degree quantiles coincide; strata would overlap")
    return [Stratum("bottom", -math.inf, math.nextafter(lo_cut, math.inf)), Stratum("top", hi_cut, math.inf)]


@dataclass
class StratumResult:
    stratum: Stratum
    size: int
    metrics: RankMetrics | None
    flagged: bool = False


def stratified_evaluate(model: Model, graph: Graph, triples: np.ndarray, degree_graph: Graph,
                        strata: list[Stratum], policy: str = "filtered", direction: str = "tail",
                        scope: str = "typed", known=None, tie: str = "realistic") -> dict[str, StratumResult]:
    """Metrics per degree stratum of the completion entity (degree in ``degree_graph``)."""
    for i, a in enumerate(strata):
        for b in strata[i + 1:]:
            if a.lo < b.hi and b.lo < a.hi:
                raise ValueError(f"strata {a.name} and {b.name} overlap")
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    deg = degree_graph.degrees[triples[:, 2] if direction == "tail" else triples[:, 0]]
    ranks = triple_ranks(model, graph, triples, policy, direction, scope, known, tie) if len(triples) else np.empty(0)
    out = {}
    for st in strata:
        sel = st.contains(deg)
        n = int(sel.sum())
        out[st.name] = StratumResult(st, n, aggregate(ranks[sel]) if n else None, flagged=n == 0)
    return out
