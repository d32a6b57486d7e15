"""Degree/score analyses: regressions, type separation, link stratification."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .graph import DatasetSplit, Graph
from .models import Model
from .ranking import Query, complete

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "valid", "test")


@dataclass
class ScoreDegreeRecord:
    entity: int
    entity_id: str
    etype: str
    degree: int
    score: float
    split: str  # train | valid | test | novel
    group: str = ""


def training_graph(graph: Graph, split: DatasetSplit | None) -> Graph:
    return graph if split is None else graph.subgraph(split.train)


def _query_links(graph: Graph, split: DatasetSplit | None, fixed: int, r: int, direction: str) -> dict[int, str]:
    """Completion entity -> split name for triples answering the query."""
    labels = split.labels(len(graph)) if split is not None else None
    out = {}
    tr = graph.triples
    for tid in graph.incident(fixed, r).tolist():
        h, _, t = tr[tid]
        if (h if direction == "tail" else t) != fixed:
            continue
        other = int(t if direction == "tail" else h)
        out[other] = "train" if labels is None else SPLIT_NAMES[labels[tid]]
    return out


def score_degree_table(model: Model, graph: Graph, split: DatasetSplit | None, query: Query,
                       train_graph: Graph | None = None) -> list[ScoreDegreeRecord]:
    """One record per in-scope candidate: training-graph degree, score and split label."""
    tg = train_graph if train_graph is not None else training_graph(graph, split)
    fixed, r = query.resolve(graph)
    ranked = complete(model, graph, query)
    links = _query_links(graph, split, fixed, r, query.direction)
    deg = tg.degrees
    recs = []
    for e, s in zip(ranked.entities.tolist(), ranked.scores.tolist()):
        ent = graph.entities[e]
        recs.append(ScoreDegreeRecord(e, ent.id, ent.etype, int(deg[e]), float(s), links.get(e, "novel")))
    return recs


@dataclass
class RegressionReport:
    slope: float
    intercept: float
    r2: float
    n: int
    transform: str
    dropped: int = 0

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2, "n": self.n,
                "transform": self.transform, "dropped": self.dropped}


def ols(x, y) -> tuple[float, float, float]:
    """Closed-form simple least squares; returns (slope, intercept, R^2).

    R^2 is 0 when ``y`` is constant.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < 2:
        raise ValueError("regression needs at least two points")
    dx = x - x.mean()
    sxx = float(dx @ dx)
    if sxx == 0:
        raise ValueError("zero variance in regressor")
    dy = y - y.mean()
    slope = float(dx @ dy) / sxx
    intercept = float(y.mean() - slope * x.mean())
    sst = float(dy @ dy)
    if sst == 0:
        return slope, intercept, 0.0
    res = dy - slope * dx
    r2 = 1.0 - float(res @ res) / sst
    return slope, intercept, min(max(r2, 0.0), 1.0)


def regress(table, transform: str = "log10") -> RegressionReport:
    """Least squares of score on (optionally log10) degree.

    ``table`` is a list of records or a ``(degrees, scores)`` pair.  Under the
    log transform zero-degree rows are dropped and counted.
    """
    if isinstance(table, tuple):
        x, y = (np.asarray(a, dtype=np.float64) for a in table)
    else:
        x = np.array([rec.degree for rec in table], dtype=np.float64)
        y = np.array([rec.score for rec in table], dtype=np.float64)
    dropped = 0
    if transform == "log10":
        keep = x > 0
        dropped = int((~keep).sum())
        x, y = np.log10(x[keep]), y[keep]
    elif transform != "identity":
        raise ValueError(f"unknown transform {transform!r}")
    slope, intercept, r2 = ols(x, y)
    return RegressionReport(slope, intercept, r2, len(x), transform, dropped)


@dataclass
class QueryRegression:
    query: Query
    report: RegressionReport | None
    query_degree: int
    family: str | None = None
    error: str | None = None


def r2_across_queries(model: Model, graph: Graph, split: DatasetSplit | None, queries,
                      transform: str = "log10", families: dict | None = None,
                      train_graph: Graph | None = None) -> list[QueryRegression]:
    """One degree/score regression per query; failures are recorded, not raised."""
    tg = train_graph if train_graph is not None else training_graph(graph, split)
    out = []
    for q in queries:
        fixed = graph._e(q.entity)
        fam = None if families is None else families.get(graph.entities[fixed].id)
        try:
            rep = regress(score_degree_table(model, graph, split, q, tg), transform)
            out.append(QueryRegression(q, rep, int(tg.degrees[fixed]), fam))
        except ValueError as exc:
            logger.warning("regression failed for %s: %s", q, exc)
            out.append(QueryRegression(q, None, int(tg.degrees[fixed]), fam, str(exc)))
    return out


def queries_with_min_edges(graph: Graph, relation, min_edges: int = 5, direction: str = "tail",
                           scope: str = "typed") -> list[Query]:
    """Queries for every fixed-side entity with at least ``min_edges`` edges of ``relation``."""
    r = graph._r(relation)
    tr = graph.triples
    side = tr[tr[:, 1] == r, 0 if direction == "tail" else 2]
    counts = np.bincount(side, minlength=graph.n_entities)
    return [Query(int(e), r, direction, scope) for e in np.flatnonzero(counts >= min_edges)]


@dataclass
class TypeSeparation:
    summary: dict[str, tuple[float, float, float]]  # etype -> (min, median, max)
    valid_type: str
    separated: bool
    margin: float
    overlap: int  # other-type candidates scoring at or above the valid type's minimum


def type_separation(table, valid_type: str) -> TypeSeparation:
    by_type: dict[str, list[float]] = {}
    for rec in table:
        by_type.setdefault(rec.etype, []).append(rec.score)
    if len(by_type) < 2 or valid_type not in by_type:
        raise ValueError("type separation needs the valid type and at least one other type")
    summary = {t: (float(np.min(v)), float(np.median(v)), float(np.max(v))) for t, v in by_type.items()}
    lo = summary[valid_type][0]
    others = np.concatenate([v for t, v in by_type.items() if t != valid_type])
    margin = lo - float(others.max())
    return TypeSeparation(summary, valid_type, margin > 0, margin, int((others >= lo).sum()))


def _link_counts(tg: Graph, link_type: str) -> np.ndarray:
    """Per-entity count of incident training triples whose other endpoint has ``link_type``."""
    tr = tg.triples
    codes = tg.etype_codes
    if link_type not in tg.types:
        return np.zeros(tg.n_entities, dtype=np.int64)
    c = tg.types.index(link_type)
    loop = tr[:, 0] == tr[:, 2]
    to_tail = (codes[tr[:, 2]] == c)
    to_head = (codes[tr[:, 0]] == c) & ~loop
    return (np.bincount(tr[to_tail, 0], minlength=tg.n_entities)
            + np.bincount(tr[to_head, 2], minlength=tg.n_entities))


@dataclass
class DiseaseLinkReport:
    linked: list[ScoreDegreeRecord]
    unlinked: list[ScoreDegreeRecord]
    count_regression: RegressionReport | None
    ratio_regression: RegressionReport | None
    flags: list[str] = field(default_factory=list)


def disease_link_analysis(model: Model, graph: Graph, split: DatasetSplit | None, query: Query,
                          link_type: str = "Disease", train_graph: Graph | None = None) -> DiseaseLinkReport:
    """Scores of candidates with vs without ``link_type`` edges, and regressions of
    score on the link count and on link count / degree."""
    tg = train_graph if train_graph is not None else training_graph(graph, split)
    table = score_degree_table(model, graph, split, query, tg)
    counts = _link_counts(tg, link_type)
    flags = []
    for rec in table:
        rec.group = "linked" if counts[rec.entity] > 0 else "unlinked"
    linked = [r for r in table if r.group == "linked"]
    unlinked = [r for r in table if r.group == "unlinked"]
    for name, part in (("linked", linked), ("unlinked", unlinked)):
        if not part:
            flags.append(f"empty {name} partition")
    c = np.array([counts[r.entity] for r in table], dtype=np.float64)
    d = np.array([r.degree for r in table], dtype=np.float64)
    s = np.array([r.score for r in table], dtype=np.float64)
    count_reg = ratio_reg = None
    try:
        count_reg = regress((c, s), "identity")
    except ValueError as exc:
        flags.append(f"count regression: {exc}")
    keep = d > 0
    try:
        ratio_reg = regress((c[keep] / d[keep], s[keep]), "identity")
        ratio_reg.dropped = int((~keep).sum())
    except ValueError as exc:
        flags.append(f"ratio regression: {exc}")
    return DiseaseLinkReport(linked, unlinked, count_reg, ratio_reg, flags)


@dataclass
class TrivialRelationReport:
    applicable: bool
    groups: dict[str, list[ScoreDegreeRecord]] = field(default_factory=dict)
    regressions: dict[str, RegressionReport | None] = field(default_factory=dict)
    medians: dict[str, float] = field(default_factory=dict)
    reason: str = ""


def trivial_relation_analysis(model: Model, graph: Graph, split: DatasetSplit | None, query: Query,
                              transform: str = "log10", train_graph: Graph | None = None) -> TrivialRelationReport:
    """Split candidates by whether they share an edge of another relation with the
    query entity in the training graph; regress score on degree per group."""
    tg = train_graph if train_graph is not None else training_graph(graph, split)
    fixed, r = query.resolve(graph)
    tr = tg.triples
    inc = tr[tg.incident(fixed)]
    alt = inc[inc[:, 1] != r]
    partners = set(np.where(alt[:, 0] == fixed, alt[:, 2], alt[:, 0]).tolist())
    table = score_degree_table(model, graph, split, query, tg)
    for rec in table:
        rec.group = "other-edge" if rec.entity in partners else "no-other-edge"
    groups = {"other-edge": [x for x in table if x.group == "other-edge"],
              "no-other-edge": [x for x in table if x.group == "no-other-edge"]}
    if not groups["other-edge"]:
        return TrivialRelationReport(False, groups, reason="query entity has no other relation types to candidates")
    regs, meds = {}, {}
    for name, recs in groups.items():
        meds[name] = float(np.median([x.score for x in recs])) if recs else float("nan")
        try:
            regs[name] = regress(recs, transform)
        except ValueError:
            regs[name] = None
    return TrivialRelationReport(True, groups, regs, meds)
