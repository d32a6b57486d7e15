"""Edge removal, addition and rewiring around one target entity, with retraining."""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .graph import DatasetSplit, Graph
from .ranking import Query, candidate_scope, complete, rank_of
from .seeding import PERTURB, derive_seed
from .training import TrainConfig, TrainingDivergence, train

logger = logging.getLogger(__name__)

STRATEGIES = ("RemoveDisease", "RemoveRandom", "AddDisease", "AddAntCompGene", "Rewire")
ADD_TYPES = {"Disease": ("Disease",), "AntCompGene": ("Anatomy", "Compound", "Gene")}


class PoolExhausted(ValueError):
    pass


def select_target(model, graph: Graph, query: Query, mode: str = "top-novel") -> int:
    """``top-novel``: best-scored candidate with no query-relation edge to the
    query entity; ``bottom``: worst-scored candidate."""
    ranked = complete(model, graph, query)
    if mode == "bottom":
        return int(ranked.entities[-1])
    if mode != "top-novel":
        raise ValueError(f"unknown selection mode {mode!r}")
    fixed, r = query.resolve(graph)
    tr = graph.triples[graph.incident(fixed, r)]
    linked = set((tr[:, 2] if query.direction == "tail" else tr[:, 0]).tolist())
    for e in ranked.entities.tolist():
        if e not in linked:
            return int(e)
    raise ValueError("no novel candidates for this query")


def fraction_count(fraction: float, n: int) -> int:
    """Round-half-to-even conversion of a fraction of ``n`` to a count."""
    if not 0 <= fraction <= 1:
        raise ValueError("fraction must lie in [0, 1]")
    return int(round(fraction * n))


def remove_edges(graph: Graph, target, strategy: str, fraction: float, rng,
                 disease_type: str = "Disease") -> Graph:
    """Delete a random ``fraction`` of the target's incident triples.

    ``Disease`` restricts the eligible triples to those whose other endpoint
    has ``disease_type``; ``Random`` considers all incident triples.
    """
    i = graph._e(target)
    inc = graph.incident(i)
    if strategy == "Disease":
        tr = graph.triples[inc]
        other = np.where(tr[:, 0] == i, tr[:, 2], tr[:, 0])
        inc = inc[graph.etype_codes[other] == graph.types.index(disease_type)] \
            if disease_type in graph.types else inc[:0]
        if len(inc) == 0:
            raise ValueError("target has no disease edges to remove")
    elif strategy != "Random":
        raise ValueError(f"unknown removal strategy {strategy!r}")
    k = fraction_count(fraction, len(inc))
    drop = rng.choice(inc, size=k, replace=False) if k else inc[:0]
    keep = np.ones(len(graph), dtype=bool)
    keep[drop] = False
    return graph.with_triples(graph.triples[keep])


def _pair_options(graph: Graph, target: int, other: int) -> list[tuple[int, int, int]]:
    """Schema-valid triples joining ``target`` and ``other`` in either orientation."""
    tt, ot = graph.entities[target].etype, graph.entities[other].etype
    out = []
    for ri, rel in enumerate(graph.relations):
        if rel.signature == (tt, ot):
            out.append((target, ri, other))
        if rel.signature == (ot, tt):
            out.append((other, ri, target))
    return out


def add_edges(graph: Graph, target, strategy: str, count: int, rng, exclude=()) -> Graph:
    """Add ``count`` schema-conforming triples between the target and random
    entities of the strategy's types.

    The partner is drawn uniformly from the eligible entities (minus the
    target and ``exclude``); the relation and orientation uniformly from the
    schema-valid options for that pair that do not already exist.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if strategy not in ADD_TYPES:
        raise ValueError(f"unknown addition strategy {strategy!r}")
    i = graph._e(target)
    if count == 0:
        return graph.copy()
    banned = {graph._e(e) for e in exclude} | {i}
    pool = [int(e) for t in ADD_TYPES[strategy] for e in graph.entities_of_type(t) if int(e) not in banned]
    existing = graph.triple_set
    added: list[tuple[int, int, int]] = []
    taken: set = set()
    while len(added) < count:
        if not pool:
            raise PoolExhausted(f"only {len(added)} of {count} edges could be added")
        j = int(rng.integers(len(pool)))
        opts = [o for o in _pair_options(graph, i, pool[j]) if o not in existing and o not in taken]
        if not opts:
            pool[j] = pool[-1]
            pool.pop()
            continue
        o = opts[int(rng.integers(len(opts)))]
        taken.add(o)
        added.append(o)
    return graph.with_triples(np.concatenate([graph.triples, np.array(added, dtype=np.int64)]))


def rewire_edges(graph: Graph, target, fraction: float, rng) -> Graph:
    """Move the far endpoint of a random ``fraction`` of the target's triples.

    Each replacement is a uniform draw from entities of the same type that
    are neither the target, one of its original neighbours, nor an earlier
    replacement.  Relation and direction are kept, so the target's degree
    and relation-type multiset are unchanged.
    """
    i = graph._e(target)
    inc = graph.incident(i)
    tr = graph.triples
    inc = inc[tr[inc, 0] != tr[inc, 2]]  # self-loops have no far endpoint
    k = fraction_count(fraction, len(inc))
    if k == 0:
        return graph.copy()
    chosen = np.sort(rng.choice(inc, size=k, replace=False))
    used = set(graph.neighbors(i).tolist()) | {i}
    new = tr.copy()
    for tid in chosen.tolist():
        h, r, t = tr[tid]
        far_is_tail = h == i
        far = t if far_is_tail else h
        cand = graph.entities_of_type(graph.entities[far].etype)
        cand = cand[~np.isin(cand, list(used))]
        if len(cand) == 0:
            raise PoolExhausted(f"no unused {graph.entities[far].etype} entities left for rewiring")
        rep = int(cand[rng.integers(len(cand))])
        used.add(rep)
        new[tid] = (i, r, rep) if far_is_tail else (rep, r, i)
    return graph.with_triples(new)


@dataclass
class PerturbPlan:
    query: Query
    strategy: str
    grid: list[float]
    repeats: int = 10
    seed: int = 0
    train_config: TrainConfig = field(default_factory=TrainConfig)
    kind: str = "TransE"
    target: object = None  # entity id/index; None selects by strategy

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        self.grid = sorted(float(g) for g in self.grid)
        if not self.grid or self.grid[0] != 0:
            self.grid = [0.0] + self.grid
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if not self.strategy.startswith("Add") and self.grid[-1] > 1:
            raise ValueError("removal and rewiring grids are fractions in [0, 1]")


@dataclass
class GridPoint:
    value: float
    ranks: list[float]
    mean: float
    ci95: float
    failed: int = 0


@dataclass
class PerturbOutcome:
    strategy: str
    target: int
    baseline_rank: float
    points: list[GridPoint]

    def rows(self):
        for p in self.points:
            for rep, rk in enumerate(p.ranks):
                yield {"strategy": self.strategy, "grid_value": p.value, "repeat": rep, "rank": rk}

    def summary(self):
        for p in self.points:
            yield {"strategy": self.strategy, "grid_value": p.value, "mean_rank": p.mean, "ci95": p.ci95}


def mean_ci95(values) -> tuple[float, float]:
    """Mean and Student-t 95% half-width (n - 1 dof; 0 for a single value)."""
    v = np.asarray([x for x in values if np.isfinite(x)], dtype=np.float64)
    if len(v) == 0:
        return float("nan"), float("nan")
    if len(v) == 1:
        return float(v[0]), 0.0
    sem = v.std(ddof=1) / math.sqrt(len(v))
    return float(v.mean()), float(stats.t.ppf(0.975, len(v) - 1) * sem)


def apply_strategy(graph: Graph, target: int, strategy: str, value: float, rng, query: Query) -> Graph:
    if strategy == "RemoveDisease":
        return remove_edges(graph, target, "Disease", value, rng)
    if strategy == "RemoveRandom":
        return remove_edges(graph, target, "Random", value, rng)
    if strategy == "AddDisease":
        return add_edges(graph, target, "Disease", int(value), rng, exclude=[query.resolve(graph)[0]])
    if strategy == "AddAntCompGene":
        return add_edges(graph, target, "AntCompGene", int(value), rng)
    return rewire_edges(graph, target, value, rng)


def _measure(graph: Graph, plan: PerturbPlan, target: int) -> float:
    model, _ = train(graph, plan.kind, plan.train_config)
    return rank_of(complete(model, graph, plan.query), target)


def _job(args):
    graph, plan, target, value, seed = args
    rng = np.random.default_rng(seed)
    perturbed = apply_strategy(graph, target, plan.strategy, value, rng, plan.query)
    try:
        return _measure(perturbed, plan, target)
    except TrainingDivergence as exc:
        logger.warning("repeat diverged (grid %s): %s", value, exc)
        return float("nan")


def default_target(model, graph: Graph, plan: PerturbPlan) -> int:
    if plan.strategy.startswith("Remove"):
        return select_target(model, graph, plan.query, "top-novel")
    if plan.strategy.startswith("Add"):
        return select_target(model, graph, plan.query, "bottom")
    # rewiring: the highest-degree candidate of the query's completion type
    fixed, r = plan.query.resolve(graph)
    cand = candidate_scope(graph, r, plan.query.direction, plan.query.scope)
    return int(cand[np.argmax(graph.degrees[cand])])


def run_experiment(graph: Graph, plan: PerturbPlan, split: DatasetSplit | None = None,
                   workers: int | None = None) -> PerturbOutcome:
    """Perturb, retrain and re-rank the target for every grid value and repeat.

    Only the training triples are perturbed when a split is given.  Each
    (grid index, repeat) pair gets its own perturbation seed derived from
    ``plan.seed``; training always uses ``plan.train_config.seed`` so grid
    value 0 reproduces the baseline.
    """
    tg = graph if split is None else graph.subgraph(split.train)
    base_model, _ = train(tg, plan.kind, plan.train_config)
    target = tg._e(plan.target) if plan.target is not None else default_target(base_model, tg, plan)
    baseline = rank_of(complete(base_model, tg, plan.query), target)
    jobs, slots = [], []
    ranks = {gi: [None] * plan.repeats for gi in range(len(plan.grid))}
    for gi, value in enumerate(plan.grid):
        for rep in range(plan.repeats):
            if value == 0 and plan.train_config.deterministic:
                # an empty perturbation retrains to the baseline bit for bit
                ranks[gi][rep] = baseline
                continue
            jobs.append((tg, plan, target, value, derive_seed(plan.seed, PERTURB, gi, rep)))
            slots.append((gi, rep))
    if workers is None:
        workers = int(os.environ.get("KGE_AUDIT_THREADS", "1"))
    if workers > 1 and not plan.train_config.deterministic and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    for (gi, rep), rk in zip(slots, results):
        ranks[gi][rep] = rk
    points = []
    for gi, value in enumerate(plan.grid):
        rk = ranks[gi]
        mean, ci = mean_ci95(rk)
        points.append(GridPoint(value, rk, mean, ci, sum(1 for x in rk if not np.isfinite(x))))
    return PerturbOutcome(plan.strategy, target, baseline, points)
