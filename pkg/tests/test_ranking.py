import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgaudit.graph import EntityRef, Graph, RelationType
from kgaudit.models import Model, score
from kgaudit.ranking import (Query, Stratum, aggregate, complete, decile_strata, evaluate, connectivity_strata,
                             rank_of, stratified_evaluate, triple_ranks)

from oracles import brute_metrics, brute_rank


def gene_graph(n, triples=()):
    g = Graph([EntityRef(f"G{i}", f"G{i}", "Gene") for i in range(n)],
              [RelationType("GiG", "GiG", ("Gene", "Gene")), RelationType("GrG", "GrG", ("Gene", "Gene"))])
    g.add_triples(np.asarray(triples, dtype=np.int64).reshape(-1, 3))
    return g


def distmult(ent, rel):
    ent = np.asarray(ent, float).reshape(len(ent), -1)
    return Model("DistMult", ent.shape[1], ent, np.asarray(rel, float).reshape(len(rel), -1))


def test_three_way_tie_at_top_is_rank_two():
    g = gene_graph(4)
    m = distmult([[1], [2], [2], [2]], [[1], [1]])
    ranked = complete(m, g, Query(0, 0))
    assert rank_of(ranked, 1) == 2.0
    assert rank_of(ranked, 1, "optimistic") == 1.0
    assert rank_of(ranked, 1, "pessimistic") == 3.0
    assert rank_of(ranked, 0) == 4.0


def test_metrics_example():
    mt = aggregate([1, 2, 4], ks=(1, 3, 10))
    assert mt.mr == pytest.approx(7 / 3)
    assert mt.mrr == pytest.approx(0.58333, abs=1e-5)
    assert mt.hits == {1: pytest.approx(1 / 3), 3: pytest.approx(2 / 3), 10: 1.0}


def test_aggregate_empty():
    assert aggregate([]).n == 0 and math.isnan(aggregate([]).mr)


def test_filtered_rank_drops_other_true_tails():
    # G0 -GiG-> G1 and G2 known; G2 scores best
    g = gene_graph(4, [[0, 0, 1], [0, 0, 2]])
    m = distmult([[1], [2], [3], [0]], [[1], [1]])
    raw = triple_ranks(m, g, [[0, 0, 1]], policy="raw")
    filt = triple_ranks(m, g, [[0, 0, 1]], policy="filtered")
    assert raw[0] == 2.0 and filt[0] == 1.0


def test_complete_sorted_and_ties_by_index():
    g = gene_graph(5)
    m = distmult([[1], [3], [3], [0], [5]], [[1], [1]])
    ranked = complete(m, g, Query("G0", "GiG"))
    assert ranked.entities.tolist() == [4, 1, 2, 0, 3]
    assert ranked.top(1)[0] == int(np.argmax([score(m, 0, 0, t) for t in range(5)]))


def test_complete_typed_scope(toy):
    m = Model.init("TransE", toy.n_entities, toy.n_relations, 4, rng=0)
    ranked = complete(m, toy, Query("D1", "DaG"))
    assert {toy.entities[e].etype for e in ranked.entities} == {"Gene"}
    ranked = complete(m, toy, Query("G1", "DaG", direction="head"))
    assert {toy.entities[e].etype for e in ranked.entities} == {"Disease"}
    assert len(complete(m, toy, Query("D1", "DaG", scope="all"))) == toy.n_entities


def test_unknown_query_ids(toy):
    m = Model.init("TransE", toy.n_entities, toy.n_relations, 4, rng=0)
    with pytest.raises(KeyError):
        complete(m, toy, Query("nope", "DaG"))
    with pytest.raises(ValueError):
        Query("D1", "DaG", direction="sideways")


def test_evaluate_both_directions(toy):
    m = Model.init("DistMult", toy.n_entities, toy.n_relations, 4, rng=1)
    res = evaluate(m, toy, toy.triples[:4], directions=("tail", "head"))
    assert set(res) == {"tail", "head", "both"}
    assert res["both"].n == 8
    with pytest.raises(ValueError):
        evaluate(m, toy, np.empty((0, 3), int))


def brute_force_ranks(m, g, triples, policy, direction, known):
    known = {tuple(x) for x in known.tolist()}
    out = []
    for h, r, t in triples.tolist():
        target = t if direction == "tail" else h
        cands = range(g.n_entities)
        trip = (lambda c: (h, r, c)) if direction == "tail" else (lambda c: (c, r, t))
        s_t = score(m, *trip(target))
        others = [score(m, *trip(c)) for c in cands if c != target
                  and not (policy == "filtered" and trip(c) in known)]
        out.append(brute_rank(s_t, others))
    return out


@st.composite
def ranking_case(draw):
    n = draw(st.integers(2, 20))
    edges = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, 1), st.integers(0, n - 1)),
                          min_size=1, max_size=40))
    seed = draw(st.integers(0, 2**32 - 1))
    quantized = draw(st.booleans())
    return n, edges, seed, quantized


@settings(max_examples=50, deadline=None)
@given(ranking_case(), st.sampled_from(["raw", "filtered"]), st.sampled_from(["tail", "head"]))
def test_ranks_match_brute_force(case, policy, direction):
    n, edges, seed, quantized = case
    g = gene_graph(n, edges)
    rng = np.random.default_rng(seed)
    ent = rng.integers(-2, 3, (n, 2)).astype(float) if quantized else rng.normal(size=(n, 2))
    m = distmult(ent, rng.integers(1, 3, (2, 2)).astype(float))
    got = triple_ranks(m, g, g.triples, policy, direction, scope="all")
    ref = brute_force_ranks(m, g, g.triples, policy, direction, g.triples)
    np.testing.assert_array_equal(got, ref)
    a, b = aggregate(got, ks=(1, 3, 10)), brute_metrics(ref)
    assert a.mr == pytest.approx(b["mr"], rel=1e-12)
    assert a.mrr == pytest.approx(b["mrr"], rel=1e-12)
    assert a.hits == pytest.approx(b["hits"])


@settings(max_examples=40, deadline=None)
@given(ranking_case())
def test_filtered_never_worse_than_raw(case):
    n, edges, seed, _ = case
    g = gene_graph(n, edges)
    m = Model.init("TransE", n, 2, 3, rng=seed)
    raw = triple_ranks(m, g, g.triples, "raw", scope="all")
    filt = triple_ranks(m, g, g.triples, "filtered", scope="all")
    assert (filt <= raw).all() and (filt >= 1).all() and (raw <= n).all()


def test_connectivity_strata_bounds():
    low, high = connectivity_strata()
    deg = np.array([0, 199, 200, 1000, 1001])
    assert low.contains(deg).tolist() == [True, True, False, False, False]
    assert high.contains(deg).tolist() == [False, False, False, False, True]


def test_decile_strata_disjoint():
    deg = np.arange(100)
    bottom, top = decile_strata(deg)
    assert bottom.contains(deg).sum() == 10 and top.contains(deg).sum() == 10
    with pytest.raises(ValueError):
        decile_strata(np.ones(10))


def test_stratified_flags_empty_and_rejects_overlap(toy):
    m = Model.init("TransE", toy.n_entities, toy.n_relations, 4, rng=0)
    res = stratified_evaluate(m, toy, toy.triples, toy, [Stratum("low", 0, 3), Stratum("huge", 100, 200)])
    assert res["huge"].flagged and res["huge"].metrics is None
    assert res["low"].size == int((toy.degrees[toy.triples[:, 2]] < 3).sum())
    with pytest.raises(ValueError, match="overlap"):
        stratified_evaluate(m, toy, toy.triples, toy, [Stratum("a", 0, 5), Stratum("b", 4, 9)])


def test_stratified_sizes_partition(small_synth):
    m = Model.init("DistMult", small_synth.n_entities, small_synth.n_relations, 4, rng=0)
    tr = small_synth.triples[:300]
    strata = [Stratum("a", 0, 20), Stratum("b", 20, 40), Stratum("c", 40, math.inf)]
    res = stratified_evaluate(m, small_synth, tr, small_synth, strata)
    assert sum(r.size for r in res.values()) == 300
    whole = evaluate(m, small_synth, tr)["tail"]
    total = sum(r.metrics.mr * r.size for r in res.values() if r.metrics)
    assert total / 300 == pytest.approx(whole.mr)
