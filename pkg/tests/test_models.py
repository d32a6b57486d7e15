import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgaudit.models import KINDS, Model, score, score_arrays, score_candidates, score_triples

from oracles import ref_score


def manual(kind, ent, rel, normal=None, norm=None):
    ent, rel = np.asarray(ent, float), np.asarray(rel, float)
    dim = ent.shape[1] // 2 if kind in ("ComplEx", "RotatE") else ent.shape[1]
    return Model(kind, dim, ent, rel, None if normal is None else np.asarray(normal, float), norm)


def test_transe_l1_example():
    m = manual("TransE", [[1, 2], [0, 0]], [[1, 1]], norm="L1")
    assert score(m, 0, 0, 1) == -5.0


def test_transe_perfect_translation_scores_zero():
    m = manual("TransE", [[1, 2], [2, 3]], [[1, 1]])
    assert score(m, 0, 0, 1) == 0.0


def test_distmult_example():
    m = manual("DistMult", [[1, 1]], [[1, 1]])
    assert score(m, 0, 0, 0) == 2.0


def test_complex_with_zero_imaginary_equals_distmult(rng):
    ent, rel = rng.normal(size=(4, 3)), rng.normal(size=(2, 3))
    dm = manual("DistMult", ent, rel)
    cx = manual("ComplEx", np.hstack([ent, 0 * ent]), np.hstack([rel, 0 * rel]))
    h, r, t = [0, 1, 2, 3], [0, 1, 1, 0], [3, 2, 1, 0]
    np.testing.assert_allclose(score_triples(cx, h, r, t), score_triples(dm, h, r, t), rtol=1e-12)


def test_rotate_identity_rotation():
    # phase 0 rotation: score is minus the coordinate-wise complex distance
    m = manual("RotatE", [[3, 0, 4, 0], [0, 0, 0, 0]], [[1, 1, 0, 0]])
    assert score(m, 0, 0, 1) == -5.0
    assert score(m, 0, 0, 0) == 0.0


def test_transh_projection_removes_normal_component():
    m = manual("TransH", [[0, 5], [0, -2]], [[1, 0]], normal=[[0, 1]], norm="L2")
    assert score(m, 0, 0, 1) == -1.0


def test_unknown_index_raises():
    m = manual("DistMult", [[1, 1]], [[1, 1]])
    with pytest.raises(KeyError):
        score(m, 0, 0, 3)


def test_norm_validation():
    with pytest.raises(ValueError):
        manual("DistMult", [[1.0]], [[1.0]], norm="L1")
    with pytest.raises(ValueError):
        manual("TransE", [[1.0]], [[1.0]], norm="L3")
    with pytest.raises(ValueError):
        manual("TransH", [[1.0]], [[1.0]])


@pytest.mark.parametrize("kind", ["ComplEx", "RotatE"])
def test_complex_width_doubles(kind):
    m = Model.init(kind, 3, 2, 5, rng=0)
    assert m.entity.shape == (3, 10) and m.m == m.n == 5


def test_rotate_relations_unit_modulus():
    m = Model.init("RotatE", 3, 4, 6, rng=1)
    mod = np.hypot(m.relation[:, :6], m.relation[:, 6:])
    np.testing.assert_allclose(mod, 1.0, atol=1e-12)


def test_init_bounds():
    m = Model.init("TransE", 50, 3, 16, rng=2)
    assert np.abs(m.entity).max() <= 6 / 4


@pytest.mark.parametrize("kind", KINDS)
def test_matches_reference(kind, rng):
    m = Model.init(kind, 5, 3, 4, norm="L1" if kind == "TransE" else None, rng=rng)
    for h, r, t in [(0, 0, 1), (2, 1, 3), (4, 2, 4)]:
        w = m.normal[r].tolist() if kind == "TransH" else None
        ref = ref_score(kind, m.entity[h].tolist(), m.relation[r].tolist(), m.entity[t].tolist(), w, m.norm)
        assert score(m, h, r, t) == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_candidates_match_triples(kind, rng):
    m = Model.init(kind, 9, 2, 3, rng=rng)
    cand = np.arange(9)
    np.testing.assert_allclose(score_candidates(m, 4, 1, cand, "tail", chunk=4),
                               score_triples(m, np.full(9, 4), np.ones(9, int), cand))
    np.testing.assert_allclose(score_candidates(m, 4, 1, cand, "head"),
                               score_triples(m, cand, np.ones(9, int), np.full(9, 4)))


vec = st.lists(st.floats(-3, 3, allow_nan=False), min_size=4, max_size=4)


@settings(max_examples=80, deadline=None)
@given(vec, vec, vec)
def test_distmult_symmetric(h, r, t):
    m = manual("DistMult", [h, t], [r])
    assert score(m, 0, 0, 1) == pytest.approx(score(m, 1, 0, 0), abs=1e-9)


@settings(max_examples=80, deadline=None)
@given(vec, vec, vec, vec)
def test_transe_translation_invariant(h, r, t, c):
    a = manual("TransE", [h, t], [r])
    b = manual("TransE", [np.add(h, c), np.add(t, c)], [r])
    assert score(a, 0, 0, 1) == pytest.approx(score(b, 0, 0, 1), abs=1e-9)


@settings(max_examples=80, deadline=None)
@given(vec, vec, vec)
def test_complex_conjugate_relation_swaps_roles(h, r, t):
    # score(h, r, t) == score(t, conj(r), h)
    rc = r[:2] + [-x for x in r[2:]]
    m = manual("ComplEx", [h, t], [r, rc])
    assert score(m, 0, 0, 1) == pytest.approx(score(m, 1, 1, 0), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(KINDS), st.integers(0, 2**32 - 1))
def test_scores_nonpositive_for_distance_models(kind, seed):
    m = Model.init(kind, 4, 2, 3, rng=seed)
    s = score_triples(m, [0, 1, 2], [0, 1, 0], [3, 2, 1])
    assert np.isfinite(s).all()
    if kind in ("TransE", "TransH", "RotatE"):
        assert (s <= 0).all()


def test_score_arrays_broadcast_grad_shapes(rng):
    m = Model.init("ComplEx", 2, 1, 3, rng=rng)
    s, g = score_arrays(m, m.entity[0], m.relation[0], m.entity, with_grad=True)
    assert s.shape == (2,) and g["h"].shape == g["t"].shape == (2, 6)
