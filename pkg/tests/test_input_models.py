import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from edpmoe import BinomialBeta, CategoricalDirichlet, GaussianNIG
from edpmoe.input_models import InputModel

from oracles import (beta_binomial_logml, dirichlet_multinomial_logml, nig_double_quadrature,
                     nig_joint_logml, nig_quadrature)

NIG = GaussianNIG(u0=0.0, c=1.0, a=2.0, b=1.0)


def test_categorical_marginal_symmetric():
    im = InputModel([CategoricalDirichlet((1, 1, 1))])
    assert np.exp(im.log_marginal_point(np.array([2.0]))) == pytest.approx(1 / 3, abs=1e-14)


def test_binomial_marginal_uniform():
    im = InputModel([BinomialBeta(1, 1.0, 1.0)])
    assert np.exp(im.log_marginal_point(np.array([1.0]))) == pytest.approx(0.5, abs=1e-14)


def test_nig_marginal_quadrature():
    im = InputModel([NIG])
    v = np.exp(im.log_marginal_point(np.array([0.7])))
    assert v == pytest.approx(nig_double_quadrature(0.7, 0.0, 1.0, 2.0, 1.0), abs=1e-8)
    assert v == pytest.approx(nig_quadrature(0.7, 0.0, 1.0, 2.0, 1.0), abs=1e-10)


def test_nig_predictive_quadrature():
    im = InputModel([NIG])
    st_ = im.stats_of(np.array([[1.0], [2.0]]))
    v = np.exp(im.log_predictive_point(np.array([1.5]), st_))
    assert v == pytest.approx(nig_quadrature(1.5, 0.0, 1.0, 2.0, 1.0, obs=[1.0, 2.0]), abs=1e-8)


def test_categorical_predictive_posterior_mean():
    im = InputModel([CategoricalDirichlet((1, 1))])
    st_ = im.stats_of(np.array([[0.0]]))
    assert np.exp(im.log_predictive_point(np.array([0.0]), st_)) == pytest.approx(2 / 3, abs=1e-14)


def test_categorical_joint_hand_value():
    im = InputModel([CategoricalDirichlet((1, 1))])
    assert np.exp(im.log_joint_of(np.array([[0.0], [1.0]]))) == pytest.approx(1 / 6, abs=1e-14)


def test_add_remove_and_counts():
    im = InputModel([NIG])
    s = im.empty_stats()
    im.add(s, np.array([1.0]))
    assert s.n == 1 and s.s1[0] == 1.0 and s.s2[0] == 1.0
    im2 = InputModel([CategoricalDirichlet((1, 1, 1))])
    s2 = im2.empty_stats()
    for x in [0, 0, 2]:
        im2.add(s2, np.array([float(x)]))
    assert s2.cnt[0].tolist() == [2, 0, 1]
    with pytest.raises(RuntimeError):
        im.remove(im.empty_stats(), np.array([1.0]))


def test_invalid_category_code():
    im = InputModel([CategoricalDirichlet((1, 1, 1))])
    with pytest.raises(ValueError):
        im.log_marginal_point(np.array([3.0]))
    imb = InputModel([BinomialBeta(2)])
    with pytest.raises(ValueError):
        imb.log_marginal_point(np.array([2.5]))


MIXED = [GaussianNIG(0.5, 0.25, 2.0, 1.0), CategoricalDirichlet((0.5, 1.0, 2.0)),
         BinomialBeta(4, 1.5, 0.7), GaussianNIG(-1.0, 2.0, 3.0, 0.5)]


def _mixed_rows(draw_floats, draw_cats, draw_bins):
    return np.column_stack([draw_floats[:, 0], draw_cats, draw_bins, draw_floats[:, 1]]).astype(float)


rows = st.integers(1, 8).flatmap(lambda n: st.tuples(
    st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=n, max_size=n),
    st.lists(st.integers(0, 2), min_size=n, max_size=n),
    st.lists(st.integers(0, 4), min_size=n, max_size=n),
    st.randoms(use_true_random=False)))


@given(rows)
def test_chain_rule_any_order(r):
    fl, cats, bins, rnd = r
    X = _mixed_rows(np.array(fl), np.array(cats), np.array(bins))
    im = InputModel(MIXED)
    joint = im.log_joint_of(X)
    order = list(range(X.shape[0]))
    rnd.shuffle(order)
    s = im.empty_stats()
    total = 0.0
    for i in order:
        total += im.log_predictive_point(X[i], s)
        im.add(s, X[i])
    assert total == pytest.approx(joint, abs=1e-10)
    # independent closed forms per family
    ref = (nig_joint_logml(X[:, 0], 0.5, 0.25, 2.0, 1.0)
           + dirichlet_multinomial_logml(np.bincount(X[:, 1].astype(int), minlength=3), (0.5, 1.0, 2.0))
           + beta_binomial_logml(X[:, 2], 4, 1.5, 0.7)
           + nig_joint_logml(X[:, 3], -1.0, 2.0, 3.0, 0.5))
    assert joint == pytest.approx(ref, abs=1e-10)


@given(rows)
def test_add_remove_restores(r):
    fl, cats, bins, _ = r
    X = _mixed_rows(np.array(fl), np.array(cats), np.array(bins))
    im = InputModel(MIXED)
    s = im.stats_of(X[:-1]) if X.shape[0] > 1 else im.empty_stats()
    ref = s.copy()
    im.add(s, X[-1])
    full = im.stats_of(X)
    assert s.n == full.n and np.allclose(s.s1, full.s1, atol=1e-12) and np.allclose(s.s2, full.s2, atol=1e-12)
    im.remove(s, X[-1])
    assert s.n == ref.n
    assert np.allclose(s.s1, ref.s1, rtol=1e-12, atol=1e-12)
    assert np.allclose(s.s2, ref.s2, rtol=1e-12, atol=1e-12)
    assert all(np.array_equal(s.cnt[d], ref.cnt[d]) for d in ref.cnt)


def test_empty_predictive_equals_marginal():
    im = InputModel(MIXED)
    x = np.array([0.3, 2.0, 3.0, -0.2])
    assert im.log_predictive_point(x, im.empty_stats()) == pytest.approx(im.log_marginal_point(x), abs=1e-14)


def test_single_point_joint_equals_marginal():
    im = InputModel(MIXED)
    x = np.array([0.3, 1.0, 4.0, -0.2])
    assert im.log_joint_of(x[None]) == pytest.approx(im.log_marginal_point(x), abs=1e-12)


def test_discrete_predictives_sum_to_one():
    rng = np.random.default_rng(3)
    im = InputModel([CategoricalDirichlet((0.5, 1.0, 2.0, 0.3)), BinomialBeta(5, 0.8, 1.7)])
    X = np.column_stack([rng.integers(0, 4, 6), rng.integers(0, 6, 6)]).astype(float)
    s = im.stats_of(X)
    tot_c = sum(np.exp(im.log_predictive_dims(np.array([g, 0.0]), s)[0]) for g in range(4))
    tot_b = sum(np.exp(im.log_predictive_dims(np.array([0.0, g]), s)[1]) for g in range(6))
    assert tot_c == pytest.approx(1.0, abs=1e-12)
    assert tot_b == pytest.approx(1.0, abs=1e-12)


def test_nig_predictive_integrates_to_one():
    im = InputModel([GaussianNIG(1.0, 0.25, 2.0, 1.0)])
    s = im.stats_of(np.array([[0.2], [1.9], [4.0]]))
    f = lambda x: np.exp(im.log_predictive_point(np.array([x]), s))
    v, _ = integrate.quad(f, -np.inf, np.inf, epsabs=1e-12, limit=200)
    assert v == pytest.approx(1.0, abs=1e-6)


def test_vectorised_paths_agree():
    rng = np.random.default_rng(0)
    im = InputModel(MIXED)
    X = _mixed_rows(rng.normal(size=(7, 2)), rng.integers(0, 3, 7), rng.integers(0, 5, 7))
    s = im.stats_of(X[:4])
    rows_ = im.log_predictive_rows(X, s)
    for i in range(7):
        assert np.allclose(rows_[i], im.log_predictive_dims(X[i], s), atol=1e-12)
    many = im.log_predictive_many(X[5], [im.empty_stats(), s])
    assert many[0] == pytest.approx(im.log_marginal_point(X[5]), abs=1e-12)
    assert many[1] == pytest.approx(im.log_predictive_point(X[5], s), abs=1e-12)
    inside = np.zeros(7, dtype=bool)
    inside[:4] = True
    loo = im.log_predictive_loo(X, s, inside)
    for i in range(7):
        ref = im.stats_of(np.delete(X[:4], i, axis=0)) if i < 4 else s
        assert loo[i] == pytest.approx(im.log_predictive_point(X[i], ref), abs=1e-10)


def test_large_n_stays_finite():
    rng = np.random.default_rng(1)
    im = InputModel([NIG, CategoricalDirichlet((1, 1, 1)), BinomialBeta(3)])
    X = np.column_stack([rng.normal(size=500), rng.integers(0, 3, 500), rng.integers(0, 4, 500)]).astype(float)
    v = im.log_joint_of(X)
    assert np.isfinite(v)
    assert v == pytest.approx(nig_joint_logml(X[:, 0], 0, 1, 2, 1)
                              + dirichlet_multinomial_logml(np.bincount(X[:, 1].astype(int)), (1, 1, 1))
                              + beta_binomial_logml(X[:, 2], 3, 1, 1), rel=1e-10)


def test_nig_cancellation_guard():
    # huge offset: raw second moments cancel badly, centred result must still be accurate
    im = InputModel([GaussianNIG(1e7, 0.25, 2.0, 1.0)])
    X = 1e7 + np.array([[0.1], [-0.2], [0.05], [0.3]])
    assert im.log_joint_of(X) == pytest.approx(nig_joint_logml(X[:, 0], 1e7, 0.25, 2.0, 1.0), abs=1e-6)


def test_sample_predictive_moments():
    rng = np.random.default_rng(2)
    im = InputModel([GaussianNIG(0.0, 1.0, 3.0, 2.0), CategoricalDirichlet((1.0, 3.0))])
    s = im.stats_of(np.array([[1.0, 1.0], [2.0, 1.0]]))
    d = im.sample_predictive(rng, 200000, s)
    # t predictive: location (c u0 + n xbar)/(c + n) = 1.0
    assert d[:, 0].mean() == pytest.approx(1.0, abs=0.02)
    assert d[:, 1].mean() == pytest.approx(5 / 6, abs=0.01)
