import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy.stats import norm

from lcmdiar.errors import DataError, ParameterError
from lcmdiar.gmm import DiagonalGmm, train_ubm


def hand_density(frame, w, mu, var):
    """sum_c w_c prod_d N(x_d | mu_cd, var_cd), evaluated with scipy."""
    return sum(wc * np.prod(norm.pdf(frame, m, np.sqrt(v))) for wc, m, v in zip(w, mu, var))


def test_responsibility_hand_case():
    g = DiagonalGmm([0.5, 0.5], [[0.0], [1.0]], [[1.0], [1.0]])
    assert_allclose(g.responsibilities([1.0])[1], 1 / (1 + np.exp(-0.5)), rtol=1e-12)
    assert_allclose(g.responsibilities([1.0])[1], 0.6225, atol=1e-4)
    assert_allclose(g.responsibilities([0.5]), [0.5, 0.5], atol=1e-15)


def test_single_component_responsibility_and_loglik():
    g = DiagonalGmm([1.0], [[0.0]], [[1.0]])
    assert_allclose(g.responsibilities([3.0]), [1.0])
    assert_allclose(g.loglik([0.0]), -0.5 * np.log(2 * np.pi), rtol=1e-14)
    assert_allclose(g.loglik([0.0]), -0.9189, atol=1e-4)


def test_two_component_loglik_matches_hand_sum(rng):
    w = np.array([0.3, 0.7])
    mu = rng.standard_normal((2, 3))
    var = rng.uniform(0.5, 2.0, (2, 3))
    g = DiagonalGmm(w, mu, var)
    x = rng.standard_normal(3)
    assert_allclose(g.loglik(x), np.log(hand_density(x, w, mu, var)), rtol=1e-12)


def test_duplicate_component_leaves_loglik_unchanged(rng):
    mu = rng.standard_normal((3, 2))
    var = rng.uniform(0.5, 2.0, (3, 2))
    g = DiagonalGmm([0.2, 0.3, 0.5], mu, var)
    g2 = DiagonalGmm([0.2, 0.3, 0.25, 0.25], np.vstack([mu, mu[2]]), np.vstack([var, var[2]]))
    X = rng.standard_normal((20, 2))
    assert_allclose(g2.frame_loglik(X), g.frame_loglik(X), rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5), st.integers(0, 2**31))
def test_responsibilities_are_distributions(C, D, seed):
    r = np.random.default_rng(seed)
    g = DiagonalGmm(r.dirichlet(np.ones(C)), 5 * r.standard_normal((C, D)), r.uniform(0.01, 3, (C, D)))
    P = g.posteriors(30 * r.standard_normal((40, D)))
    assert np.all((P >= 0) & (P <= 1))
    assert_allclose(P.sum(1), 1.0, atol=1e-12)


def test_no_underflow_far_from_every_component():
    g = DiagonalGmm([0.5, 0.5], np.zeros((2, 40)), np.full((2, 40), 1e-3))
    x = np.full(40, 50.0)
    assert np.isfinite(g.loglik(x))
    assert_allclose(g.responsibilities(x).sum(), 1.0, atol=1e-12)


def test_affine_change_keeps_argmax(rng):
    w = rng.dirichlet(np.ones(4))
    mu = rng.standard_normal((4, 3))
    var = rng.uniform(0.5, 2, (4, 3))
    X = rng.standard_normal((50, 3))
    a, b = np.array([2.0, 0.5, 3.0]), np.array([1.0, -2.0, 0.3])
    g1 = DiagonalGmm(w, mu, var)
    g2 = DiagonalGmm(w, a * mu + b, a**2 * var)
    assert np.array_equal(g1.posteriors(X).argmax(1), g2.posteriors(a * X + b).argmax(1))


def test_dimension_mismatch():
    g = DiagonalGmm([1.0], [[0.0, 0.0]], [[1.0, 1.0]])
    with pytest.raises(ParameterError):
        g.responsibilities([1.0])
    with pytest.raises(ParameterError):
        DiagonalGmm([0.5, 0.6], [[0.0], [1.0]], [[1.0], [1.0]])


def test_single_component_is_closed_form(rng):
    X = rng.standard_normal((300, 3)) * [1, 2, 3] + [4, 5, 6]
    g = train_ubm([X], 1, iters=3)
    assert_allclose(g.means[0], X.mean(0), rtol=1e-12)
    assert_allclose(g.variances[0], X.var(0), rtol=1e-12)


def test_two_separated_clusters(rng):
    X = np.concatenate([0.1 * rng.standard_normal(500), 10 + 0.1 * rng.standard_normal(500)])[:, None]
    g = train_ubm([X], 2, iters=10, seed=0)
    order = np.argsort(g.means[:, 0])
    lo, hi = X[X[:, 0] < 5], X[X[:, 0] >= 5]
    assert_allclose(g.means[order, 0], [lo.mean(), hi.mean()], atol=1e-6)
    assert np.all(np.abs(g.means[order, 0] - [0, 10]) < 0.05)
    assert np.all(np.abs(g.weights - 0.5) < 0.02)


def test_em_trace_non_decreasing(rng):
    X = np.concatenate([rng.standard_normal((400, 2)) + c for c in ([0, 0], [4, 0], [0, 5])])
    trace = []
    train_ubm([X], 5, iters=15, seed=2, trace=trace)
    assert len(trace) == 16
    diffs = np.diff(trace)
    assert np.all(diffs >= -1e-8 * np.abs(trace[1:]))
    one, two = [], []
    train_ubm([X], 5, iters=1, seed=2, trace=one)
    train_ubm([X], 5, iters=2, seed=2, trace=two)
    assert two[-1] >= one[-1] - 1e-8 * abs(one[-1])


def test_deterministic_and_floored(rng):
    X = rng.standard_normal((200, 2))
    X[:50] = 3.0  # a block of identical frames would collapse a variance
    g1 = train_ubm([X], 3, iters=5, seed=4)
    g2 = train_ubm([X], 3, iters=5, seed=4)
    assert g1.means.tobytes() == g2.means.tobytes()
    assert np.all(g1.variances >= 1e-4 * X.var(0) - 1e-15)


def test_too_few_frames():
    with pytest.raises(DataError):
        train_ubm([np.zeros((3, 2))], 4)
