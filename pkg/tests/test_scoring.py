import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy.stats import multivariate_normal

from lcmdiar.errors import DegeneracyError, ParameterError
from lcmdiar.scoring import (
    PLDA_LLR,
    SVM_MARGIN,
    LinearSvm,
    PldaModel,
    plda_llr,
    plda_llr_matrix,
    posteriors_from_scores,
    preprocess_ivectors,
    score_posteriors,
    svm_score,
    svm_score_matrix,
    train_plda,
    train_speaker_svms,
)


def four_density_llr(p: PldaModel, w1, w2):
    B, W = p.between, p.within
    tot = B + W
    x = np.concatenate([w1 - p.mu, w2 - p.mu])
    same = multivariate_normal(np.zeros(x.size), np.block([[tot, B], [B, tot]])).logpdf(x)
    diff = (multivariate_normal(np.zeros(p.dim), tot).logpdf(w1 - p.mu)
            + multivariate_normal(np.zeros(p.dim), tot).logpdf(w2 - p.mu))
    return same - diff


def random_plda(r, R=2, rank=2):
    A = r.standard_normal((R, R))
    return PldaModel(r.standard_normal(R), r.standard_normal((R, rank)), A @ A.T + 0.5 * np.eye(R))


def test_preprocess_contracts(rng):
    X = rng.standard_normal((500, 6)) @ rng.standard_normal((6, 6)) + 3.0
    prep = preprocess_ivectors(X)
    assert_allclose(prep.apply(X.mean(0), length_norm=False), 0.0, atol=1e-10)
    Y = prep.apply(X, length_norm=False)
    assert np.linalg.norm(np.cov(Y, rowvar=False, bias=True) - np.eye(6)) < 1e-6
    assert_allclose(np.linalg.norm(prep.apply(X), axis=1), 1.0, atol=1e-12)


def test_preprocess_singular_covariance_shrinks(rng, caplog):
    X = np.hstack([rng.standard_normal((50, 2)), np.zeros((50, 1))])
    prep = preprocess_ivectors(X)
    assert np.all(np.isfinite(prep.whiten))
    assert "singular" in caplog.text
    with pytest.raises(ParameterError):
        preprocess_ivectors(X[:1])


def test_llr_hand_case():
    p = PldaModel([0.0], [[1.0]], [[1.0]])
    expected = -0.5 * (2 / 3 - 1) - 0.5 * np.log(3 / 4)
    assert_allclose(plda_llr(p, [1.0], [1.0]), expected, rtol=1e-12)
    assert_allclose(plda_llr(p, [1.0], [1.0]), 0.3105, atol=1e-4)


def test_llr_zero_between_is_zero(rng):
    p = PldaModel(np.zeros(3), np.zeros((3, 1)), np.eye(3))
    assert_allclose(plda_llr(p, rng.standard_normal(3), rng.standard_normal(3)), 0.0, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_llr_matches_joint_gaussians_and_is_symmetric(seed):
    r = np.random.default_rng(seed)
    p = random_plda(r)
    w1, w2 = 2 * r.standard_normal(2), 2 * r.standard_normal(2)
    assert abs(plda_llr(p, w1, w2) - four_density_llr(p, w1, w2)) <= 1e-8
    assert plda_llr(p, w1, w2) == plda_llr(p, w2, w1)


def test_llr_matrix_matches_pairwise(rng):
    p = random_plda(rng, R=4, rank=2)
    A, B = rng.standard_normal((5, 4)), rng.standard_normal((3, 4))
    M = plda_llr_matrix(p, A, B)
    for i in range(5):
        for j in range(3):
            assert_allclose(M[i, j], plda_llr(p, A[i], B[j]), rtol=1e-10, atol=1e-12)
    with pytest.raises(ParameterError):
        plda_llr(p, np.zeros(3), np.zeros(4))


def generate_plda_data(r, R=10, rank=3, n_spk=50, n_sess=10):
    phi = r.standard_normal((R, rank))
    A = 0.5 * r.standard_normal((R, R))
    W = A @ A.T + 0.3 * np.eye(R)
    mu = r.standard_normal(R)
    X, labels = [], []
    for s in range(n_spk):
        y = mu + phi @ r.standard_normal(rank)
        X.append(y + r.multivariate_normal(np.zeros(R), W, size=n_sess))
        labels += [s] * n_sess
    return np.vstack(X), np.array(labels), phi @ phi.T, W


def test_train_plda_recovers_between_covariance():
    r = np.random.default_rng(0)
    X, labels, B, W = generate_plda_data(r)
    trace = []
    p = train_plda(X, labels, 3, iters=20, trace=trace)
    assert np.linalg.norm(p.between - B) / np.linalg.norm(B) < 0.15
    assert np.linalg.norm(p.within - W) / np.linalg.norm(W) < 0.15
    assert np.all(np.diff(trace) >= -1e-8 * np.abs(trace[1:]))


def test_train_plda_order_invariance(rng):
    X, labels, _, _ = generate_plda_data(rng, R=4, rank=2, n_spk=10, n_sess=4)
    perm = rng.permutation(len(labels))
    p1 = train_plda(X, labels, 2, iters=5)
    p2 = train_plda(X[perm], labels[perm], 2, iters=5)
    assert_allclose(p1.between, p2.between, rtol=1e-9, atol=1e-12)
    assert_allclose(p1.within, p2.within, rtol=1e-9, atol=1e-12)


def test_train_plda_needs_two_speakers(rng):
    with pytest.raises(DegeneracyError):
        train_plda(rng.standard_normal((5, 3)), [0] * 5, 1)


def test_svm_symmetric_points():
    svms = train_speaker_svms(np.array([[1.0, 0.0], [-1.0, 0.0]]), C_reg=1e6)
    assert_allclose(svms[0].eta, [1.0, 0.0], atol=1e-8)
    assert_allclose(svms[0].bias, 0.0, atol=1e-8)
    assert_allclose(svms[1].eta, [-1.0, 0.0], atol=1e-8)


def test_svm_negative_order_and_scale(rng):
    W = rng.standard_normal((5, 4))
    base = train_speaker_svms(W)[0]
    perm = np.concatenate([[0], 1 + rng.permutation(4)])
    other = train_speaker_svms(W[perm])[0]
    assert_allclose(other.eta, base.eta, atol=1e-8)
    assert_allclose(other.bias, base.bias, atol=1e-8)
    # hard-margin regime: the separating boundary is scale covariant
    for a, b in zip(train_speaker_svms(W, C_reg=1e6), train_speaker_svms(2 * W, C_reg=1e6)):
        assert np.array_equal(np.sign(W @ a.eta + a.bias), np.sign(2 * W @ b.eta + b.bias))
    with pytest.raises(DegeneracyError):
        train_speaker_svms(W[:1])


def test_svm_score_examples(rng):
    m = LinearSvm(np.array([1.0, 0.0]), 0.0)
    assert svm_score(m, [0.4, 7.0]) == pytest.approx(0.4)
    m = LinearSvm(rng.standard_normal(3), 0.7)
    assert svm_score(m, np.zeros(3)) == 0.7
    w = rng.standard_normal(3)
    assert_allclose(svm_score(m, 3 * w), 3 * (m.eta @ w) + 0.7)
    assert_allclose(svm_score_matrix([m], w[None])[0, 0], svm_score(m, w))


def test_posterior_examples():
    assert_allclose(posteriors_from_scores(np.log([3.0, 1.0]), 1.0, PLDA_LLR), [0.75, 0.25], rtol=1e-12)
    assert_allclose(posteriors_from_scores([0.1, 0.0], 10.0, SVM_MARGIN),
                    [np.e / (np.e + 1), 1 / (np.e + 1)], rtol=1e-12)
    assert_allclose(posteriors_from_scores([5.0, -3.0, 1.0], 0.0), [1 / 3] * 3)
    assert_allclose(score_posteriors([[-np.inf, -np.inf]], 1.0), [[0.5, 0.5]])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=6), st.floats(-100, 100), st.floats(0.01, 20))
def test_posterior_shift_invariance_and_kappa_monotone(row, c, kappa):
    row = np.array(row)
    p = posteriors_from_scores(row, kappa)
    assert_allclose(p.sum(), 1.0, atol=1e-12)
    assert_allclose(posteriors_from_scores(row + c, kappa), p, atol=1e-12)
    sharper = posteriors_from_scores(row, kappa * 1.5)
    assert sharper.max() >= p.max() - 1e-15
    below = row < row.max() - 1e-6
    if below.any() and p[below].sum() > 1e-8:
        assert sharper.max() > p.max()
