"""Similarity back-ends for segment/speaker i-vector pairs.

* a centering + whitening + length-normalization front end,
* simplified PLDA (w = mu + Phi y + eps) trained by EM and scored with the
  two-covariance log-likelihood ratio,
* one-vs-rest linear SVMs on the handful of speaker i-vectors,
* the kappa-scaled normalization that turns a score row into a posterior.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DegeneracyError, ParameterError
from .gmm import LOG_2PI

logger = logging.getLogger(__name__)

PLDA_LLR = "plda-llr"
SVM_MARGIN = "svm-margin"
EIGENVOICE = "eigenvoice-loglik"
SCORE_KINDS = (PLDA_LLR, SVM_MARGIN, EIGENVOICE)


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Log-domain scores, segments x speakers."""

    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in SCORE_KINDS:
            raise ParameterError(f"unknown score kind {self.kind!r}")
        v = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class Preprocessor:
    mean: np.ndarray
    whiten: np.ndarray

    def apply(self, W, length_norm: bool = True) -> np.ndarray:
        W = np.asarray(W, dtype=np.float64)
        out = (W - self.mean) @ self.whiten.T
        if length_norm:
            norm = np.linalg.norm(out, axis=-1, keepdims=True)
            out = np.divide(out, norm, out=np.zeros_like(out), where=norm > 0)
        return out


def preprocess_ivectors(train) -> Preprocessor:
    """Fit centering and symmetric whitening on training i-vectors."""
    X = np.atleast_2d(np.asarray(train, dtype=np.float64))
    if X.shape[0] < 2:
        raise ParameterError("need at least 2 training i-vectors")
    R = X.shape[1]
    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, bias=True).reshape(R, R)
    evals, evecs = np.linalg.eigh(cov)
    if evals.min() <= 1e-10 * max(evals.max(), 1e-300):
        delta = 1e-6 * np.trace(cov) / R
        if delta <= 0:
            delta = 1e-6
        logger.warning("i-vector covariance is singular; shrinking by %.3g", delta)
        evals = evals + delta
    whiten = (evecs / np.sqrt(evals)) @ evecs.T
    return Preprocessor(mean, whiten)


@dataclass(frozen=True, eq=False)
class PldaModel:
    mu: np.ndarray
    phi: np.ndarray
    sigma_eps: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64).ravel()
        phi = np.asarray(self.phi, dtype=np.float64).reshape(mu.shape[0], -1)
        sig = np.asarray(self.sigma_eps, dtype=np.float64)
        if sig.shape != (mu.shape[0], mu.shape[0]):
            raise ParameterError(f"sigma_eps shape {sig.shape} does not match dim {mu.shape[0]}")
        if phi.shape[1] > mu.shape[0]:
            raise ParameterError("speaker rank cannot exceed the i-vector dimension")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "sigma_eps", 0.5 * (sig + sig.T))

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    @property
    def between(self) -> np.ndarray:
        return self.phi @ self.phi.T

    @property
    def within(self) -> np.ndarray:
        return self.sigma_eps

    @cached_property
    def _llr_terms(self):
        B, W = self.between, self.within
        tot = B + W
        tot_inv = np.linalg.inv(tot)
        A = np.linalg.inv(tot - B @ tot_inv @ B)
        cross = -tot_inv @ B @ A
        cross = 0.5 * (cross + cross.T)
        Q = tot_inv - A
        Q = 0.5 * (Q + Q.T)
        joint = np.block([[tot, B], [B, tot]])
        const = np.linalg.slogdet(tot)[1] - 0.5 * np.linalg.slogdet(joint)[1]
        return Q, cross, const


def plda_llr(p: PldaModel, w1, w2) -> float:
    """log p(w1, w2 | same speaker) - log p(w1, w2 | different speakers)."""
    w1 = np.asarray(w1, dtype=np.float64)
    w2 = np.asarray(w2, dtype=np.float64)
    if w1.shape != (p.dim,) or w2.shape != (p.dim,):
        raise ParameterError(f"i-vectors must have length {p.dim}")
    Q, P, const = p._llr_terms
    x1, x2 = w1 - p.mu, w2 - p.mu
    own = x1 @ Q @ x1 + x2 @ Q @ x2
    cross = x1 @ P @ x2 + x2 @ P @ x1
    return float(0.5 * own - 0.5 * cross + const)


def plda_llr_matrix(p: PldaModel, W1, W2) -> np.ndarray:
    """LLR for every row of W1 against every row of W2."""
    Q, P, const = p._llr_terms
    X1 = np.atleast_2d(W1) - p.mu
    X2 = np.atleast_2d(W2) - p.mu
    if X1.shape[1] != p.dim or X2.shape[1] != p.dim:
        raise ParameterError(f"i-vectors must have length {p.dim}")
    own1 = np.einsum("ij,jk,ik->i", X1, Q, X1)
    own2 = np.einsum("ij,jk,ik->i", X2, Q, X2)
    cross = X1 @ P @ X2.T
    return 0.5 * (own1[:, None] + own2[None, :]) - cross + const


def _group(ivectors, labels):
    X = np.atleast_2d(np.asarray(ivectors, dtype=np.float64))
    labels = np.asarray(labels)
    if labels.shape[0] != X.shape[0]:
        raise ParameterError("one speaker label per i-vector required")
    speakers = sorted(set(labels.tolist()))
    groups = [X[labels == s] for s in speakers]
    return X, groups


def _plda_loglik(groups, mu, phi, sigma):
    R = mu.shape[0]
    sig_inv = np.linalg.inv(sigma)
    logdet_sig = np.linalg.slogdet(sigma)[1]
    G = phi.T @ sig_inv @ phi
    total = 0.0
    for Xi in groups:
        n = Xi.shape[0]
        D = Xi - mu
        L = np.eye(phi.shape[1]) + n * G
        b = phi.T @ sig_inv @ D.sum(0)
        total += -0.5 * (
            n * R * LOG_2PI
            + n * logdet_sig
            + np.linalg.slogdet(L)[1]
            + np.einsum("ij,jk,ik->", D, sig_inv, D)
            - b @ np.linalg.solve(L, b)
        )
    return float(total)


def train_plda(ivectors, speaker_labels, rank: int, iters: int = 10,
               trace: list | None = None) -> PldaModel:
    """EM for the simplified PLDA model with full residual covariance.

    Initialized from the eigenvectors of the between-speaker scatter. If
    ``trace`` is given, the marginal log-likelihood is appended before each
    update and after the last one.
    """
    X, groups = _group(ivectors, speaker_labels)
    R = X.shape[1]
    if len(groups) < 2:
        raise DegeneracyError("PLDA training needs at least two speakers")
    if max(g.shape[0] for g in groups) < 2:
        raise DegeneracyError("PLDA training needs some speaker with two or more sessions")
    if not 1 <= rank <= R:
        raise ParameterError(f"rank must lie in [1, {R}]")
    if iters < 1:
        raise ParameterError("iters must be >= 1")
    mu = X.mean(axis=0)
    n_tot = X.shape[0]
    means = np.stack([g.mean(0) for g in groups]) - mu
    counts = np.array([g.shape[0] for g in groups], dtype=np.float64)
    between = (means * counts[:, None]).T @ means / n_tot
    within = sum((g - g.mean(0)).T @ (g - g.mean(0)) for g in groups) / n_tot
    within = within + 1e-6 * np.trace(within) / R * np.eye(R)
    evals, evecs = np.linalg.eigh(between)
    order = np.argsort(evals)[::-1][:rank]
    phi = evecs[:, order] * np.sqrt(np.maximum(evals[order], 1e-6 * max(evals.max(), 1e-12)))
    sigma = within
    scatter = (X - mu).T @ (X - mu)
    sums = [(g - mu).sum(0) for g in groups]

    for it in range(iters):
        if trace is not None:
            trace.append(_plda_loglik(groups, mu, phi, sigma))
        sig_inv = np.linalg.inv(sigma)
        G = phi.T @ sig_inv @ phi
        acc_fy = np.zeros((R, rank))
        acc_yy = np.zeros((rank, rank))
        for n, f in zip(counts, sums):
            Linv = np.linalg.inv(np.eye(rank) + n * G)
            Ey = Linv @ (phi.T @ sig_inv @ f)
            acc_fy += np.outer(f, Ey)
            acc_yy += n * (Linv + np.outer(Ey, Ey))
        phi = np.linalg.solve(acc_yy, acc_fy.T).T
        sigma = (scatter - phi @ acc_fy.T) / n_tot
        sigma = 0.5 * (sigma + sigma.T)
        logger.debug("plda iter %d done", it)
    if trace is not None:
        trace.append(_plda_loglik(groups, mu, phi, sigma))
    return PldaModel(mu, phi, sigma)


@dataclass(frozen=True, eq=False)
class LinearSvm:
    eta: np.ndarray
    bias: float


def _dual_cd(X, y, C, max_sweeps, tol):
    """Dual coordinate descent for the hinge-loss SVM with the bias as an extra feature."""
    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    diag = np.einsum("ij,ij->i", Xa, Xa)
    alpha = np.zeros(X.shape[0])
    v = np.zeros(Xa.shape[1])
    for _ in range(max_sweeps):
        max_pg = 0.0
        for i in range(X.shape[0]):
            G = y[i] * (v @ Xa[i]) - 1.0
            if alpha[i] <= 0:
                pg = min(G, 0.0)
            elif alpha[i] >= C:
                pg = max(G, 0.0)
            else:
                pg = G
            max_pg = max(max_pg, abs(pg))
            if pg != 0.0:
                new = min(max(alpha[i] - G / diag[i], 0.0), C)
                v += (new - alpha[i]) * y[i] * Xa[i]
                alpha[i] = new
        if max_pg < tol:
            break
    return v[:-1].copy(), float(v[-1])


def train_speaker_svms(speaker_ivectors, C_reg: float = 1.0, max_sweeps: int = 2000,
                       tol: float = 1e-10) -> list[LinearSvm]:
    """One linear SVM per speaker, its own i-vector positive and the rest negative."""
    W = np.atleast_2d(np.asarray(speaker_ivectors, dtype=np.float64))
    S = W.shape[0]
    if S < 2:
        raise DegeneracyError("one-vs-rest SVMs need at least two speakers")
    if C_reg <= 0:
        raise ParameterError("C_reg must be > 0")
    for a in range(S):
        for b in range(a + 1, S):
            if np.array_equal(W[a], W[b]):
                logger.warning("speakers %d and %d share an identical i-vector", a, b)
    models = []
    for s in range(S):
        y = -np.ones(S)
        y[s] = 1.0
        eta, bias = _dual_cd(W, y, C_reg, max_sweeps, tol)
        models.append(LinearSvm(eta, bias))
    return models


def svm_score(svm: LinearSvm, w) -> float:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != svm.eta.shape:
        raise ParameterError(f"i-vector length {w.shape} != SVM dim {svm.eta.shape}")
    return float(svm.eta @ w + svm.bias)


def svm_score_matrix(svms: list[LinearSvm], W) -> np.ndarray:
    eta = np.stack([m.eta for m in svms])
    bias = np.array([m.bias for m in svms])
    return np.atleast_2d(W) @ eta.T + bias


def posteriors_from_scores(row, kappa: float, kind: str = PLDA_LLR) -> np.ndarray:
    """Normalize one row of log-domain scores into a distribution over speakers.

    Every kind uses p_s proportional to exp(kappa * score_s); for PLDA the
    score is the log-likelihood ratio, so this is the ratio raised to kappa.
    """
    if kind not in SCORE_KINDS:
        raise ParameterError(f"unknown score kind {kind!r}")
    return score_posteriors(np.asarray(row, dtype=np.float64)[None, :], kappa)[0]


def score_posteriors(scores, kappa: float) -> np.ndarray:
    """Row-wise kappa-softmax with max subtraction; all -inf rows become uniform."""
    if kappa < 0:
        raise ParameterError("kappa must be >= 0")
    z = kappa * np.atleast_2d(np.asarray(scores, dtype=np.float64)) if kappa else (
        np.zeros(np.shape(np.atleast_2d(scores))))
    top = z.max(axis=1, keepdims=True)
    dead = ~np.isfinite(top[:, 0])
    if np.any(dead):
        logger.warning("%d score rows are all -inf; using uniform posteriors", int(dead.sum()))
        z[dead] = 0.0
        top[dead] = 0.0
    e = np.exp(z - top)
    return e / e.sum(axis=1, keepdims=True)
