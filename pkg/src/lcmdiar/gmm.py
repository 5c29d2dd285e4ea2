"""Diagonal-covariance GMM used as the universal background model."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DataError, ParameterError

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)

# Frames processed per accumulation chunk; fixed so reductions are reproducible.
CHUNK = 65536


@dataclass(frozen=True, eq=False)
class DiagonalGmm:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        var = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        if w.ndim != 1 or mu.shape != var.shape or mu.shape[0] != w.shape[0]:
            raise ParameterError(
                f"inconsistent GMM shapes: weights {w.shape}, means {mu.shape}, vars {var.shape}"
            )
        if abs(w.sum() - 1.0) > 1e-10 or np.any(w < 0):
            raise ParameterError("GMM weights must be a probability vector")
        if np.any(var <= 0):
            raise ParameterError("GMM variances must be positive")
        for name, arr in (("weights", w), ("means", mu), ("variances", var)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.dim:
            raise ParameterError(f"frame dim {X.shape[-1]} does not match model dim {self.dim}")
        return X

    def log_joint(self, X) -> np.ndarray:
        """log(w_c N(x | mu_c, var_c)) for every frame and component, shape (frames, C)."""
        X = np.atleast_2d(self._check(X))
        prec = 1.0 / self.variances
        const = (
            np.log(self.weights)
            - 0.5 * (self.dim * LOG_2PI + np.sum(np.log(self.variances), axis=1))
            - 0.5 * np.sum(self.means**2 * prec, axis=1)
        )
        quad = -0.5 * (X**2) @ prec.T + X @ (self.means * prec).T
        return quad + const

    def posteriors(self, X) -> np.ndarray:
        """Per-frame component responsibilities, shape (frames, C)."""
        lj = self.log_joint(X)
        return np.exp(lj - logsumexp(lj, axis=1, keepdims=True))

    def frame_loglik(self, X) -> np.ndarray:
        return logsumexp(self.log_joint(X), axis=1)

    def responsibilities(self, frame) -> np.ndarray:
        frame = self._check(frame)
        if frame.ndim != 1:
            raise ParameterError("responsibilities expects a single frame")
        return self.posteriors(frame[None, :])[0]

    def loglik(self, frame) -> float:
        frame = self._check(frame)
        if frame.ndim != 1:
            raise ParameterError("loglik expects a single frame")
        return float(self.frame_loglik(frame[None, :])[0])


def _stack(features) -> np.ndarray:
    mats = [np.asarray(getattr(f, "data", f), dtype=np.float64) for f in features]
    if not mats:
        raise DataError("no training features")
    return np.concatenate(mats, axis=0)


def _kmeanspp_init(X, C, rng, scale):
    """D^2-weighted seeding followed by one assignment/refinement pass."""
    n = X.shape[0]
    Xs = X / scale
    centers = [Xs[rng.integers(n)]]
    d2 = np.sum((Xs - centers[0]) ** 2, axis=1)
    for _ in range(1, C):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers.append(Xs[idx])
        d2 = np.minimum(d2, np.sum((Xs - Xs[idx]) ** 2, axis=1))
    centers = np.array(centers)
    assign = np.empty(n, dtype=np.int64)
    for lo in range(0, n, CHUNK):
        block = Xs[lo : lo + CHUNK]
        dist = (block**2).sum(1)[:, None] - 2 * block @ centers.T + (centers**2).sum(1)[None, :]
        assign[lo : lo + CHUNK] = np.argmin(dist, axis=1)
    return centers * scale, assign


def _em_stats(gmm: DiagonalGmm, X):
    C, D = gmm.n_components, gmm.dim
    N = np.zeros(C)
    F = np.zeros((C, D))
    S = np.zeros((C, D))
    total = 0.0
    for lo in range(0, X.shape[0], CHUNK):
        block = X[lo : lo + CHUNK]
        lj = gmm.log_joint(block)
        ll = logsumexp(lj, axis=1, keepdims=True)
        gamma = np.exp(lj - ll)
        total += float(ll.sum())
        N += gamma.sum(0)
        F += gamma.T @ block
        S += gamma.T @ (block**2)
    return total, N, F, S


def train_ubm(features, n_components: int, iters: int = 10, seed: int = 0,
              var_floor_ratio: float = 1e-4, trace: list | None = None) -> DiagonalGmm:
    """Maximum-likelihood EM for a diagonal GMM.

    ``features`` is a list of FeatureMatrix (or 2-D arrays). If ``trace``
    is given, the total data log-likelihood is appended before every update
    and once more for the returned model, so ``len(trace) == iters + 1``.
    """
    if n_components < 1 or iters < 1:
        raise ParameterError("need n_components >= 1 and iters >= 1")
    X = _stack(features)
    n, D = X.shape
    if n < n_components:
        raise DataError(f"{n} frames cannot train {n_components} components")
    rng = np.random.default_rng(seed)
    gvar = X.var(axis=0)
    gvar = np.where(gvar > 0, gvar, 1.0)
    floor = var_floor_ratio * gvar

    if n_components == 1:
        means = X.mean(axis=0, keepdims=True)
        var = np.maximum(X.var(axis=0, keepdims=True), floor)
        gmm = DiagonalGmm(np.ones(1), means, var)
    else:
        centers, assign = _kmeanspp_init(X, n_components, rng, np.sqrt(gvar))
        counts = np.bincount(assign, minlength=n_components).astype(np.float64)
        means = centers.copy()
        var = np.tile(gvar, (n_components, 1))
        for c in np.flatnonzero(counts > 1):
            members = X[assign == c]
            means[c] = members.mean(0)
            var[c] = np.maximum(members.var(0), floor)
        counts = np.maximum(counts, 1.0)
        gmm = DiagonalGmm(counts / counts.sum(), means, var)

    for it in range(iters):
        total, N, F, S = _em_stats(gmm, X)
        if trace is not None:
            trace.append(total)
        logger.debug("ubm iter %d loglik %.6f", it, total)
        w = N / N.sum()
        safe = np.maximum(N, 1e-300)[:, None]
        means = F / safe
        var = np.maximum(S / safe - means**2, floor)
        empty = np.flatnonzero(N < 1e-8)
        if empty.size:
            heavy = int(np.argmax(N))
            for c in empty:
                logger.warning("UBM component %d emptied; re-seeding from component %d", c, heavy)
                w[c] = w[heavy] = w[heavy] / 2
                means[c] = means[heavy] + 0.1 * np.sqrt(var[heavy]) * rng.standard_normal(D)
                var[c] = var[heavy]
            w = w / w.sum()
        gmm = DiagonalGmm(w, means, var)
    if trace is not None:
        trace.append(_em_stats(gmm, X)[0])
    return gmm
