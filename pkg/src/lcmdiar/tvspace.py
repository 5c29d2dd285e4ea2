"""Total-variability space: Baum-Welch statistics, T training and i-vectors.

Supervector layout is component-major: rows ``c*dim:(c+1)*dim`` of ``T``
form the block ``T_c`` belonging to UBM component ``c``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .corpus import FeatureMatrix, SegmentGrid
from .errors import DataError, NumericError, ParameterError
from .gmm import LOG_2PI, DiagonalGmm

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BaumWelchStats:
    """Zeroth (N), centered first (F) and centered diagonal second (S) order stats."""

    N: np.ndarray
    F: np.ndarray
    S: np.ndarray | None = None

    def __post_init__(self):
        N = np.asarray(self.N, dtype=np.float64)
        F = np.atleast_2d(np.asarray(self.F, dtype=np.float64))
        if N.ndim != 1 or F.shape[0] != N.shape[0]:
            raise ParameterError(f"stats shapes disagree: N {N.shape}, F {F.shape}")
        if np.any(N < 0):
            raise ParameterError("zeroth-order stats must be nonnegative")
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "F", F)
        if self.S is not None:
            S = np.atleast_2d(np.asarray(self.S, dtype=np.float64))
            if S.shape != F.shape:
                raise ParameterError("second-order stats must match F's shape")
            object.__setattr__(self, "S", S)

    @property
    def n_components(self) -> int:
        return self.N.shape[0]

    @property
    def dim(self) -> int:
        return self.F.shape[1]

    def __add__(self, other):
        S = None if self.S is None or other.S is None else self.S + other.S
        return BaumWelchStats(self.N + other.N, self.F + other.F, S)

    def scaled(self, alpha: float) -> "BaumWelchStats":
        return BaumWelchStats(alpha * self.N, alpha * self.F, None if self.S is None else alpha * self.S)


def accumulate_stats(g: DiagonalGmm, f: FeatureMatrix, frame_weights=None, gamma=None) -> BaumWelchStats:
    """Weighted Baum-Welch statistics of ``f`` against the UBM ``g``.

    ``gamma`` may carry precomputed frame responsibilities to skip the UBM
    evaluation.
    """
    X = np.asarray(f.data if isinstance(f, FeatureMatrix) else f, dtype=np.float64)
    if X.shape[1] != g.dim:
        raise ParameterError(f"feature dim {X.shape[1]} does not match UBM dim {g.dim}")
    if frame_weights is None:
        frame_weights = np.ones(X.shape[0])
    frame_weights = np.asarray(frame_weights, dtype=np.float64)
    if frame_weights.shape != (X.shape[0],):
        raise ParameterError(
            f"frame_weights length {frame_weights.shape} does not match {X.shape[0]} frames"
        )
    if np.any(frame_weights < 0):
        raise ParameterError("frame weights must be nonnegative")
    if gamma is None:
        gamma = g.posteriors(X) if X.shape[0] else np.zeros((0, g.n_components))
    wg = gamma * frame_weights[:, None]
    N = wg.sum(axis=0)
    # sum_m wg_mc (x_m - mu_c) = (wg^T X) - N_c mu_c
    first = wg.T @ X
    F = first - N[:, None] * g.means
    S = wg.T @ (X**2) - 2 * first * g.means + N[:, None] * g.means**2
    return BaumWelchStats(N, F, S)


@dataclass(frozen=True, eq=False)
class TotalVariability:
    T: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        T = np.asarray(self.T, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64).ravel()
        if T.ndim != 2 or T.shape[1] < 1:
            raise ParameterError("T must be a (C*dim) x R matrix with R >= 1")
        if sigma.shape[0] != T.shape[0]:
            raise ParameterError(f"sigma length {sigma.shape[0]} != T rows {T.shape[0]}")
        if np.any(sigma <= 0):
            raise ParameterError("sigma entries must be positive")
        T.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "sigma", sigma)

    @property
    def R(self) -> int:
        return self.T.shape[1]

    @property
    def supervector_dim(self) -> int:
        return self.T.shape[0]

    @cached_property
    def sigma_inv_T(self) -> np.ndarray:
        return self.T / self.sigma[:, None]

    def blocks(self, dim: int) -> np.ndarray:
        """T reshaped to (C, dim, R)."""
        if self.supervector_dim % dim:
            raise ParameterError(f"T rows {self.supervector_dim} not divisible by dim {dim}")
        return self.T.reshape(-1, dim, self.R)

    def component_precisions(self, dim: int) -> np.ndarray:
        """T_c^t Sigma_c^-1 T_c for every component, shape (C, R, R)."""
        cache = self.__dict__.setdefault("_U_cache", {})
        if dim not in cache:
            Tb = self.blocks(dim)
            Sb = self.sigma.reshape(-1, dim)
            cache[dim] = np.einsum("cdr,cds->crs", Tb / Sb[:, :, None], Tb)
        return cache[dim]

    def check_stats(self, s: BaumWelchStats):
        if s.n_components * s.dim != self.supervector_dim:
            raise ParameterError(
                f"stats ({s.n_components} x {s.dim}) do not match T with {self.supervector_dim} rows"
            )


def _posterior_system(tv: TotalVariability, N: np.ndarray, F: np.ndarray, dim: int):
    U = tv.component_precisions(dim)
    L = np.eye(tv.R) + np.tensordot(N, U, axes=(0, 0))
    b = tv.sigma_inv_T.T @ F.ravel()
    return L, b


def extract_ivector(tv: TotalVariability, s: BaumWelchStats) -> np.ndarray:
    """Posterior mean (I + T'N Sigma^-1 T)^-1 T' Sigma^-1 F."""
    tv.check_stats(s)
    L, b = _posterior_system(tv, s.N, s.F, s.dim)
    try:
        return cho_solve(cho_factor(L, lower=True), b)
    except LinAlgError as exc:
        raise NumericError(f"i-vector precision matrix is not SPD: {exc}") from exc


def extract_ivectors(tv: TotalVariability, N: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Row-wise :func:`extract_ivector` for stacked stats N (K, C), F (K, C, dim)."""
    out = np.empty((N.shape[0], tv.R))
    for k in range(N.shape[0]):
        out[k] = extract_ivector(tv, BaumWelchStats(N[k], F[k]))
    return out


def ivector_lower_bound(tv: TotalVariability, g: DiagonalGmm, X, gamma, w) -> float:
    """Responsibility-weighted log-likelihood of frames plus the standard-normal prior on w.

    Evaluated frame by frame from the Gaussian densities; used as an
    independent check on the closed-form extractor.
    """
    X = np.asarray(X, dtype=np.float64)
    shifted = g.means + (tv.blocks(g.dim) @ w)
    var = tv.sigma.reshape(-1, g.dim)
    diff = X[:, None, :] - shifted[None, :, :]
    logn = -0.5 * (np.sum(diff**2 / var, axis=2) + np.sum(np.log(var), axis=1) + g.dim * LOG_2PI)
    prior = -0.5 * (w @ w + tv.R * LOG_2PI)
    return float(np.sum(gamma * logn) + prior)


def train_tv(stats: list[BaumWelchStats], ubm: DiagonalGmm, R: int, iters: int = 10, seed: int = 0,
             trace: list | None = None) -> TotalVariability:
    """EM estimate of T with Sigma fixed to the UBM variances.

    ``trace`` receives the marginal log-likelihood of the first-order stats
    (constant terms dropped) before each update and after the last one.
    """
    if not stats:
        raise DataError("train_tv needs at least one utterance")
    if R < 1 or iters < 1:
        raise ParameterError("need R >= 1 and iters >= 1")
    C, D = ubm.n_components, ubm.dim
    for s in stats:
        if s.n_components != C or s.dim != D:
            raise ParameterError("stats do not match the UBM")
    if len(stats) < R:
        logger.warning("training T of rank %d on only %d utterances", R, len(stats))
    N = np.stack([s.N for s in stats])
    F = np.stack([s.F.ravel() for s in stats])
    sigma = ubm.variances.ravel()
    rng = np.random.default_rng(seed)
    T = 0.1 * np.sqrt(sigma)[:, None] * rng.standard_normal((C * D, R))

    def e_step(T):
        tv = TotalVariability(T, sigma)
        U = tv.component_precisions(D)
        L = np.eye(R)[None] + np.einsum("kc,crs->krs", N, U)
        b = F @ tv.sigma_inv_T
        chol = np.linalg.cholesky(L)
        Linv = np.linalg.inv(L)
        Ew = np.einsum("krs,ks->kr", Linv, b)
        logdet = 2 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1)
        obj = float(0.5 * np.sum(b * Ew) - 0.5 * np.sum(logdet))
        return Ew, Linv, obj

    for it in range(iters):
        Ew, Linv, obj = e_step(T)
        if trace is not None:
            trace.append(obj)
        logger.debug("tv iter %d objective %.6f", it, obj)
        Eww = Linv + Ew[:, :, None] * Ew[:, None, :]
        A = np.einsum("kc,krs->crs", N, Eww)
        Cacc = F.T @ Ew  # (C*D, R)
        Tnew = np.empty_like(T)
        for c in range(C):
            rows = slice(c * D, (c + 1) * D)
            Tnew[rows] = np.linalg.solve(A[c], Cacc[rows].T).T
        T = Tnew
    if trace is not None:
        trace.append(e_step(T)[2])
    return TotalVariability(T, sigma)


def speaker_ivector(tv: TotalVariability, g: DiagonalGmm, f: FeatureMatrix, grid: SegmentGrid, q_col,
                    gamma=None) -> np.ndarray:
    """i-vector of a speaker whose frames are weighted by their segment's q."""
    q_col = np.asarray(q_col, dtype=np.float64)
    if grid.n_frames != f.frames:
        raise ParameterError(f"grid covers {grid.n_frames} frames, features have {f.frames}")
    if q_col.shape != (grid.M,):
        raise ParameterError(f"q column length {q_col.shape} != segment count {grid.M}")
    if np.any(q_col < 0) or np.any(q_col > 1):
        raise ParameterError("q entries must lie in [0, 1]")
    weights = q_col[grid.frame_to_segment]
    return extract_ivector(tv, accumulate_stats(g, f, weights, gamma))


def segment_ivector(tv: TotalVariability, g: DiagonalGmm, f: FeatureMatrix, grid: SegmentGrid, m: int,
                    half_window: int, gamma=None) -> np.ndarray:
    """i-vector of segment m extracted from segments m-half_window .. m+half_window (clipped)."""
    if grid.n_frames != f.frames:
        raise ParameterError(f"grid covers {grid.n_frames} frames, features have {f.frames}")
    if not 0 <= m < grid.M:
        raise ParameterError(f"segment index {m} out of range [0, {grid.M})")
    if half_window < 0:
        raise ParameterError("half_window must be >= 0")
    lo = max(0, m - half_window)
    hi = min(grid.M - 1, m + half_window)
    bounds = grid.bounds
    weights = np.zeros(f.frames)
    weights[bounds[lo] : bounds[hi + 1]] = 1.0
    return extract_ivector(tv, accumulate_stats(g, f, weights, gamma))


@dataclass(frozen=True, eq=False)
class SegmentStats:
    """Baum-Welch stats of every grid segment: N (M, C), F and S (M, C, dim)."""

    N: np.ndarray
    F: np.ndarray
    S: np.ndarray

    @property
    def M(self) -> int:
        return self.N.shape[0]

    def weighted(self, q_col) -> BaumWelchStats:
        q_col = np.asarray(q_col, dtype=np.float64)
        return BaumWelchStats(q_col @ self.N, np.tensordot(q_col, self.F, axes=1),
                              np.tensordot(q_col, self.S, axes=1))

    def segment(self, m: int) -> BaumWelchStats:
        return BaumWelchStats(self.N[m], self.F[m], self.S[m])

    def windowed(self, half_window: int) -> "SegmentStats":
        """Sums over segments m-half_window..m+half_window, truncated at the edges."""
        if half_window < 0:
            raise ParameterError("half_window must be >= 0")
        if half_window == 0:
            return self
        M = self.M
        idx = np.arange(M)
        lo = np.maximum(0, idx - half_window)
        hi = np.minimum(M, idx + half_window + 1)

        def wsum(a):
            cs = np.concatenate([np.zeros((1,) + a.shape[1:]), np.cumsum(a, axis=0)])
            return cs[hi] - cs[lo]

        return SegmentStats(np.maximum(wsum(self.N), 0.0), wsum(self.F), wsum(self.S))


def segment_stats(g: DiagonalGmm, f: FeatureMatrix, grid: SegmentGrid, gamma=None) -> SegmentStats:
    X = np.asarray(f.data, dtype=np.float64)
    if grid.n_frames != f.frames:
        raise ParameterError(f"grid covers {grid.n_frames} frames, features have {f.frames}")
    C, D = g.n_components, g.dim
    if grid.M == 0:
        return SegmentStats(np.zeros((0, C)), np.zeros((0, C, D)), np.zeros((0, C, D)))
    if gamma is None:
        gamma = g.posteriors(X)
    bounds = grid.bounds
    M = grid.M
    N = np.empty((M, C))
    first = np.empty((M, C, D))
    second = np.empty((M, C, D))
    # Blocks of whole segments keep the (frames, C, dim) temporaries bounded.
    step = max(1, 4096 // grid.seg_len)
    for m0 in range(0, M, step):
        m1 = min(M, m0 + step)
        lo, hi = bounds[m0], bounds[m1]
        starts = bounds[m0:m1] - lo
        gb, xb = gamma[lo:hi], X[lo:hi]
        N[m0:m1] = np.add.reduceat(gb, starts, axis=0)
        first[m0:m1] = np.add.reduceat(gb[:, :, None] * xb[:, None, :], starts, axis=0)
        second[m0:m1] = np.add.reduceat(gb[:, :, None] * (xb**2)[:, None, :], starts, axis=0)
    mu = g.means[None]
    F = first - N[:, :, None] * mu
    S = second - 2 * first * mu + N[:, :, None] * mu**2
    return SegmentStats(N, F, S)


def segment_ivectors(tv: TotalVariability, seg: SegmentStats, half_window: int) -> np.ndarray:
    w = seg.windowed(half_window)
    return extract_ivectors(tv, w.N, w.F)


def eigenvoice_loglik(tv: TotalVariability, g: DiagonalGmm, s: BaumWelchStats, w) -> float:
    """Responsibility-weighted Gaussian log-likelihood with means shifted by T_c w.

    Needs second-order stats; the mixture weights are left out because they
    do not depend on w.
    """
    tv.check_stats(s)
    if s.S is None:
        raise ParameterError("eigenvoice_loglik needs second-order statistics")
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (tv.R,):
        raise ParameterError(f"i-vector length {w.shape} != R={tv.R}")
    var = tv.sigma.reshape(s.n_components, s.dim)
    shift = tv.blocks(s.dim) @ w
    const = -0.5 * (s.dim * LOG_2PI + np.sum(np.log(var), axis=1))
    quad = np.sum((s.S - 2 * s.F * shift + s.N[:, None] * shift**2) / var, axis=1)
    return float(np.sum(s.N * const) - 0.5 * np.sum(quad))


def eigenvoice_logliks(tv: TotalVariability, g: DiagonalGmm, seg: SegmentStats, W) -> np.ndarray:
    """:func:`eigenvoice_loglik` for every segment (rows) and speaker i-vector (columns)."""
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    M, C, D = seg.F.shape
    var = tv.sigma.reshape(C, D)
    const = -0.5 * (D * LOG_2PI + np.sum(np.log(var), axis=1))
    base = seg.N @ const - 0.5 * np.sum(seg.S / var[None], axis=(1, 2))
    linear = seg.F.reshape(M, -1) @ (tv.sigma_inv_T @ W.T)
    U = tv.component_precisions(D)
    quad = np.einsum("sr,crt,st->cs", W, U, W)
    return base[:, None] + linear - 0.5 * seg.N @ quad
