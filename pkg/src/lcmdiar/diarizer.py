"""Latent class model diarization loop, its VB baseline, and AHC priors.

Each iteration re-estimates speaker i-vectors from the soft assignment Q,
scores every segment against every speaker, refines the scores with the
temporal window and HMM, and folds the result back into Q multiplicatively.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import FeatureMatrix, SegmentGrid
from .errors import DataError, DegeneracyError, ParameterError
from .gmm import DiagonalGmm
from .scoring import (
    PldaModel,
    Preprocessor,
    plda_llr_matrix,
    score_posteriors,
    svm_score_matrix,
    train_speaker_svms,
)
from .temporal import HmmSmoother, apply_score_window, hmm_smooth
from .tvspace import (
    SegmentStats,
    TotalVariability,
    eigenvoice_logliks,
    extract_ivector,
    extract_ivectors,
    segment_stats,
)

logger = logging.getLogger(__name__)

EPS_FLOOR = 1e-6
BACKENDS = ("plda", "svm", "hybrid", "vb")
INITS = ("random", "ahc-hard", "ahc-soft")


@dataclass(frozen=True)
class DiarizationConfig:
    n_speakers: int
    seg_len: int = 10
    data_half_window: int = 40
    score_half_window: int = 40
    lam: float = 0.05
    kappa_plda: float = 1.0
    kappa_svm: float = 10.0
    kappa_vb: float = 1.0
    self_loop: float = 0.98
    max_iters: int = 20
    tol: float = 1e-3
    backend: str = "plda"
    init: str = "random"
    hard_prior_q: float = 0.7
    soft_prior_k: float = 10.0
    svm_c: float = 1.0
    seed: int = 0

    def __post_init__(self):
        S = self.n_speakers
        if S < 1:
            raise ParameterError("n_speakers must be >= 1")
        if self.max_iters < 1 or not self.tol > 0:
            raise ParameterError("need max_iters >= 1 and tol > 0")
        if self.backend not in BACKENDS:
            raise ParameterError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.init not in INITS:
            raise ParameterError(f"init must be one of {INITS}, got {self.init!r}")
        if S > 1 and not 1.0 / S <= self.hard_prior_q <= 1.0:
            raise ParameterError(f"hard_prior_q must lie in [1/S, 1], got {self.hard_prior_q}")
        if not self.soft_prior_k > 0:
            raise ParameterError("soft_prior_k must be > 0")
        if self.seg_len < 1 or self.data_half_window < 0 or self.score_half_window < 0:
            raise ParameterError("seg_len >= 1 and nonnegative half windows required")

    def with_(self, **kw) -> "DiarizationConfig":
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class Models:
    ubm: DiagonalGmm
    tv: TotalVariability
    plda: PldaModel | None = None
    prep: Preprocessor | None = None


@dataclass
class IterationRecord:
    iteration: int
    backend: str
    objective: float
    max_dq: float


@dataclass
class DiarizationResult:
    labels: np.ndarray
    Q: np.ndarray
    iterations: int
    trace: list[float]
    records: list[IterationRecord] = field(default_factory=list)

    def diagnostics(self) -> list[str]:
        """One ``iteration backend objective max_dq`` line per iteration."""
        return [
            f"{r.iteration} {r.backend} {r.objective:.6f} {r.max_dq:.6g}" for r in self.records
        ]

    def diagnostics_csv(self) -> str:
        rows = ["iteration,backend,objective,max_dq"]
        rows += [f"{r.iteration},{r.backend},{r.objective!r},{r.max_dq!r}" for r in self.records]
        return "\n".join(rows) + "\n"


def floor_rows(Q, eps: float = EPS_FLOOR) -> np.ndarray:
    """Raise entries below eps to exactly eps, rescaling the rest so rows sum to 1."""
    Q = np.array(Q, dtype=np.float64)
    S = Q.shape[1]
    if S == 1:
        return np.ones_like(Q)
    Q /= Q.sum(axis=1, keepdims=True)
    low = Q < eps
    for _ in range(S):
        if not low.any():
            break
        free = np.where(low, 0.0, Q)
        free_mass = free.sum(axis=1, keepdims=True)
        target = 1.0 - eps * low.sum(axis=1, keepdims=True)
        Q = np.where(low, eps, free * (target / np.where(free_mass > 0, free_mass, 1.0)))
        new_low = low | (Q < eps)
        if np.array_equal(new_low, low):
            break
        low = new_low
    return Q


def random_prior(M: int, S: int, seed: int = 0) -> np.ndarray:
    if M < 1 or S < 1:
        raise ParameterError("random_prior needs M, S >= 1")
    rng = np.random.default_rng(seed)
    return floor_rows(rng.dirichlet(np.ones(S), size=M))


def ahc_cluster(seg_ivectors, plda: PldaModel, S: int, linkage: str = "average") -> np.ndarray:
    """Agglomerative clustering on PLDA LLR similarity down to exactly S clusters.

    Ties go to the lowest (i, j) index pair. Cluster labels are numbered in
    order of each cluster's first segment.
    """
    W = np.atleast_2d(seg_ivectors)
    M = W.shape[0]
    if M < S:
        raise DataError(f"cannot form {S} clusters from {M} segments")
    if linkage not in ("average", "single", "complete"):
        raise ParameterError(f"unknown linkage {linkage!r}")
    sim = plda_llr_matrix(plda, W, W)
    sim = 0.5 * (sim + sim.T)
    np.fill_diagonal(sim, -np.inf)
    sizes = np.ones(M)
    parent = np.arange(M)
    for _ in range(M - S):
        # row-major argmax of a symmetric matrix is the lowest (i, j), i < j
        i, j = divmod(int(np.argmax(sim)), M)
        if linkage == "average":
            merged = (sizes[i] * sim[i] + sizes[j] * sim[j]) / (sizes[i] + sizes[j])
        elif linkage == "single":
            merged = np.maximum(sim[i], sim[j])
        else:
            merged = np.minimum(sim[i], sim[j])
        merged[i] = -np.inf
        sim[i, :] = merged
        sim[:, i] = merged
        sim[j, :] = -np.inf
        sim[:, j] = -np.inf
        sizes[i] += sizes[j]
        parent[parent == j] = i
    roots = list(dict.fromkeys(parent.tolist()))
    relabel = {r: k for k, r in enumerate(roots)}
    return np.array([relabel[p] for p in parent], dtype=np.int64)


def hard_prior(labels, S: int, q: float) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if S == 1:
        return np.ones((labels.shape[0], 1))
    if not 1.0 / S - 1e-12 <= q <= 1.0:
        raise ParameterError(f"hard prior q must lie in [1/S, 1], got {q}")
    if labels.size and (labels.min() < 0 or labels.max() >= S):
        raise ParameterError("cluster labels must lie in [0, S)")
    Q = np.full((labels.shape[0], S), (1.0 - q) / (S - 1))
    Q[np.arange(labels.shape[0]), labels] = q
    return Q


def soft_prior(labels, seg_ivectors, k: float, S: int | None = None) -> np.ndarray:
    """Centroid-distance prior: own cluster gets a value in [0.5, 1], the rest share the remainder."""
    labels = np.asarray(labels, dtype=np.int64)
    W = np.atleast_2d(np.asarray(seg_ivectors, dtype=np.float64))
    if k <= 0:
        raise ParameterError("k must be > 0")
    S = int(labels.max()) + 1 if S is None else S
    if S == 1:
        return np.ones((labels.shape[0], 1))
    own = np.empty(labels.shape[0])
    e1 = np.exp(-1.0)
    for s in range(S):
        members = np.flatnonzero(labels == s)
        if members.size == 0:
            raise DegeneracyError(f"cluster {s} is empty")
        d = np.linalg.norm(W[members] - W[members].mean(0), axis=1)
        dmax = d.max()
        if dmax == 0:
            own[members] = 1.0
            continue
        own[members] = 0.5 * ((np.exp(-((d / dmax) ** k)) - e1) / (1 - e1) + 1)
    Q = np.repeat(((1 - own) / (S - 1))[:, None], S, axis=1)
    Q[np.arange(labels.shape[0]), labels] = own
    return Q


def update_q(Q, P) -> np.ndarray:
    """Multiplicative update q_ms <- q_ms p_ms / sum_s' q_ms' p_ms', then floored."""
    Q = np.asarray(Q, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    if Q.shape != P.shape:
        raise ParameterError(f"Q {Q.shape} and P {P.shape} differ in shape")
    if np.any(P < 0):
        raise ParameterError("P must be nonnegative")
    U = Q * P
    tot = U.sum(axis=1, keepdims=True)
    dead = tot[:, 0] <= 0
    if np.any(dead):
        logger.warning("%d rows of Q*P are zero; falling back to uniform", int(dead.sum()))
        U[dead] = 1.0
        tot[dead] = Q.shape[1]
    return floor_rows(U / tot)


def objective(Q, P) -> float:
    """sum_m log sum_s q_ms p_ms."""
    Q = np.asarray(Q, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    if Q.shape != P.shape:
        raise ParameterError(f"Q {Q.shape} and P {P.shape} differ in shape")
    top = P.max(axis=1, keepdims=True)
    top = np.where(top > 0, top, 1.0)
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(np.sum(Q * (P / top), axis=1)) + np.log(top[:, 0])))


def _check_inputs(f: FeatureMatrix, grid: SegmentGrid, models: Models):
    if grid.n_frames != f.frames:
        raise ParameterError(f"grid covers {grid.n_frames} frames, features have {f.frames}")
    if models.ubm.dim != f.dim:
        raise ParameterError("feature dim does not match the UBM")
    if grid.M < 1:
        raise DataError("no speech segments to diarize")


def _segment_ivectors(models: Models, seg: SegmentStats, cfg: DiarizationConfig) -> np.ndarray:
    win = seg.windowed(cfg.data_half_window)
    return extract_ivectors(models.tv, win.N, win.F)


def _ahc_prior(cfg: DiarizationConfig, models: Models, seg_iv_prep) -> np.ndarray:
    if models.plda is None:
        raise ParameterError("AHC initialization needs a PLDA model")
    labels = ahc_cluster(seg_iv_prep, models.plda, cfg.n_speakers)
    if cfg.init == "ahc-hard":
        Q = hard_prior(labels, cfg.n_speakers, cfg.hard_prior_q)
    else:
        Q = soft_prior(labels, seg_iv_prep, cfg.soft_prior_k, cfg.n_speakers)
    return floor_rows(Q)


def _reseed_degenerate(Q, min_mass: float) -> np.ndarray:
    mass = Q.sum(axis=0)
    dead = np.flatnonzero(mass < min_mass)
    if dead.size == 0:
        return Q
    Q = Q.copy()
    M, S = Q.shape
    n_seed = max(1, M // (4 * S))
    for s in dead:
        ambiguous = np.argsort(Q.max(axis=1), kind="stable")[:n_seed]
        logger.warning("speaker %d collapsed (mass %.3g); re-seeding from %d ambiguous segments",
                       s, mass[s], n_seed)
        Q[ambiguous] *= 0.5
        Q[ambiguous, s] += 0.5
    return floor_rows(Q)


def _speaker_ivectors(tv: TotalVariability, seg: SegmentStats, Q) -> np.ndarray:
    return np.stack([extract_ivector(tv, seg.weighted(Q[:, s])) for s in range(Q.shape[1])])


def _single_speaker(M: int) -> DiarizationResult:
    Q = np.ones((M, 1))
    return DiarizationResult(np.zeros(M, dtype=np.int64), Q, 1, [0.0],
                             [IterationRecord(0, "none", 0.0, 0.0)])


def _run_loop(cfg, Q, score_fn, kappa_fn, backend_fn, score_window: bool) -> DiarizationResult:
    M, S = Q.shape
    trace, records = [], []
    min_mass = max(0.5, 1e-3 * M)
    it = 0
    for it in range(cfg.max_iters):
        Q = _reseed_degenerate(Q, min_mass)
        backend = backend_fn(it)
        scores = score_fn(Q, backend)
        if score_window and cfg.score_half_window > 0:
            scores = apply_score_window(scores, cfg.lam, cfg.score_half_window)
        post = score_posteriors(scores, kappa_fn(backend))
        pi = np.full(S, 1.0 / S) if it == 0 else Q.mean(axis=0)
        P = hmm_smooth(post, HmmSmoother(S, cfg.self_loop, pi / pi.sum()))
        Qn = update_q(Q, P)
        obj = objective(Qn, P)
        dq = float(np.max(np.abs(Qn - Q).sum(axis=1)))
        Q = Qn
        trace.append(obj)
        records.append(IterationRecord(it, backend, obj, dq))
        logger.debug("iter %d backend %s objective %.6f max_dq %.3g", it, backend, obj, dq)
        if dq < cfg.tol:
            break
    return DiarizationResult(np.argmax(Q, axis=1), Q, it + 1, trace, records)


def lcm_iterate(features: FeatureMatrix, grid: SegmentGrid, models: Models,
                cfg: DiarizationConfig) -> DiarizationResult:
    """Diarize one recording with the PLDA, SVM or hybrid back-end."""
    _check_inputs(features, grid, models)
    if cfg.backend == "vb":
        return vb_iterate(features, grid, models, cfg)
    if models.prep is None:
        raise ParameterError("LCM back-ends need the i-vector preprocessor")
    if cfg.backend in ("plda", "hybrid") and models.plda is None:
        raise ParameterError(f"backend {cfg.backend!r} needs a PLDA model")
    S = cfg.n_speakers
    if S == 1:
        return _single_speaker(grid.M)
    seg = segment_stats(models.ubm, features, grid)
    seg_iv = models.prep.apply(_segment_ivectors(models, seg, cfg))
    if cfg.init == "random":
        Q = random_prior(grid.M, S, cfg.seed)
    else:
        Q = _ahc_prior(cfg, models, seg_iv)

    def backend_fn(it):
        if cfg.backend == "hybrid":
            return "plda" if it % 2 == 0 else "svm"
        return cfg.backend

    def score_fn(Q, backend):
        spk = models.prep.apply(_speaker_ivectors(models.tv, seg, Q))
        if backend == "plda":
            return plda_llr_matrix(models.plda, seg_iv, spk)
        return svm_score_matrix(train_speaker_svms(spk, cfg.svm_c), seg_iv)

    def kappa_fn(backend):
        return cfg.kappa_plda if backend == "plda" else cfg.kappa_svm

    return _run_loop(cfg, Q, score_fn, kappa_fn, backend_fn, score_window=True)


def vb_iterate(features: FeatureMatrix, grid: SegmentGrid, models: Models,
               cfg: DiarizationConfig) -> DiarizationResult:
    """Baseline loop scoring raw segment statistics with the eigenvoice log-likelihood.

    Neighbor windows are not used here; temporal context comes only from the
    HMM. AHC initialization still relies on PLDA-scored segment i-vectors.
    """
    _check_inputs(features, grid, models)
    S = cfg.n_speakers
    if S == 1:
        return _single_speaker(grid.M)
    seg = segment_stats(models.ubm, features, grid)
    if cfg.init == "random":
        Q = random_prior(grid.M, S, cfg.seed)
    else:
        if models.prep is None:
            raise ParameterError("AHC initialization needs the i-vector preprocessor")
        Q = _ahc_prior(cfg, models, models.prep.apply(_segment_ivectors(models, seg, cfg)))

    def score_fn(Q, backend):
        spk = _speaker_ivectors(models.tv, seg, Q)
        return eigenvoice_logliks(models.tv, models.ubm, seg, spk)

    return _run_loop(cfg, Q, score_fn, lambda b: cfg.kappa_vb, lambda it: "vb", score_window=False)
