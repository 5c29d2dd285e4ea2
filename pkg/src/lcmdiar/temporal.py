"""Temporal refinements of the segment x speaker score matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


def poisson_weight(lam: float, offset: int) -> float:
    """Probability of no speaker change across ``|offset|`` segments, exp(-lam |offset|)."""
    if lam < 0:
        raise ParameterError("lambda must be >= 0")
    return float(np.exp(-lam * abs(offset)))


def score_window_linear(P, lam: float, half_window: int) -> np.ndarray:
    """Poisson-weighted sum of neighbor rows of a linear-domain matrix.

    Offsets beyond the sequence ends are dropped; nothing is renormalized.
    """
    if half_window < 0:
        raise ParameterError("half_window must be >= 0")
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    out = P.copy()
    M = P.shape[0]
    for d in range(1, min(half_window, M - 1) + 1):
        wgt = poisson_weight(lam, d)
        out[:-d] += wgt * P[d:]
        out[d:] += wgt * P[:-d]
    return out


def apply_score_window(scores, lam: float, half_window: int) -> np.ndarray:
    """Score-level window applied to log-domain scores.

    Each row is brought to the linear domain after subtracting its maximum,
    windowed with :func:`score_window_linear`, and returned as logs.
    """
    S = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    if half_window == 0:
        return S.copy()
    top = S.max(axis=1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    lin = np.exp(S - top)
    with np.errstate(divide="ignore"):
        return np.log(score_window_linear(lin, lam, half_window))


@dataclass(frozen=True, eq=False)
class HmmSmoother:
    """Fully connected speaker HMM with a shared self-loop probability."""

    n_states: int
    self_loop: float = 0.98
    initial: np.ndarray | None = None

    def __post_init__(self):
        if self.n_states < 1:
            raise ParameterError("need at least one state")
        if self.n_states > 1 and not 0 < self.self_loop < 1:
            raise ParameterError(f"self_loop must lie in (0, 1), got {self.self_loop}")
        if self.initial is None:
            pi = np.full(self.n_states, 1.0 / self.n_states)
        else:
            pi = np.asarray(self.initial, dtype=np.float64)
            if pi.shape != (self.n_states,) or np.any(pi < 0) or abs(pi.sum() - 1) > 1e-8:
                raise ParameterError("initial distribution must be a probability vector of length S")
            pi = pi / pi.sum()
        object.__setattr__(self, "initial", pi)

    @property
    def transitions(self) -> np.ndarray:
        S = self.n_states
        if S == 1:
            return np.ones((1, 1))
        A = np.full((S, S), (1.0 - self.self_loop) / (S - 1))
        np.fill_diagonal(A, self.self_loop)
        return A


def forward_backward(emissions, transitions, initial) -> np.ndarray:
    """State posteriors by the scaled alpha/beta recursions."""
    E = np.atleast_2d(np.asarray(emissions, dtype=np.float64))
    A = np.asarray(transitions, dtype=np.float64)
    M, S = E.shape
    alpha = np.empty((M, S))
    scale = np.empty(M)
    a = initial * E[0]
    scale[0] = a.sum()
    alpha[0] = a / scale[0]
    for m in range(1, M):
        a = (alpha[m - 1] @ A) * E[m]
        scale[m] = a.sum()
        alpha[m] = a / scale[m]
    beta = np.empty((M, S))
    beta[-1] = 1.0
    for m in range(M - 2, -1, -1):
        beta[m] = (A @ (E[m + 1] * beta[m + 1])) / scale[m + 1]
    post = alpha * beta
    return post / post.sum(axis=1, keepdims=True)


def hmm_smooth(emissions, smoother: HmmSmoother) -> np.ndarray:
    E = np.atleast_2d(np.asarray(emissions, dtype=np.float64))
    if E.shape[1] != smoother.n_states:
        raise ParameterError(
            f"emissions have {E.shape[1]} states, smoother has {smoother.n_states}"
        )
    if E.shape[0] < 1:
        raise ParameterError("need at least one emission row")
    if np.any(E < 0):
        raise ParameterError("emissions must be nonnegative")
    return forward_backward(E, smoother.transitions, smoother.initial)
