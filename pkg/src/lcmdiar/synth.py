"""Seeded synthetic conversations drawn from a UBM / T / PLDA generative chain.

A speaker is a latent point ``mu + Phi y``; every turn (or training
session) adds a residual ``eps`` and emits frames from the UBM whose
component means are shifted by ``T_c w``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import FeatureMatrix, ReferenceLabels, Turn
from .errors import ParameterError
from .gmm import DiagonalGmm
from .scoring import PldaModel
from .tvspace import TotalVariability


@dataclass(frozen=True, eq=False)
class GenerativeChain:
    ubm: DiagonalGmm
    tv: TotalVariability
    plda: PldaModel
    frame_noise: float = 1.0

    def __post_init__(self):
        if self.ubm.n_components * self.ubm.dim != self.tv.supervector_dim:
            raise ParameterError("UBM size does not match the rows of T")
        if self.tv.R != self.plda.dim:
            raise ParameterError(f"T rank {self.tv.R} != PLDA dim {self.plda.dim}")
        if self.frame_noise <= 0:
            raise ParameterError("frame_noise must be > 0")

    def with_noise(self, frame_noise: float) -> "GenerativeChain":
        return GenerativeChain(self.ubm, self.tv, self.plda, frame_noise)

    def draw_speaker(self, rng) -> np.ndarray:
        return self.plda.mu + self.plda.phi @ rng.standard_normal(self.plda.phi.shape[1])

    def draw_session(self, speaker, rng) -> np.ndarray:
        chol = np.linalg.cholesky(self.plda.sigma_eps)
        return speaker + chol @ rng.standard_normal(self.plda.dim)

    def emit(self, w, n_frames: int, rng) -> np.ndarray:
        g = self.ubm
        comp = rng.choice(g.n_components, size=n_frames, p=g.weights)
        means = g.means + self.tv.blocks(g.dim) @ w
        noise = rng.standard_normal((n_frames, g.dim))
        return means[comp] + self.frame_noise * np.sqrt(g.variances[comp]) * noise


def random_chain(dim: int = 20, n_components: int = 32, rank: int = 50, speaker_rank: int = 10,
                 seed: int = 0, mean_spread: float = 3.0, tv_scale: float = 0.3,
                 speaker_scale: float = 1.0, session_scale: float = 0.3,
                 frame_noise: float = 1.0) -> GenerativeChain:
    """A random but well-conditioned generative chain.

    ``tv_scale * speaker_scale`` is roughly the per-dimension speaker offset
    of a component mean in units of that component's standard deviation.
    """
    if speaker_rank > rank:
        raise ParameterError("speaker_rank cannot exceed rank")
    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(np.full(n_components, 5.0))
    means = mean_spread * rng.standard_normal((n_components, dim))
    variances = rng.uniform(0.5, 1.5, size=(n_components, dim))
    ubm = DiagonalGmm(weights, means, variances)
    sigma = variances.ravel()
    T = np.sqrt(sigma)[:, None] * rng.standard_normal((n_components * dim, rank)) * tv_scale / np.sqrt(rank)
    tv = TotalVariability(T, sigma)
    phi = rng.standard_normal((rank, speaker_rank)) * speaker_scale / np.sqrt(speaker_rank)
    plda = PldaModel(np.zeros(rank), phi, session_scale**2 * np.eye(rank))
    return GenerativeChain(ubm, tv, plda, frame_noise)


@dataclass(frozen=True)
class ConversationSpec:
    """Turn-taking parameters for one synthetic recording.

    Turn lengths are ``min_turn`` plus an exponential draw whose mean is
    ``mean_turn`` (a single value or one per speaker). After each turn the
    floor passes to a uniformly chosen other speaker.
    """

    n_speakers: int = 2
    duration: float = 60.0
    mean_turn: float | tuple[float, ...] = 3.0
    min_turn: float = 0.0
    frame_shift: float = 0.01

    def __post_init__(self):
        if self.n_speakers < 1:
            raise ParameterError("n_speakers must be >= 1")
        if not self.duration > 0:
            raise ParameterError("duration must be > 0")
        if np.any(np.asarray(self.mean_turn) <= 0) or self.min_turn < 0:
            raise ParameterError("turn lengths must be positive")
        if np.ndim(self.mean_turn) and len(self.mean_turn) != self.n_speakers:
            raise ParameterError("need one mean_turn per speaker")

    def turn_mean(self, s: int) -> float:
        return float(self.mean_turn[s]) if np.ndim(self.mean_turn) else float(self.mean_turn)


def speaker_name(s: int) -> str:
    return f"S{s}"


def synthesize_conversation(spec: ConversationSpec, chain: GenerativeChain, seed: int = 0,
                            file_id: str = "rec"):
    """Return (FeatureMatrix, ReferenceLabels); labels tile [0, duration] on frame boundaries."""
    rng = np.random.default_rng(seed)
    shift = spec.frame_shift
    n_frames = int(round(spec.duration / shift))
    speakers = [chain.draw_speaker(rng) for _ in range(spec.n_speakers)]
    current = int(rng.integers(spec.n_speakers))
    frames = []
    turns = []
    pos = 0
    while pos < n_frames:
        length = spec.min_turn + rng.exponential(spec.turn_mean(current))
        n = min(max(1, int(round(length / shift))), n_frames - pos)
        w = chain.draw_session(speakers[current], rng)
        frames.append(chain.emit(w, n, rng))
        turns.append(Turn(round(pos * shift, 6), round((pos + n) * shift, 6), speaker_name(current)))
        pos += n
        if spec.n_speakers > 1:
            others = [s for s in range(spec.n_speakers) if s != current]
            current = others[int(rng.integers(len(others)))]
    data = np.concatenate(frames) if frames else np.zeros((0, chain.ubm.dim))
    merged = []
    for t in turns:
        if merged and merged[-1].speaker == t.speaker and merged[-1].end == t.start:
            merged[-1] = Turn(merged[-1].start, t.end, t.speaker)
        else:
            merged.append(t)
    return FeatureMatrix(data, shift), ReferenceLabels(tuple(merged), file_id)


def synthesize_sessions(chain: GenerativeChain, n_speakers: int, n_sessions: int,
                        session_duration: float, seed: int = 0, frame_shift: float = 0.01):
    """Single-speaker training recordings: list of (FeatureMatrix, speaker id)."""
    rng = np.random.default_rng(seed)
    n = max(1, int(round(session_duration / frame_shift)))
    out = []
    for s in range(n_speakers):
        spk = chain.draw_speaker(rng)
        for _ in range(n_sessions):
            w = chain.draw_session(spk, rng)
            out.append((FeatureMatrix(chain.emit(w, n, rng), frame_shift), f"train{s:03d}"))
    return out
