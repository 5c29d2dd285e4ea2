"""Flat ``key = value`` run configuration shared by every CLI command.

Blank lines and ``#`` comments are ignored. Every key has a default, so an
empty file is a valid configuration; unknown keys are rejected with the
offending line number.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .diarizer import DiarizationConfig
from .errors import ParameterError, ParseError


@dataclass(frozen=True)
class RunConfig:
    # model training
    n_components: int = 512
    rank: int = 300
    plda_rank: int = 150
    ubm_iters: int = 10
    tv_iters: int = 10
    plda_iters: int = 10
    seed: int = 0
    # diarization (0 speakers means "not given")
    n_speakers: int = 0
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
    # scoring
    collar: float = 0.25
    score_overlap: bool = True
    # paths
    archive: str = ""
    # synthetic data
    synth_dim: int = 20
    synth_components: int = 32
    synth_rank: int = 50
    synth_speaker_rank: int = 10
    synth_tv_scale: float = 0.3
    synth_frame_noise: float = 1.0
    synth_train_speakers: int = 20
    synth_sessions: int = 10
    synth_session_duration: float = 8.0
    synth_conversations: int = 1
    synth_speakers: int = 2
    duration: float = 60.0
    mean_turn: float = 3.0
    min_turn: float = 0.0
    frame_shift: float = 0.01

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_text(cls, text: str, path=None) -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"expected 'key = value', got {line!r}", path, lineno)
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in types:
                raise ParseError(f"unknown config key {key!r}", path, lineno)
            if key in values:
                raise ParseError(f"duplicate config key {key!r}", path, lineno)
            try:
                values[key] = _convert(types[key], raw)
            except ValueError as exc:
                raise ParseError(f"{key}: {exc}", path, lineno) from None
        return cls(**values)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text(), path)

    def dump(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in asdict(self).items())

    def with_overrides(self, **kw) -> "RunConfig":
        unknown = set(kw) - set(self.keys())
        if unknown:
            raise ParameterError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return replace(self, **kw)

    def diarization_config(self) -> DiarizationConfig:
        if self.n_speakers < 1:
            raise ParameterError("the number of speakers must be given (n_speakers / -S)")
        names = {f.name for f in fields(DiarizationConfig)}
        return DiarizationConfig(**{k: v for k, v in asdict(self).items() if k in names})


def _convert(kind: str, raw: str):
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return raw


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)
