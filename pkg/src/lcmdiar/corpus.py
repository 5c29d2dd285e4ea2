"""Feature, speech-mark and segment-grid plumbing.

Features travel as FMX1 files: the magic ``b"FMX1"``, four little-endian
u32 words (version, frames, dim, frame shift in microseconds) and then a
row-major float32 payload.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import DataError, FormatError, ParameterError, ParseError, RangeError, TruncationError

FMX_MAGIC = b"FMX1"
FMX_VERSION = 1
_HEADER = struct.Struct("<4sIIII")

# Slack allowed when a speech mark touches the end of the audio.
_SPAN_EPS = 1e-6


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Frames x dim acoustic features.

    ``frame_index`` maps each row back to its frame number in the original
    recording; it is the identity unless the matrix came out of
    :func:`apply_speech_marks`.
    """

    data: np.ndarray
    frame_shift: float = 0.01
    frame_index: np.ndarray | None = field(default=None)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise ParameterError(f"feature data must be 2-D, got shape {data.shape}")
        if data.shape[1] < 1:
            raise ParameterError("feature dim must be >= 1")
        if not self.frame_shift > 0:
            raise ParameterError(f"frame_shift must be > 0, got {self.frame_shift}")
        if not np.all(np.isfinite(data)):
            raise DataError("feature matrix contains non-finite values")
        data = np.ascontiguousarray(data)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if self.frame_index is None:
            index = np.arange(data.shape[0], dtype=np.int64)
        else:
            index = np.asarray(self.frame_index, dtype=np.int64)
            if index.shape != (data.shape[0],):
                raise ParameterError("frame_index length must equal frame count")
        index.setflags(write=False)
        object.__setattr__(self, "frame_index", index)

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def frame_times(self) -> np.ndarray:
        """Center time (seconds) of every row in the original recording."""
        return (self.frame_index + 0.5) * self.frame_shift


def write_features(f: FeatureMatrix, path) -> None:
    shift_us = int(round(f.frame_shift * 1e6))
    header = _HEADER.pack(FMX_MAGIC, FMX_VERSION, f.frames, f.dim, shift_us)
    payload = f.data.astype("<f4", copy=False).tobytes(order="C")
    Path(path).write_bytes(header + payload)


def load_features(path) -> FeatureMatrix:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncationError(f"{path}: file shorter than the FMX1 header")
    magic, version, frames, dim, shift_us = _HEADER.unpack_from(raw)
    if magic != FMX_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FMX_VERSION:
        raise FormatError(f"{path}: unsupported FMX version {version}")
    if dim < 1 or shift_us == 0:
        raise FormatError(f"{path}: invalid header (dim={dim}, shift={shift_us}us)")
    expected = frames * dim * 4
    got = len(raw) - _HEADER.size
    if got != expected:
        raise TruncationError(f"{path}: header declares {expected} payload bytes, found {got}")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(frames, dim)
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: payload contains NaN or Inf")
    return FeatureMatrix(data.astype(np.float32), frame_shift=shift_us / 1e6)


@dataclass(frozen=True)
class SpeechMarks:
    """Sorted, non-overlapping speech intervals in seconds."""

    intervals: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        ivs = tuple((float(s), float(e)) for s, e in self.intervals)
        for s, e in ivs:
            if not s < e:
                raise ParameterError(f"speech mark ({s}, {e}) has start >= end")
        for (_, e0), (s1, _) in zip(ivs, ivs[1:]):
            if s1 < e0:
                raise ParameterError("speech marks must be sorted and non-overlapping")
        object.__setattr__(self, "intervals", ivs)

    def __len__(self):
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    @property
    def total(self) -> float:
        return sum(e - s for s, e in self.intervals)


def read_speech_marks(path) -> SpeechMarks:
    intervals = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError("expected 'start end'", path, lineno)
        try:
            intervals.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise ParseError(f"non-numeric speech mark {line!r}", path, lineno) from None
    try:
        return SpeechMarks(tuple(intervals))
    except ParameterError as exc:
        raise ParseError(str(exc), path) from None


def write_speech_marks(marks: SpeechMarks, path) -> None:
    lines = [f"{s:.3f} {e:.3f}\n" for s, e in marks]
    Path(path).write_text("".join(lines))


def apply_speech_marks(f: FeatureMatrix, marks: SpeechMarks) -> FeatureMatrix:
    """Keep the frames whose center time falls inside a speech mark.

    A frame belongs to the mark ``(start, end)`` when
    ``start <= center < end``.
    """
    span = f.frames * f.frame_shift
    for s, e in marks:
        if s < -_SPAN_EPS or e > span + _SPAN_EPS:
            raise RangeError(f"speech mark ({s}, {e}) outside audio span [0, {span}]")
    centers = f.frame_times
    keep = np.zeros(f.frames, dtype=bool)
    for s, e in marks:
        lo, hi = np.searchsorted(centers, [s, e], side="left")
        keep[lo:hi] = True
    return FeatureMatrix(f.data[keep], f.frame_shift, f.frame_index[keep])


@dataclass(frozen=True, eq=False)
class SegmentGrid:
    """Uniform split of ``n_frames`` speech frames into segments of ``seg_len``."""

    n_frames: int
    seg_len: int

    def __post_init__(self):
        if self.seg_len < 1:
            raise ParameterError(f"seg_len must be >= 1, got {self.seg_len}")
        if self.n_frames < 0:
            raise ParameterError("n_frames must be >= 0")

    @property
    def M(self) -> int:
        return math.ceil(self.n_frames / self.seg_len)

    @property
    def bounds(self) -> np.ndarray:
        """Length M+1 array; segment m spans frames ``bounds[m]:bounds[m+1]``."""
        b = np.arange(self.M + 1, dtype=np.int64) * self.seg_len
        b[-1] = self.n_frames
        return b

    @property
    def frame_to_segment(self) -> np.ndarray:
        return np.arange(self.n_frames, dtype=np.int64) // self.seg_len

    def lengths(self) -> np.ndarray:
        return np.diff(self.bounds)

    def segment_slice(self, m: int) -> slice:
        if not 0 <= m < self.M:
            raise ParameterError(f"segment index {m} out of range [0, {self.M})")
        return slice(m * self.seg_len, min((m + 1) * self.seg_len, self.n_frames))


def make_grid(speech_frames: int, seg_len: int) -> SegmentGrid:
    return SegmentGrid(int(speech_frames), int(seg_len))


class Turn(NamedTuple):
    start: float
    end: float
    speaker: str


@dataclass(frozen=True)
class ReferenceLabels:
    """Speaker turns; overlap between turns is allowed.

    ``file_id`` is only used when writing RTTM.
    """

    turns: tuple[Turn, ...] = ()
    file_id: str = "rec"

    def __post_init__(self):
        turns = tuple(Turn(float(s), float(e), str(spk)) for s, e, spk in self.turns)
        for t in turns:
            if not t.start < t.end:
                raise ParameterError(f"turn {t} has start >= end")
        object.__setattr__(self, "turns", turns)

    def __len__(self):
        return len(self.turns)

    def __iter__(self):
        return iter(self.turns)

    @property
    def speakers(self) -> list[str]:
        return sorted({t.speaker for t in self.turns})

    def rename(self, mapping: dict[str, str]) -> "ReferenceLabels":
        return ReferenceLabels(
            tuple(Turn(t.start, t.end, mapping.get(t.speaker, t.speaker)) for t in self.turns),
            self.file_id,
        )
