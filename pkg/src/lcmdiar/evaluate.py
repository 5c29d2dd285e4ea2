"""RTTM I/O and diarization error rate scoring.

Scoring follows the usual NIST convention: every reference speaker is
mapped to at most one hypothesis speaker so that the total overlapped time
is maximal, and errors are accumulated per elementary time region.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .corpus import ReferenceLabels, SegmentGrid, Turn
from .errors import DataError, ParameterError, ParseError


@dataclass(frozen=True)
class DerBreakdown:
    miss: float
    fa: float
    se: float
    der: float
    scored_time: float

    def format(self) -> str:
        return (
            f"{'scored(s)':>10} {'miss%':>7} {'fa%':>7} {'se%':>7} {'der%':>7}\n"
            f"{self.scored_time:10.2f} {100 * self.miss:7.2f} {100 * self.fa:7.2f} "
            f"{100 * self.se:7.2f} {100 * self.der:7.2f}"
        )

    def csv(self) -> str:
        return ("scored_time,miss,fa,se,der\n"
                f"{self.scored_time!r},{self.miss!r},{self.fa!r},{self.se!r},{self.der!r}\n")


def read_rttm(path) -> ReferenceLabels:
    turns = []
    file_id = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith(("#", ";")):
            continue
        parts = stripped.split()
        if parts[0] != "SPEAKER":
            continue
        if len(parts) < 8:
            raise ParseError(f"SPEAKER line has {len(parts)} fields, need at least 8", path, lineno)
        try:
            onset, dur = float(parts[3]), float(parts[4])
        except ValueError:
            raise ParseError("onset/duration are not numbers", path, lineno) from None
        if dur <= 0 or onset < 0:
            raise ParseError(f"invalid onset {onset} or duration {dur}", path, lineno)
        file_id = file_id or parts[1]
        turns.append(Turn(onset, onset + dur, parts[7]))
    turns.sort()
    return ReferenceLabels(tuple(turns), file_id or Path(path).stem)


def write_rttm_labels(labels: ReferenceLabels, path) -> None:
    lines = [
        f"SPEAKER {labels.file_id} 1 {t.start:.3f} {t.end - t.start:.3f} <NA> <NA> {t.speaker} <NA> <NA>\n"
        for t in sorted(labels.turns)
    ]
    Path(path).write_text("".join(lines))


def labels_to_turns(segment_labels, grid: SegmentGrid, frame_shift: float, frame_index=None,
                    file_id: str = "rec", speaker_prefix: str = "spk") -> ReferenceLabels:
    """Turn per-segment speaker indices into merged time intervals.

    ``frame_index`` gives each speech frame's position in the original
    recording, so gaps left by removed non-speech frames split intervals.
    """
    segment_labels = np.asarray(segment_labels, dtype=np.int64)
    if segment_labels.shape != (grid.M,):
        raise ParameterError(f"{segment_labels.shape[0]} labels for {grid.M} segments")
    if frame_index is None:
        frame_index = np.arange(grid.n_frames)
    frame_index = np.asarray(frame_index, dtype=np.int64)
    per_frame = segment_labels[grid.frame_to_segment]
    turns = []
    if grid.n_frames:
        breaks = np.flatnonzero((np.diff(per_frame) != 0) | (np.diff(frame_index) != 1)) + 1
        starts = np.concatenate([[0], breaks])
        ends = np.concatenate([breaks, [grid.n_frames]])
        for a, b in zip(starts, ends):
            t0 = frame_index[a] * frame_shift
            t1 = (frame_index[b - 1] + 1) * frame_shift
            turns.append(Turn(round(t0, 6), round(t1, 6), f"{speaker_prefix}{per_frame[a]}"))
    return ReferenceLabels(tuple(turns), file_id)


def write_rttm(segment_labels, grid: SegmentGrid, frame_shift: float, path, frame_index=None,
               file_id: str = "rec") -> ReferenceLabels:
    labels = labels_to_turns(segment_labels, grid, frame_shift, frame_index, file_id)
    write_rttm_labels(labels, path)
    return labels


def _regions(ref: ReferenceLabels, hyp: ReferenceLabels, collar: float):
    """Elementary regions with their ref/hyp speaker sets and a scored flag."""
    points = {t.start for t in ref} | {t.end for t in ref} | {t.start for t in hyp} | {t.end for t in hyp}
    excluded = []
    if collar > 0:
        for t in ref:
            for b in (t.start, t.end):
                lo, hi = max(0.0, b - collar), b + collar
                excluded.append((lo, hi))
                points.update((lo, hi))
    points = np.array(sorted(points))
    n = max(len(points) - 1, 0)
    ref_sets = [set() for _ in range(n)]
    hyp_sets = [set() for _ in range(n)]
    scored = np.ones(n, dtype=bool)

    def span(a, b):
        return range(int(np.searchsorted(points, a)), int(np.searchsorted(points, b)))

    for t in ref:
        for k in span(t.start, t.end):
            ref_sets[k].add(t.speaker)
    for t in hyp:
        for k in span(t.start, t.end):
            hyp_sets[k].add(t.speaker)
    for lo, hi in excluded:
        for k in span(lo, hi):
            scored[k] = False
    durs = np.diff(points) if n else np.zeros(0)
    return [(float(durs[k]), frozenset(ref_sets[k]), frozenset(hyp_sets[k]), bool(scored[k]))
            for k in range(n) if durs[k] > 0]


def _overlap_matrix(regions, ref_spk, hyp_spk):
    ri = {s: k for k, s in enumerate(ref_spk)}
    hi = {s: k for k, s in enumerate(hyp_spk)}
    ov = np.zeros((len(ref_spk), len(hyp_spk)))
    for dur, rs, hs, _ in regions:
        for r in rs:
            for h in hs:
                ov[ri[r], hi[h]] += dur
    return ov


def optimal_assignment(overlap) -> list[tuple[int, int]]:
    """Index pairs of a maximum-total-weight one-to-one matching (zero-weight pairs dropped)."""
    overlap = np.asarray(overlap, dtype=np.float64)
    if overlap.size == 0:
        return []
    rows, cols = linear_sum_assignment(overlap, maximize=True)
    return [(int(r), int(c)) for r, c in zip(rows, cols) if overlap[r, c] > 0]


def brute_force_assignment(overlap) -> float:
    """Best total overlap by exhaustive search over matchings (test oracle)."""
    overlap = np.asarray(overlap, dtype=np.float64)
    n_r, n_h = overlap.shape
    best = 0.0
    if n_r <= n_h:
        for perm in itertools.permutations(range(n_h), n_r):
            best = max(best, sum(overlap[i, perm[i]] for i in range(n_r)))
    else:
        for perm in itertools.permutations(range(n_r), n_h):
            best = max(best, sum(overlap[perm[j], j] for j in range(n_h)))
    return best


def map_speakers(ref: ReferenceLabels, hyp: ReferenceLabels, collar: float = 0.0,
                 score_overlap: bool = True) -> dict[str, str]:
    """Reference speaker -> hypothesis speaker maximizing the overlapped time."""
    regions = [r for r in _regions(ref, hyp, collar) if r[3] and (score_overlap or len(r[1]) <= 1)]
    ref_spk, hyp_spk = ref.speakers, hyp.speakers
    ov = _overlap_matrix(regions, ref_spk, hyp_spk)
    return {ref_spk[r]: hyp_spk[h] for r, h in optimal_assignment(ov)}


def compute_der(ref: ReferenceLabels, hyp: ReferenceLabels, collar: float = 0.25,
                score_overlap: bool = True) -> DerBreakdown:
    if collar < 0:
        raise ParameterError("collar must be >= 0")
    regions = [r for r in _regions(ref, hyp, collar) if r[3] and (score_overlap or len(r[1]) <= 1)]
    ref_spk, hyp_spk = ref.speakers, hyp.speakers
    ov = _overlap_matrix(regions, ref_spk, hyp_spk)
    mapping = {ref_spk[r]: hyp_spk[h] for r, h in optimal_assignment(ov)}
    scored = miss = fa = se = 0.0
    for dur, rs, hs, _ in regions:
        n_ref, n_hyp = len(rs), len(hs)
        correct = sum(1 for r in rs if mapping.get(r) in hs)
        scored += dur * n_ref
        miss += dur * max(0, n_ref - n_hyp)
        fa += dur * max(0, n_hyp - n_ref)
        se += dur * (min(n_ref, n_hyp) - correct)
    if scored <= 0:
        raise DataError("no scored reference speech; DER is undefined")
    miss, fa, se = miss / scored, fa / scored, se / scored
    return DerBreakdown(miss, fa, se, miss + fa + se, scored)
