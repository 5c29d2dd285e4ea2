"""End-to-end helpers: train the model stack, diarize a recording."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .corpus import FeatureMatrix, ReferenceLabels, SpeechMarks, apply_speech_marks, make_grid
from .diarizer import DiarizationConfig, DiarizationResult, Models, lcm_iterate, vb_iterate
from .evaluate import labels_to_turns
from .gmm import DiagonalGmm, train_ubm
from .scoring import preprocess_ivectors, train_plda
from .tvspace import accumulate_stats, extract_ivector, train_tv

logger = logging.getLogger(__name__)


@dataclass
class TrainingTraces:
    ubm: list = field(default_factory=list)
    tv: list = field(default_factory=list)
    plda: list = field(default_factory=list)


def utterance_stats(ubm: DiagonalGmm, features):
    return [accumulate_stats(ubm, f) for f in features]


def train_models(features: list[FeatureMatrix], speakers: list, n_components: int, rank: int,
                 plda_rank: int, ubm_iters: int = 10, tv_iters: int = 10, plda_iters: int = 10,
                 seed: int = 0, traces: TrainingTraces | None = None) -> Models:
    """Train UBM, T, the i-vector preprocessor and PLDA on labelled recordings."""
    traces = traces if traces is not None else TrainingTraces()
    ubm = train_ubm(features, n_components, ubm_iters, seed, trace=traces.ubm)
    logger.info("UBM trained: %d components", n_components)
    stats = utterance_stats(ubm, features)
    tv = train_tv(stats, ubm, rank, tv_iters, seed, trace=traces.tv)
    logger.info("T trained: rank %d", rank)
    ivecs = np.stack([extract_ivector(tv, s) for s in stats])
    prep = preprocess_ivectors(ivecs)
    plda = train_plda(prep.apply(ivecs), speakers, plda_rank, plda_iters, trace=traces.plda)
    logger.info("PLDA trained: rank %d", plda_rank)
    return Models(ubm, tv, plda, prep)


def diarize(features: FeatureMatrix, marks: SpeechMarks | None, models: Models,
            cfg: DiarizationConfig, file_id: str = "rec") -> tuple[DiarizationResult, ReferenceLabels]:
    """Run the configured back-end on the speech frames of one recording."""
    speech = apply_speech_marks(features, marks) if marks is not None else features
    grid = make_grid(speech.frames, cfg.seg_len)
    run = vb_iterate if cfg.backend == "vb" else lcm_iterate
    result = run(speech, grid, models, cfg)
    hyp = labels_to_turns(result.labels, grid, speech.frame_shift, speech.frame_index, file_id)
    return result, hyp
