"""Latent class model speaker diarization on i-vectors.

The package covers the whole pipeline: feature and label ingestion
(:mod:`~lcmdiar.corpus`), UBM training (:mod:`~lcmdiar.gmm`), the total
variability space (:mod:`~lcmdiar.tvspace`), PLDA/SVM scoring
(:mod:`~lcmdiar.scoring`), temporal smoothing (:mod:`~lcmdiar.temporal`),
the iterative diarizer (:mod:`~lcmdiar.diarizer`) and DER scoring
(:mod:`~lcmdiar.evaluate`).
"""

from .corpus import (
    FeatureMatrix,
    ReferenceLabels,
    SegmentGrid,
    SpeechMarks,
    Turn,
    apply_speech_marks,
    load_features,
    make_grid,
    read_speech_marks,
    write_features,
)
from .diarizer import DiarizationConfig, DiarizationResult, Models, lcm_iterate, vb_iterate
from .errors import (
    DataError,
    DegeneracyError,
    FormatError,
    LcmdError,
    NumericError,
    ParameterError,
    ParseError,
    RangeError,
    TruncationError,
)
from .evaluate import DerBreakdown, compute_der, read_rttm, write_rttm, write_rttm_labels
from .gmm import DiagonalGmm, train_ubm
from .pipeline import diarize, train_models
from .scoring import PldaModel, Preprocessor, plda_llr, train_plda
from .synth import ConversationSpec, random_chain, synthesize_conversation, synthesize_sessions
from .tvspace import BaumWelchStats, TotalVariability, accumulate_stats, extract_ivector, train_tv

__version__ = "0.1.0"
