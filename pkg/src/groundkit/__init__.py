"""Tools for grounded video captions: data model, annotation pipeline and metrics."""

from .core import (
    BoundingBox,
    FrameAnnotation,
    GroundedVideoRecord,
    LossWeights,
    PhraseSpan,
    RawFrame,
    RawObject,
    RawPrediction,
    Track,
    TrackEntry,
    Violation,
    load_dataset,
    save_dataset,
    validate,
    validate_record,
)

__version__ = "0.1.0"

__all__ = [
    "BoundingBox", "FrameAnnotation", "GroundedVideoRecord", "LossWeights", "PhraseSpan",
    "RawFrame", "RawObject", "RawPrediction", "Track", "TrackEntry", "Violation",
    "load_dataset", "save_dataset", "validate", "validate_record",
]
