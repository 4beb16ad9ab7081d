"""Automatic annotation: SVO extraction, caption aggregation, phrase labelling, tracks."""

from .annotate import (
    AggregationError,
    AssemblyError,
    ClipMeta,
    PhraseAssignment,
    PipelineConfig,
    PipelineResult,
    Reject,
    aggregate_captions,
    annotate_clip,
    assemble_tracks,
    classify_phrase,
    frame_triplets,
    group_frames,
    run_pipeline,
)
from .prompts import build_stage2_prompt, build_stage3_prompt
from .svo import SvoTriplet, extract_svo, heuristic_tag, serialize_triplets

__all__ = [
    "AggregationError", "AssemblyError", "ClipMeta", "PhraseAssignment", "PipelineConfig",
    "PipelineResult", "Reject", "aggregate_captions", "annotate_clip", "assemble_tracks",
    "classify_phrase", "frame_triplets", "group_frames", "run_pipeline", "build_stage2_prompt",
    "build_stage3_prompt", "SvoTriplet", "extract_svo", "heuristic_tag", "serialize_triplets",
]
