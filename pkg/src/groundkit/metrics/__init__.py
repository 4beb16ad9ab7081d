"""Caption quality and box grounding metrics."""

from .caption import cider_d, cider_d_scores, meteor_lite, meteor_lite_multi
from .grounding import (
    F1Scores,
    SweepRow,
    align,
    ap50_per_video,
    ap50_video,
    average_precision,
    f1_entities,
    grounding_recall,
    msiou,
    msiou_per_video,
    recall_per_video,
    threshold_sweep,
)
from .report import ALL_METRICS, DEFAULT_METRICS, EvalReport, evaluate, parse_metrics
from .similarity import BUILTIN_JACCARD, HttpSimilarity, default_phrase_similarity, resolve_similarity

__all__ = [
    "cider_d", "cider_d_scores", "meteor_lite", "meteor_lite_multi", "F1Scores", "SweepRow",
    "align", "ap50_per_video", "ap50_video", "average_precision", "f1_entities",
    "grounding_recall", "msiou", "msiou_per_video", "recall_per_video", "threshold_sweep",
    "ALL_METRICS", "DEFAULT_METRICS", "EvalReport", "evaluate", "parse_metrics",
    "BUILTIN_JACCARD", "HttpSimilarity", "default_phrase_similarity", "resolve_similarity",
]
