"""Evaluation report assembling the caption and grounding metrics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

from ..core import GroundedVideoRecord
from .caption import CIDER_SIGMA, cider_d_scores, meteor_lite
from .grounding import align, ap50_per_video, f1_entities, msiou_per_video, recall_per_video
from .similarity import BUILTIN_JACCARD, Similarity, default_phrase_similarity

ALL_METRICS = ("cider", "meteor", "ap50", "recall", "f1", "msiou")
DEFAULT_METRICS = ("cider", "meteor", "ap50", "recall", "f1")

NOTES = (
    "meteor_lite: exact and stem matching only, no synonym stage",
    "cider_d: sigma 6, clipped counts, document frequency over the references, scaled by 10",
    "ap50: boxes ranked by score (1.0 if absent), ties by track id then frame; "
    "greedy one-to-one matching per frame; phrase-agnostic unless phrase_aware",
    "ap50/recall: videos without ground-truth boxes are excluded from the mean",
)


@dataclass
class EvalReport:
    scores: dict[str, float] = field(default_factory=dict)
    per_video: dict[str, dict[str, float]] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"scores": self.scores, "per_video": self.per_video, "config": self.config}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True, allow_nan=False)


def parse_metrics(spec: str) -> tuple[str, ...]:
    names = tuple(dict.fromkeys(m.strip() for m in spec.split(",") if m.strip()))
    unknown = [m for m in names if m not in ALL_METRICS]
    if unknown or not names:
        raise ValueError(f"unknown metric(s) {unknown}; choose from {','.join(ALL_METRICS)}")
    return names


def evaluate(preds: Sequence[GroundedVideoRecord], gts: Sequence[GroundedVideoRecord],
             metrics: Sequence[str] = DEFAULT_METRICS, iou_thresh: float = 0.5,
             sim_thresh: float = 0.5, similarity: Similarity = default_phrase_similarity,
             similarity_name: str = BUILTIN_JACCARD, phrase_aware_ap: bool = False) -> EvalReport:
    pairs = align(preds, gts)
    clip_ids = [g.clip_id for _, g in pairs]
    report = EvalReport(config={
        "metrics": list(metrics),
        "iou_thresh": iou_thresh,
        "sim_thresh": sim_thresh,
        "similarity": similarity_name,
        "phrase_aware_ap": phrase_aware_ap,
        "cider_sigma": CIDER_SIGMA,
        "num_videos": len(pairs),
        "notes": list(NOTES),
    })
    if "cider" in metrics:
        scores = cider_d_scores([p.caption for p, _ in pairs], [[g.caption] for _, g in pairs])
        report.per_video["cider"] = dict(zip(clip_ids, scores))
        report.scores["cider"] = math.fsum(scores) / len(scores)
    if "meteor" in metrics:
        scores = [meteor_lite(p.caption, g.caption) for p, g in pairs]
        report.per_video["meteor_lite"] = dict(zip(clip_ids, scores))
        report.scores["meteor_lite"] = math.fsum(scores) / len(scores) if scores else 0.0
    if "ap50" in metrics:
        table = ap50_per_video(preds, gts, iou_thresh, phrase_aware=phrase_aware_ap)
        report.per_video["ap50"] = table
        report.scores["ap50"] = _mean(table)
        report.config["ap50_excluded_videos"] = len(pairs) - len(table)
    if "recall" in metrics:
        table = recall_per_video(preds, gts, iou_thresh, sim_thresh, similarity)
        report.per_video["recall"] = table
        report.scores["recall"] = _mean(table)
    if "f1" in metrics:
        f1 = f1_entities(preds, gts, iou_thresh)
        report.scores.update({
            "f1_all": f1.f1_all, "f1_all_per_sent": f1.f1_all_per_sent,
            "f1_loc": f1.f1_loc, "f1_loc_per_sent": f1.f1_loc_per_sent,
        })
    if "msiou" in metrics:
        table = msiou_per_video(preds, gts)
        report.per_video["msiou"] = table
        report.scores["msiou"] = _mean(table)
    return report


def _mean(table: dict[str, float]) -> float:
    return math.fsum(table.values()) / len(table) if table else 0.0
