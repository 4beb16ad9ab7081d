"""Box overlap measures, tube IoU and the reference training losses."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .core import BoundingBox, GroundedVideoRecord, LossWeights, RawPrediction, Track

BCE_EPS = 1e-7


def _intersection(a: BoundingBox, b: BoundingBox) -> float:
    # capped by each side so identical boxes give exactly their own area
    iw = min(min(a.x + a.w, b.x + b.w) - max(a.x, b.x), a.w, b.w)
    ih = min(min(a.y + a.h, b.y + b.h) - max(a.y, b.y), a.h, b.h)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    return iw * ih


def _hull_side(a0: float, a_len: float, b0: float, b_len: float) -> float:
    lo, hi = min(a0, b0), max(a0 + a_len, b0 + b_len)
    # reuse a side that spans the hull so nested or equal boxes stay exact
    if a0 == lo and a0 + a_len == hi:
        return a_len
    if b0 == lo and b0 + b_len == hi:
        return b_len
    return hi - lo


def iou(a: BoundingBox, b: BoundingBox) -> float:
    inter = _intersection(a, b)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return min(inter / union, 1.0)


def giou(a: BoundingBox, b: BoundingBox) -> float:
    """Generalized IoU: IoU minus the share of the enclosing box not covered by the union."""
    inter = _intersection(a, b)
    union = a.area + b.area - inter
    enclosing = _hull_side(a.x, a.w, b.x, b.w) * _hull_side(a.y, a.h, b.y, b.h)
    if union <= 0.0 or enclosing <= 0.0:
        return 0.0
    return inter / union - (enclosing - union) / enclosing


def l1_distance(a: BoundingBox, b: BoundingBox) -> float:
    return abs(a.x - b.x) + abs(a.y - b.y) + abs(a.w - b.w) + abs(a.h - b.h)


def tube_siou(pred: Track | None, gt: Track | None, frames: Iterable[int]) -> float:
    """Mean per-frame IoU over ``frames``; a frame missing on either side scores 0."""
    frames = sorted(set(frames))
    if not frames:
        raise ValueError("tube_siou needs a non-empty frame set")
    pred_boxes = {} if pred is None else {e.frame_index: e.box for e in pred.entries}
    gt_boxes = {} if gt is None else {e.frame_index: e.box for e in gt.entries}
    total = 0.0
    for f in frames:
        p, g = pred_boxes.get(f), gt_boxes.get(f)
        if p is not None and g is not None:
            total += iou(p, g)
    return total / len(frames)


@dataclass(frozen=True)
class LossBreakdown:
    l_lm: float
    l_giou: float
    l_l1: float
    l_tobj: float
    total: float


def combine_losses(l_lm: float, l_giou: float, l_l1: float, l_tobj: float,
                   weights: LossWeights = LossWeights()) -> LossBreakdown:
    total = (weights.lambda_lm * l_lm + weights.lambda_giou * l_giou
             + weights.lambda_l1 * l_l1 + weights.lambda_tobj * l_tobj)
    return LossBreakdown(l_lm, l_giou, l_l1, l_tobj, total)


def binary_cross_entropy(p: float, target: float) -> float:
    p = min(max(p, BCE_EPS), 1.0 - BCE_EPS)
    return -(target * math.log(p) + (1.0 - target) * math.log(1.0 - p))


def reference_losses(pred: RawPrediction, gt: GroundedVideoRecord,
                     weights: LossWeights = LossWeights(),
                     lm_term: float | None = None) -> LossBreakdown:
    """Detection losses of one clip against its ground truth.

    Box losses (1 - gIoU and L1 on ``[x, y, w, h]``) are averaged over the
    (frame, object) pairs where the ground-truth object is visible. The
    objectness BCE is averaged over all pairs. The language-modelling term
    needs model logits, so it is supplied by the caller (0 if omitted).
    """
    if pred.clip_id != gt.clip_id:
        raise ValueError(f"clip mismatch: {pred.clip_id!r} vs {gt.clip_id!r}")
    if pred.num_frames != gt.num_frames:
        raise ValueError(f"T mismatch: prediction has {pred.num_frames}, ground truth {gt.num_frames}")
    pred_ids = [o.phrase_id for o in pred.objects]
    gt_ids = sorted(p.id for p in gt.phrases)
    if len(set(pred_ids)) != len(pred_ids) or sorted(pred_ids) != gt_ids:
        raise ValueError(f"phrase_id mismatch: prediction {sorted(pred_ids)} vs ground truth {gt_ids}")

    visible = {t.phrase_id: t.by_frame() for t in gt.tracks}
    giou_terms: list[float] = []
    l1_terms: list[float] = []
    bce_terms: list[float] = []
    for obj in pred.objects:
        if len(obj.frames) != pred.num_frames:
            raise ValueError(f"object {obj.phrase_id} has {len(obj.frames)} slots, expected {pred.num_frames}")
        present = visible.get(obj.phrase_id, {})
        for t, slot in enumerate(obj.frames):
            entry = present.get(t)
            bce_terms.append(binary_cross_entropy(slot.objectness, 1.0 if entry else 0.0))
            if entry is not None:
                giou_terms.append(1.0 - giou(slot.box, entry.box))
                l1_terms.append(l1_distance(slot.box, entry.box))

    def mean(xs: list[float]) -> float:
        return math.fsum(xs) / len(xs) if xs else 0.0

    return combine_losses(0.0 if lm_term is None else float(lm_term),
                          mean(giou_terms), mean(l1_terms), mean(bce_terms), weights)
