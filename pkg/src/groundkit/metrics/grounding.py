"""Box grounding metrics: video-level AP50, phrase-aware recall, F1 family, m_sIoU, threshold sweep."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from ..core import BoundingBox, GroundedVideoRecord, RawPrediction
from ..geometry import iou, tube_siou
from ..prep import apply_objectness_threshold
from .similarity import Similarity, default_phrase_similarity


class Instance(NamedTuple):
    frame: int
    box: BoundingBox
    phrase: str
    track: int
    score: float


def instances(record: GroundedVideoRecord) -> list[Instance]:
    """Every (frame, box) of a record with its phrase text, in track order."""
    texts = {p.id: p.text for p in record.phrases}
    out = []
    for track in record.tracks:
        phrase = texts.get(track.phrase_id, "")
        for e in track.entries:
            out.append(Instance(e.frame_index, e.box, phrase, track.phrase_id,
                                1.0 if e.score is None else e.score))
    return out


def align(preds: Sequence[GroundedVideoRecord], gts: Sequence[GroundedVideoRecord],
          ) -> list[tuple[GroundedVideoRecord, GroundedVideoRecord]]:
    """Pair records by clip_id, sorted by clip_id; both sides must hold the same clips."""
    def index(records: Sequence, side: str) -> dict:
        out = {}
        for r in records:
            if r.clip_id in out:
                raise ValueError(f"duplicate clip_id {r.clip_id!r} in {side}")
            out[r.clip_id] = r
        return out

    p, g = index(preds, "predictions"), index(gts, "ground truth")
    if p.keys() != g.keys():
        missing = sorted(g.keys() - p.keys())[:5]
        extra = sorted(p.keys() - g.keys())[:5]
        raise ValueError(f"clip_id mismatch: missing predictions for {missing}, unexpected {extra}")
    return [(p[k], g[k]) for k in sorted(g)]


def _check_frames(pred: GroundedVideoRecord, gt: GroundedVideoRecord) -> None:
    for inst in instances(pred):
        if not 0 <= inst.frame < gt.num_frames:
            raise ValueError(f"{gt.clip_id}: prediction frame {inst.frame} out of range [0,{gt.num_frames})")


def _mean(values: Iterable[float]) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else 0.0


def _check_fraction(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0,1], got {value}")


def average_precision(hits: Sequence[bool], num_gt: int) -> float:
    """All-point interpolated AP of a ranked hit list."""
    if num_gt <= 0:
        raise ValueError("average_precision needs at least one ground-truth item")
    recalls, precisions = [], []
    tp = 0
    for rank, hit in enumerate(hits, 1):
        tp += hit
        recalls.append(tp / num_gt)
        precisions.append(tp / rank)
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    ap, prev_recall = 0.0, 0.0
    for r, p in zip(recalls, precisions):
        if r > prev_recall:
            ap += (r - prev_recall) * p
            prev_recall = r
    return ap


def video_ap(pred: GroundedVideoRecord, gt: GroundedVideoRecord, iou_thresh: float = 0.5,
             phrase_aware: bool = False, use_scores: bool = True) -> float | None:
    """AP of one video, or ``None`` when the ground truth has no boxes."""
    _check_frames(pred, gt)
    gt_inst = instances(gt)
    if not gt_inst:
        return None
    by_frame: dict[int, list[int]] = defaultdict(list)
    for k, g in enumerate(gt_inst):
        by_frame[g.frame].append(k)

    ranked = sorted(instances(pred), key=lambda p: (-p.score if use_scores else 0.0, p.track, p.frame))
    taken: set[int] = set()
    hits = []
    for p in ranked:
        best, best_iou = None, iou_thresh
        for k in by_frame.get(p.frame, ()):
            if k in taken:
                continue
            if phrase_aware and p.phrase.casefold() != gt_inst[k].phrase.casefold():
                continue
            overlap = iou(p.box, gt_inst[k].box)
            if overlap >= best_iou and (best is None or overlap > best_iou):
                best, best_iou = k, overlap
        if best is not None:
            taken.add(best)
        hits.append(best is not None)
    return average_precision(hits, len(gt_inst))


def ap50_per_video(preds: Sequence[GroundedVideoRecord], gts: Sequence[GroundedVideoRecord],
                   iou_thresh: float = 0.5, phrase_aware: bool = False,
                   use_scores: bool = True) -> dict[str, float]:
    """Per-video AP; videos without ground-truth boxes are left out."""
    _check_fraction("iou_thresh", iou_thresh)
    out = {}
    for pred, gt in align(preds, gts):
        ap = video_ap(pred, gt, iou_thresh, phrase_aware, use_scores)
        if ap is not None:
            out[gt.clip_id] = ap
    return out


def ap50_video(preds: Sequence[GroundedVideoRecord], gts: Sequence[GroundedVideoRecord],
               iou_thresh: float = 0.5, phrase_aware: bool = False, use_scores: bool = True) -> float:
    """Mean over videos of per-video AP at the IoU threshold.

    Predicted boxes are ranked by score (1.0 when absent), ties by track id
    then frame; ``use_scores=False`` ranks by track id and frame only.
    Matching is greedy and one-to-one within a frame.
    """
    return _mean(ap50_per_video(preds, gts, iou_thresh, phrase_aware, use_scores).values())


def _greedy_pairs(candidates: list[tuple[float, int, int]]) -> list[tuple[int, int]]:
    """One-to-one matching of (score, gt, pred) triples by descending score."""
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    used_g: set[int] = set()
    used_p: set[int] = set()
    out = []
    for _, g, p in candidates:
        if g in used_g or p in used_p:
            continue
        used_g.add(g)
        used_p.add(p)
        out.append((g, p))
    return out


def video_recall(pred: GroundedVideoRecord, gt: GroundedVideoRecord, iou_thresh: float = 0.5,
                 sim_thresh: float = 0.5, similarity: Similarity = default_phrase_similarity,
                 _cache: dict | None = None) -> float | None:
    _check_frames(pred, gt)
    gt_inst = instances(gt)
    if not gt_inst:
        return None
    cache = {} if _cache is None else _cache
    pred_inst = instances(pred)
    pred_by_frame: dict[int, list[int]] = defaultdict(list)
    for j, p in enumerate(pred_inst):
        pred_by_frame[p.frame].append(j)
    candidates = []
    for k, g in enumerate(gt_inst):
        for j in pred_by_frame.get(g.frame, ()):
            p = pred_inst[j]
            overlap = iou(p.box, g.box)
            if overlap < iou_thresh:
                continue
            key = (p.phrase, g.phrase)
            if key not in cache:
                cache[key] = similarity(p.phrase, g.phrase)
            if cache[key] >= sim_thresh:
                candidates.append((overlap, k, j))
    return len(_greedy_pairs(candidates)) / len(gt_inst)


def recall_per_video(preds: Sequence[GroundedVideoRecord], gts: Sequence[GroundedVideoRecord],
                     iou_thresh: float = 0.5, sim_thresh: float = 0.5,
                     similarity: Similarity = default_phrase_similarity) -> dict[str, float]:
    _check_fraction("iou_thresh", iou_thresh)
    _check_fraction("sim_thresh", sim_thresh)
    cache: dict = {}
    out = {}
    for pred, gt in align(preds, gts):
        r = video_recall(pred, gt, iou_thresh, sim_thresh, similarity, cache)
        if r is not None:
            out[gt.clip_id] = r
    return out


def grounding_recall(preds: Sequence[GroundedVideoRecord], gts: Sequence[GroundedVideoRecord],
                     iou_thresh: float = 0.5, sim_thresh: float = 0.5,
                     similarity: Similarity = default_phrase_similarity) -> float:
    """Share of ground-truth (frame, box, phrase) instances found, averaged over videos.

    A prediction counts when its box reaches ``iou_thresh`` and its phrase
    reaches ``sim_thresh`` under ``similarity``; matching is one-to-one,
    greedy by descending IoU.
    """
    return _mean(recall_per_video(preds, gts, iou_thresh, sim_thresh, similarity).values())


@dataclass(frozen=True)
class F1Scores:
    f1_all: float
    f1_all_per_sent: float
    f1_loc: float
    f1_loc_per_sent: float


def _f1(tp: int, n_pred: int, n_gt: int) -> float:
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gt if n_gt else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def f1_entities(preds: Sequence[GroundedVideoRecord], gts: Sequence[GroundedVideoRecord],
                iou_thresh: float = 0.5) -> F1Scores:
    """Entity F1 with exact phrase match (``all``) or boxes only (``loc``).

    Only predictions on frames that carry ground-truth boxes are scored. A
    box is correct when its IoU with a ground-truth box is strictly above
    ``iou_thresh``. Categories are case-folded phrase texts; in ``loc`` mode a
    correct prediction counts towards the category of the box it matched.
    """
    pairs = align(preds, gts)
    totals = {mode: (Counter(), Counter(), Counter()) for mode in ("all", "loc")}  # tp, pred, gt
    per_sent: dict[str, list[float]] = {"all": [], "loc": []}
    any_gt = False
    for pred, gt in pairs:
        _check_frames(pred, gt)
        gt_inst = instances(gt)
        if not gt_inst:
            continue
        any_gt = True
        frames = {g.frame for g in gt_inst}
        pred_inst = [p for p in instances(pred) if p.frame in frames]
        gt_cat = [g.phrase.casefold() for g in gt_inst]
        pred_cat = [p.phrase.casefold() for p in pred_inst]
        for mode in ("all", "loc"):
            candidates = []
            for k, g in enumerate(gt_inst):
                for j, p in enumerate(pred_inst):
                    if p.frame != g.frame or (mode == "all" and pred_cat[j] != gt_cat[k]):
                        continue
                    overlap = iou(p.box, g.box)
                    if overlap > iou_thresh:
                        candidates.append((overlap, k, j))
            matched = _greedy_pairs(candidates)
            owner = dict(enumerate(pred_cat))
            for k, j in matched:
                owner[j] = gt_cat[k]
            tp, n_pred, n_gt = totals[mode]
            for k, _ in matched:
                tp[gt_cat[k]] += 1
            n_pred.update(owner.values())
            n_gt.update(gt_cat)
            per_sent[mode].append(_f1(len(matched), len(pred_inst), len(gt_inst)))
    if not any_gt:
        raise ValueError("f1_entities needs ground truth with at least one box")

    def category_mean(mode: str) -> float:
        tp, n_pred, n_gt = totals[mode]
        return _mean(_f1(tp[c], n_pred[c], n_gt[c]) for c in sorted(n_gt))

    return F1Scores(
        f1_all=category_mean("all"),
        f1_all_per_sent=_mean(per_sent["all"]),
        f1_loc=category_mean("loc"),
        f1_loc_per_sent=_mean(per_sent["loc"]),
    )


def _target_tube(pred: GroundedVideoRecord, phrase_id: int):
    for track in pred.tracks:
        if track.phrase_id == phrase_id:
            return track
    if len(pred.tracks) == 1:
        return pred.tracks[0]
    if not pred.tracks:
        return None
    raise ValueError(f"{pred.clip_id}: several predicted tubes and none for phrase {phrase_id}")


def msiou_per_video(preds: Sequence[GroundedVideoRecord],
                    gts: Sequence[GroundedVideoRecord]) -> dict[str, float]:
    out = {}
    for pred, gt in align(preds, gts):
        if len(gt.tracks) != 1:
            raise ValueError(f"{gt.clip_id}: m_sIoU expects exactly one ground-truth tube, got {len(gt.tracks)}")
        target = gt.tracks[0]
        if not target.entries:
            raise ValueError(f"{gt.clip_id}: ground-truth tube has no frames")
        out[gt.clip_id] = tube_siou(_target_tube(pred, target.phrase_id), target, target.frames)
    return out


def msiou(preds: Sequence[GroundedVideoRecord], gts: Sequence[GroundedVideoRecord]) -> float:
    """Mean over videos of the per-frame IoU of the single target tube."""
    return _mean(msiou_per_video(preds, gts).values())


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    ap50: float
    recall: float
    boxes_emitted: int


def threshold_sweep(raw: Sequence[RawPrediction], gts: Sequence[GroundedVideoRecord],
                    thresholds: Sequence[float], iou_thresh: float = 0.5, sim_thresh: float = 0.5,
                    similarity: Similarity = default_phrase_similarity,
                    rank_by_score: bool = False) -> list[SweepRow]:
    """AP50, recall and box count after objectness thresholding at each threshold.

    Predicted phrases are taken from the matching ground-truth record. AP
    ranks boxes by track and frame unless ``rank_by_score`` is set: with
    objectness as the ranking score, dropping low-objectness boxes only cuts
    the tail of the ranking and could never raise AP.
    """
    thresholds = list(thresholds)
    for t in thresholds:
        _check_fraction("threshold", t)
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be sorted ascending")
    by_clip = {g.clip_id: g for g in gts}
    missing = [r.clip_id for r in raw if r.clip_id not in by_clip]
    if missing or len(raw) != len(gts):
        raise ValueError(f"raw predictions and ground truth cover different clips (e.g. {missing[:5]})")

    rows = []
    for tau in thresholds:
        preds = [by_clip[r.clip_id].with_tracks(apply_objectness_threshold(r, tau)) for r in raw]
        emitted = sum(len(t.entries) for p in preds for t in p.tracks)
        rows.append(SweepRow(
            threshold=tau,
            ap50=ap50_video(preds, gts, iou_thresh, use_scores=rank_by_score),
            recall=grounding_recall(preds, gts, iou_thresh, sim_thresh, similarity),
            boxes_emitted=emitted,
        ))
    return rows
