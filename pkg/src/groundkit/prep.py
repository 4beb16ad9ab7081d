"""Frame sampling, objectness post-processing and dataset statistics."""

from __future__ import annotations

import math
import random
from dataclasses import asdict, dataclass
from typing import Iterable

from .core import GroundedVideoRecord, RawPrediction, Track, TrackEntry

DEFAULT_NUM_SAMPLES = 8
DEFAULT_OBJECTNESS_THRESHOLD = 0.5


def segment_bounds(num_frames: int, t: int) -> list[tuple[int, int]]:
    return [(i * num_frames // t, (i + 1) * num_frames // t) for i in range(t)]


def sample_frames(num_frames: int, t: int = DEFAULT_NUM_SAMPLES, mode: str = "test",
                  seed: int | None = None) -> list[int]:
    """Pick one frame per segment after splitting the clip into ``t`` equal parts.

    ``test`` takes each segment's centre frame; ``train`` draws uniformly
    within each segment from a ``random.Random(seed)`` stream.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    if num_frames < t:
        raise ValueError(f"cannot sample {t} frames from {num_frames}")
    bounds = segment_bounds(num_frames, t)
    if mode == "test":
        return [(lo + hi - 1) // 2 for lo, hi in bounds]
    if mode == "train":
        rng = random.Random(seed)
        return [rng.randrange(lo, hi) for lo, hi in bounds]
    raise ValueError(f"mode must be 'train' or 'test', got {mode!r}")


def apply_objectness_threshold(raw: RawPrediction, tau: float = DEFAULT_OBJECTNESS_THRESHOLD) -> list[Track]:
    """Keep a box where its objectness is >= ``tau``; objects with nothing kept get no track."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0,1], got {tau}")
    tracks = []
    for obj in raw.objects:
        entries = tuple(
            TrackEntry(t, slot.box, slot.objectness)
            for t, slot in enumerate(obj.frames) if slot.objectness >= tau
        )
        if entries:
            tracks.append(Track(obj.phrase_id, entries))
    return tracks


def postprocess(raw: RawPrediction, meta: GroundedVideoRecord,
                tau: float = DEFAULT_OBJECTNESS_THRESHOLD) -> GroundedVideoRecord:
    """Thresholded prediction as a record; caption, phrases and sizes come from ``meta``."""
    if raw.clip_id != meta.clip_id:
        raise ValueError(f"clip mismatch: {raw.clip_id!r} vs {meta.clip_id!r}")
    if raw.num_frames != meta.num_frames:
        raise ValueError(f"{raw.clip_id}: num_frames {raw.num_frames} vs {meta.num_frames}")
    known = {p.id for p in meta.phrases}
    unknown = [o.phrase_id for o in raw.objects if o.phrase_id not in known]
    if unknown:
        raise ValueError(f"{raw.clip_id}: objects reference unknown phrase ids {unknown}")
    return meta.with_tracks(apply_objectness_threshold(raw, tau))


@dataclass(frozen=True)
class DatasetStats:
    avg_frames_per_video: float
    avg_duration_s: float
    avg_instances_per_video: float
    total_instances: int
    avg_box_w_px: float
    avg_box_h_px: float
    avg_tube_length_frames: float
    avg_caption_length_words: float

    def to_json(self) -> dict:
        return asdict(self)


class _ExactSum:
    """Shewchuk partials, as in ``math.fsum``; the total is independent of order."""

    def __init__(self) -> None:
        self.partials: list[float] = []

    def add(self, x: float) -> None:
        i = 0
        for y in self.partials:
            if abs(x) < abs(y):
                x, y = y, x
            hi = x + y
            lo = y - (hi - x)
            if lo:
                self.partials[i] = lo
                i += 1
            x = hi
        self.partials[i:] = [x]

    @property
    def value(self) -> float:
        return math.fsum(self.partials)


class StatsAccumulator:
    """Running sums for :class:`DatasetStats`, so records can be streamed."""

    def __init__(self) -> None:
        self.videos = 0
        self.frames = 0
        self.duration = _ExactSum()
        self.instances = 0
        self.caption_words = 0
        self.tracks = 0
        self.boxes = 0
        self.box_w = _ExactSum()
        self.box_h = _ExactSum()

    def add(self, record: GroundedVideoRecord) -> None:
        if not record.fps > 0:
            raise ValueError(f"{record.clip_id}: fps must be > 0")
        self.videos += 1
        self.frames += record.num_frames
        self.duration.add(record.num_frames / record.fps)
        self.caption_words += len(record.caption.split())
        for track in record.tracks:
            self.tracks += 1
            self.instances += len(track.entries)
            for e in track.entries:
                self.boxes += 1
                self.box_w.add(e.box.w * record.width)
                self.box_h.add(e.box.h * record.height)

    def result(self) -> DatasetStats:
        if not self.videos:
            raise ValueError("dataset_stats needs at least one record")
        n = self.videos
        return DatasetStats(
            avg_frames_per_video=self.frames / n,
            avg_duration_s=self.duration.value / n,
            avg_instances_per_video=self.instances / n,
            total_instances=self.instances,
            avg_box_w_px=self.box_w.value / self.boxes if self.boxes else 0.0,
            avg_box_h_px=self.box_h.value / self.boxes if self.boxes else 0.0,
            avg_tube_length_frames=self.instances / self.tracks if self.tracks else 0.0,
            avg_caption_length_words=self.caption_words / n,
        )


def dataset_stats(records: Iterable[GroundedVideoRecord]) -> DatasetStats:
    acc = StatsAccumulator()
    for record in records:
        acc.add(record)
    return acc.result()
