"""Shared builders and hypothesis strategies for the tests."""

from __future__ import annotations

import random
import string

from hypothesis import strategies as st

from groundkit.core import (
    BoundingBox,
    FrameAnnotation,
    GroundedVideoRecord,
    RawFrame,
    RawObject,
    RawPrediction,
    Track,
    TrackEntry,
)
from groundkit.tagparse import parse_tagged_caption


def make_record(clip_id: str, caption_tagged: str, tracks: dict[int, dict[int, tuple]],
                num_frames: int = 8, fps: float = 5.0, width: int = 455, height: int = 256,
                scores: dict[int, dict[int, float]] | None = None) -> GroundedVideoRecord:
    """Record from a tagged caption and ``{phrase_id: {frame: (x, y, w, h)}}``."""
    clean, spans = parse_tagged_caption(caption_tagged)
    scores = scores or {}
    built = []
    for pid, frames in tracks.items():
        entries = tuple(TrackEntry(f, BoundingBox(*box), scores.get(pid, {}).get(f))
                        for f, box in sorted(frames.items()))
        built.append(Track(pid, entries))
    return GroundedVideoRecord(clip_id, num_frames, fps, width, height, clean, tuple(spans), tuple(built))


def random_box(rng: random.Random) -> BoundingBox:
    x, y = rng.uniform(0, 0.8), rng.uniform(0, 0.8)
    return BoundingBox(x, y, rng.uniform(0.01, 1 - x), rng.uniform(0.01, 1 - y))


def random_record(rng: random.Random, clip_id: str) -> GroundedVideoRecord:
    words = ["".join(rng.choice(string.ascii_lowercase + "éü") for _ in range(rng.randint(1, 6)))
             for _ in range(rng.randint(2, 9))]
    tagged_idx = sorted(rng.sample(range(len(words)), rng.randint(1, min(3, len(words)))))
    tagged = " ".join(f"<p>{w}</p>" if i in tagged_idx else w for i, w in enumerate(words))
    clean, spans = parse_tagged_caption(tagged)
    num_frames = rng.randint(1, 12)
    tracks = []
    for span in spans:
        if rng.random() < 0.2:
            continue
        frames = sorted(rng.sample(range(num_frames), rng.randint(0, num_frames)))
        entries = tuple(
            TrackEntry(f, random_box(rng), rng.choice([None, rng.random()])) for f in frames
        )
        tracks.append(Track(span.id, entries))
    return GroundedVideoRecord(clip_id, num_frames, rng.choice([5.0, 29.97, 1.5]),
                               rng.randint(1, 1920), rng.randint(1, 1080), clean,
                               tuple(spans), tuple(tracks))


@st.composite
def boxes(draw) -> BoundingBox:
    x = draw(st.floats(0.0, 0.9))
    y = draw(st.floats(0.0, 0.9))
    w = draw(st.floats(0.01, 1.0 - x))
    h = draw(st.floats(0.01, 1.0 - y))
    return BoundingBox(x, y, w, h)


@st.composite
def records(draw, clip_id: str | None = None) -> GroundedVideoRecord:
    seed = draw(st.integers(0, 2**32 - 1))
    return random_record(random.Random(seed), clip_id or f"clip{seed}")


def raw_prediction(clip_id: str, objectness: dict[int, list[float]],
                   boxes_by_obj: dict[int, list[BoundingBox]]) -> RawPrediction:
    objects = []
    for pid, scores in objectness.items():
        objects.append(RawObject(pid, tuple(RawFrame(b, s) for b, s in zip(boxes_by_obj[pid], scores))))
    num_frames = len(next(iter(objectness.values())))
    return RawPrediction(clip_id, num_frames, tuple(objects))


def frame(clip_id: str, index: int, caption: str, phrases: list[tuple[str, tuple]],
          fps: float = 5.0) -> FrameAnnotation:
    return FrameAnnotation(clip_id, index, index / fps, caption,
                           tuple((t, BoundingBox(*b)) for t, b in phrases))


_PEOPLE = ["A man", "A woman", "A chef", "A person", "A girl"]
_ACTS = [("is cutting", "an onion"), ("holds", "a knife"), ("is stirring", "a pot"),
         ("slices", "a tomato"), ("is washing", "a plate")]
_PLACES = ["a table", "a counter", "a board", "a sink"]


def synthetic_frames(num_clips: int, seed: int = 0) -> list[FrameAnnotation]:
    """Frame-level annotations for ``num_clips`` short cooking clips."""
    rng = random.Random(seed)
    out = []
    for c in range(num_clips):
        person, (verb, obj), place = _PEOPLE[c % 5], _ACTS[(c * 3) % 5], rng.choice(_PLACES)
        boxes = {p: random_box(rng) for p in (person.lower(), obj, place)}
        for i in range(rng.randint(2, 6)):
            caption = f"{person} {verb} {obj} on {place}."
            phrases = tuple((p, b) for p, b in boxes.items() if rng.random() < 0.9 or i == 0)
            out.append(FrameAnnotation(f"syn{c:02d}", i, i / 5.0, caption, phrases))
    return out
