"""Caption aggregation, temporally consistent phrase labelling and track assembly."""

from __future__ import annotations

import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional, Sequence

from ..core import (
    BoundingBox,
    FrameAnnotation,
    GroundedVideoRecord,
    PhraseSpan,
    Track,
    TrackEntry,
    validate_frame,
    validate_record,
)
from ..geometry import iou
from ..llm.http import BoundedLLM
from ..llm.types import LLMError, ChatPrompt
from ..tagparse import LLMResponseError, TagParseError, parse_llm_dict, parse_tagged_caption
from .prompts import build_stage2_prompt, build_stage3_prompt
from .svo import SvoTriplet, extract_svo

logger = logging.getLogger(__name__)

LLMFn = Callable[[ChatPrompt], str]

# clip defaults when no metadata is supplied: 5 fps sampling, 455x256 frames
DEFAULT_FPS = 5.0
DEFAULT_WIDTH = 455
DEFAULT_HEIGHT = 256


@dataclass(frozen=True)
class PipelineConfig:
    max_retries: int = 2
    max_concurrency: int = 4
    temperature: float = 0.0
    max_tokens: int = 512


@dataclass(frozen=True)
class PhraseAssignment:
    frame_index: int
    frame_phrase: str
    assigned: Optional[str]
    source_box: BoundingBox


@dataclass(frozen=True)
class ClipMeta:
    num_frames: int
    fps: float = DEFAULT_FPS
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT


@dataclass(frozen=True)
class Reject:
    clip_id: str
    reason: str


@dataclass
class PipelineResult:
    records: list[GroundedVideoRecord]
    rejects: list[Reject]


class AggregationError(RuntimeError):
    pass


class AssemblyError(ValueError):
    pass


def _same_clip(frames: Sequence[FrameAnnotation]) -> str:
    if not frames:
        raise ValueError("no frames")
    clip_ids = {f.clip_id for f in frames}
    if len(clip_ids) != 1:
        raise ValueError(f"frames span several clips: {sorted(clip_ids)}")
    return frames[0].clip_id


def frame_triplets(frames: Sequence[FrameAnnotation]) -> list[list[SvoTriplet]]:
    return [extract_svo(f.caption) for f in sorted(frames, key=lambda f: f.frame_index)]


def aggregate_captions(frames: Sequence[FrameAnnotation], llm: LLMFn,
                       config: PipelineConfig = PipelineConfig(), *,
                       triplets: Sequence[Sequence[SvoTriplet]] | None = None,
                       ) -> tuple[str, list[PhraseSpan]]:
    """Ask the LLM for one tagged video-level caption summarising the frames.

    ``triplets`` overrides the SVO extraction step (one list per frame).
    Malformed replies are retried with the same prompt up to
    ``config.max_retries`` times.
    """
    clip_id = _same_clip(frames)
    per_frame = list(triplets) if triplets is not None else frame_triplets(frames)
    try:
        prompt = build_stage2_prompt(per_frame, temperature=config.temperature,
                                     max_tokens=config.max_tokens)
    except ValueError as exc:
        raise AggregationError(f"{clip_id}: no SVO triplets in any frame") from exc

    problem = ""
    for attempt in range(config.max_retries + 1):
        reply = llm(prompt)
        try:
            tagged = parse_llm_dict(reply, "CAPTION")
            if tagged is None:
                raise LLMResponseError("empty CAPTION")
            caption, spans = parse_tagged_caption(tagged)
        except (LLMResponseError, TagParseError) as exc:
            problem = str(exc)
        else:
            if spans:
                return caption, spans
            problem = "caption has no <p> phrases"
        logger.warning("%s: malformed stage-2 reply (attempt %d): %s", clip_id, attempt + 1, problem)
    raise AggregationError(f"{clip_id}: no usable caption after {config.max_retries + 1} attempt(s): {problem}")


def _match_category(value: str, video_phrases: Sequence[str]) -> str | None:
    if value in video_phrases:
        return value
    folded = value.strip().casefold()
    for phrase in video_phrases:
        if phrase.strip().casefold() == folded:
            return phrase
    return None


def classify_phrase(frame_phrase: str, video_phrases: Sequence[str], llm: LLMFn,
                    config: PipelineConfig = PipelineConfig()) -> str | None:
    """Map a frame-level phrase to one of the video-level phrases, or ``None``.

    Answers outside the category list are retried and finally degrade to
    ``None``; only transport failures raise.
    """
    prompt = build_stage3_prompt(frame_phrase, video_phrases, temperature=config.temperature,
                                 max_tokens=config.max_tokens)
    for _ in range(config.max_retries + 1):
        reply = llm(prompt)
        try:
            value = parse_llm_dict(reply, "CATEGORY")
        except LLMResponseError:
            continue
        if value is None:
            return None
        matched = _match_category(value, video_phrases)
        if matched is not None:
            return matched
    logger.warning("no valid category for %r after %d attempt(s); using None",
                   frame_phrase, config.max_retries + 1)
    return None


def assemble_tracks(frames: Sequence[FrameAnnotation], assignments: Sequence[PhraseAssignment],
                    spans: Sequence[PhraseSpan]) -> list[Track]:
    """Group classified frame boxes into one track per video-level phrase.

    When several boxes of one frame land on the same phrase, the one
    overlapping the track's nearest earlier box most is kept, falling back to
    the largest box.
    """
    known = {(f.frame_index, text, box) for f in frames for text, box in f.phrase_boxes}
    span_ids: dict[str, int] = {}
    for span in spans:
        span_ids.setdefault(span.text, span.id)

    by_phrase: dict[int, dict[int, list[BoundingBox]]] = defaultdict(lambda: defaultdict(list))
    for a in assignments:
        if (a.frame_index, a.frame_phrase, a.source_box) not in known:
            raise AssemblyError(f"assignment refers to unknown box {a.frame_phrase!r} at frame {a.frame_index}")
        if a.assigned is None:
            continue
        if a.assigned not in span_ids:
            raise AssemblyError(f"assignment to unknown phrase {a.assigned!r}")
        by_phrase[span_ids[a.assigned]][a.frame_index].append(a.source_box)

    tracks = []
    for span in spans:
        frames_boxes = by_phrase.get(span.id)
        if not frames_boxes:
            continue
        entries: list[TrackEntry] = []
        for frame_index in sorted(frames_boxes):
            boxes = frames_boxes[frame_index]
            if len(boxes) == 1 or not entries:
                best = max(boxes, key=lambda b: b.area)
            else:
                prev = entries[-1].box
                best = max(boxes, key=lambda b: (iou(b, prev), b.area))
            entries.append(TrackEntry(frame_index, best))
        tracks.append(Track(span.id, tuple(entries)))
    return tracks


def _clip_meta(frames: Sequence[FrameAnnotation], meta: ClipMeta | None) -> ClipMeta:
    if meta is not None:
        return meta
    ordered = sorted(frames, key=lambda f: f.frame_index)
    num_frames = ordered[-1].frame_index + 1
    fps = DEFAULT_FPS
    first, last = ordered[0], ordered[-1]
    if last.timestamp_s > first.timestamp_s and last.frame_index > first.frame_index:
        # rounded so float noise in timestamps does not leak into the record
        fps = round((last.frame_index - first.frame_index) / (last.timestamp_s - first.timestamp_s), 6)
    return ClipMeta(num_frames=num_frames, fps=fps)


def annotate_clip(frames: Sequence[FrameAnnotation], llm: LLMFn,
                  config: PipelineConfig = PipelineConfig(),
                  meta: ClipMeta | None = None,
                  caption: tuple[str, list[PhraseSpan]] | None = None) -> GroundedVideoRecord:
    """Stages 2 and 3 for one clip; ``caption`` skips aggregation when already known."""
    clip_id = _same_clip(frames)
    for frame in frames:
        problems = validate_frame(frame)
        if problems:
            raise ValueError(f"invalid frame: {problems[0]}")
    clean, spans = caption if caption is not None else aggregate_captions(frames, llm, config)
    categories = list(dict.fromkeys(s.text for s in spans))

    labels: dict[str, str | None] = {}
    for frame in sorted(frames, key=lambda f: f.frame_index):
        for text, _ in frame.phrase_boxes:
            if text not in labels:
                labels[text] = classify_phrase(text, categories, llm, config)
    assignments = [
        PhraseAssignment(f.frame_index, text, labels[text], box)
        for f in frames for text, box in f.phrase_boxes
    ]
    tracks = assemble_tracks(frames, assignments, spans)
    m = _clip_meta(frames, meta)
    record = GroundedVideoRecord(clip_id, m.num_frames, m.fps, m.width, m.height, clean,
                                 tuple(spans), tuple(tracks))
    violations = validate_record(record)
    if violations:
        raise AssemblyError(f"assembled record is invalid: {violations[0]}")
    return record


def group_frames(frames: Iterable[FrameAnnotation]) -> dict[str, list[FrameAnnotation]]:
    grouped: dict[str, list[FrameAnnotation]] = {}
    for frame in frames:
        grouped.setdefault(frame.clip_id, []).append(frame)
    return grouped


def run_pipeline(clips: Mapping[str, Sequence[FrameAnnotation]], llm: LLMFn,
                 config: PipelineConfig = PipelineConfig(),
                 meta: Mapping[str, ClipMeta] | None = None) -> PipelineResult:
    """Annotate every clip; semantic failures become rejects, transport failures raise.

    Clips run in parallel with at most ``config.max_concurrency`` LLM requests
    in flight. Output order follows the input clip order.
    """
    bounded = BoundedLLM(llm, config.max_concurrency)
    meta = meta or {}

    def work(item: tuple[str, Sequence[FrameAnnotation]]) -> GroundedVideoRecord | Reject:
        clip_id, frames = item
        if not frames:
            return Reject(clip_id, "no frames")
        try:
            return annotate_clip(frames, bounded, config, meta.get(clip_id))
        except LLMError:
            raise
        except (AggregationError, AssemblyError, ValueError) as exc:
            return Reject(clip_id, str(exc))

    items = list(clips.items())
    with ThreadPoolExecutor(max_workers=max(1, config.max_concurrency)) as pool:
        results = list(pool.map(work, items))
    records = [r for r in results if isinstance(r, GroundedVideoRecord)]
    rejects = [r for r in results if isinstance(r, Reject)]
    return PipelineResult(records, rejects)
