"""Domain types, record validation and JSON-lines interchange.

Boxes are ``[x, y, w, h]`` fractions of the frame size. A track stores one
entry per frame in which its object is visible; frames without an entry mean
the object is absent or occluded there.
"""

from __future__ import annotations

import io
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Any, Iterable, Iterator, Sequence, Union

logger = logging.getLogger(__name__)

BOX_EPS = 1e-6
MIN_BOX_SIDE = 1e-4

PathOrStream = Union[str, os.PathLike, IO[str]]


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    def clamped(self, min_side: float = MIN_BOX_SIDE) -> "BoundingBox":
        """Clip into the unit frame and enforce a minimum side length.

        Stage-1 detectors occasionally emit boxes that spill over the frame
        edge or collapse to a line; this is applied before ingestion.
        """
        x = min(max(self.x, 0.0), 1.0 - min_side)
        y = min(max(self.y, 0.0), 1.0 - min_side)
        w = min(max(self.w, min_side), 1.0 - x)
        h = min(max(self.h, min_side), 1.0 - y)
        return BoundingBox(x, y, w, h)


@dataclass(frozen=True)
class PhraseSpan:
    """A groundable noun phrase; offsets are UTF-8 byte offsets into the caption."""

    id: int
    text: str
    char_start: int
    char_end: int


@dataclass(frozen=True)
class TrackEntry:
    frame_index: int
    box: BoundingBox
    score: float | None = None


@dataclass(frozen=True)
class Track:
    phrase_id: int
    entries: tuple[TrackEntry, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))

    @property
    def frames(self) -> list[int]:
        return [e.frame_index for e in self.entries]

    def box_at(self, frame_index: int) -> BoundingBox | None:
        for entry in self.entries:
            if entry.frame_index == frame_index:
                return entry.box
        return None

    def by_frame(self) -> dict[int, TrackEntry]:
        return {e.frame_index: e for e in self.entries}


@dataclass(frozen=True)
class FrameAnnotation:
    """Stage-1 output for one frame: caption plus (phrase, box) pairs."""

    clip_id: str
    frame_index: int
    timestamp_s: float
    caption: str
    phrase_boxes: tuple[tuple[str, BoundingBox], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "phrase_boxes", tuple((str(t), b) for t, b in self.phrase_boxes)
        )


@dataclass(frozen=True)
class GroundedVideoRecord:
    clip_id: str
    num_frames: int
    fps: float
    width: int
    height: int
    caption: str
    phrases: tuple[PhraseSpan, ...] = ()
    tracks: tuple[Track, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "phrases", tuple(self.phrases))
        object.__setattr__(self, "tracks", tuple(self.tracks))

    def phrase_by_id(self) -> dict[int, PhraseSpan]:
        return {p.id: p for p in self.phrases}

    def with_tracks(self, tracks: Iterable[Track]) -> "GroundedVideoRecord":
        return GroundedVideoRecord(
            self.clip_id, self.num_frames, self.fps, self.width, self.height,
            self.caption, self.phrases, tuple(tracks),
        )


@dataclass(frozen=True)
class RawFrame:
    box: BoundingBox
    objectness: float


@dataclass(frozen=True)
class RawObject:
    phrase_id: int
    frames: tuple[RawFrame, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "frames", tuple(self.frames))


@dataclass(frozen=True)
class RawPrediction:
    """Model output before thresholding: T boxes and objectness scores per object."""

    clip_id: str
    num_frames: int
    objects: tuple[RawObject, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))


@dataclass(frozen=True)
class LossWeights:
    lambda_lm: float = 1.0
    lambda_giou: float = 2.0
    lambda_l1: float = 2.0
    lambda_tobj: float = 2.0

    def __post_init__(self) -> None:
        for name in ("lambda_lm", "lambda_giou", "lambda_l1", "lambda_tobj"):
            value = getattr(self, name)
            if not value >= 0:
                raise ValueError(f"{name} must be nonnegative, got {value!r}")


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    record: str
    field: str
    rule: str

    def __str__(self) -> str:
        return f"{self.record}: {self.field}: {self.rule}"


def box_problems(box: BoundingBox) -> list[str]:
    problems = []
    if not 0.0 <= box.x <= 1.0:
        problems.append(f"x={box.x!r} not in [0,1]")
    if not 0.0 <= box.y <= 1.0:
        problems.append(f"y={box.y!r} not in [0,1]")
    if not box.w > 0.0:
        problems.append(f"w={box.w!r} not > 0")
    if not box.h > 0.0:
        problems.append(f"h={box.h!r} not > 0")
    if not box.x + box.w <= 1.0 + BOX_EPS:
        problems.append("x+w exceeds frame")
    if not box.y + box.h <= 1.0 + BOX_EPS:
        problems.append("y+h exceeds frame")
    return problems


def _box_violation(record: str, path: str, box: BoundingBox) -> list[Violation]:
    problems = box_problems(box)
    if not problems:
        return []
    return [Violation(record, path, "box out of range (" + "; ".join(problems) + ")")]


def _is_fraction(value: float | None) -> bool:
    return value is not None and 0.0 <= value <= 1.0


def validate_record(record: GroundedVideoRecord) -> list[Violation]:
    """Return every invariant violation of ``record``; empty means valid."""
    rid = record.clip_id
    out: list[Violation] = []
    if not record.num_frames > 0:
        out.append(Violation(rid, "num_frames", "num_frames must be > 0"))

    caption_bytes = record.caption.encode("utf-8")
    seen_ids: set[int] = set()
    prev_end = 0
    for i, span in enumerate(record.phrases):
        path = f"phrases[{i}]"
        if span.id in seen_ids:
            out.append(Violation(rid, f"{path}.id", f"duplicate phrase id {span.id}"))
        seen_ids.add(span.id)
        if not 0 <= span.char_start < span.char_end <= len(caption_bytes):
            out.append(Violation(rid, path, "span offsets out of range"))
            continue
        try:
            piece = caption_bytes[span.char_start:span.char_end].decode("utf-8")
        except UnicodeDecodeError:
            piece = None
        if piece != span.text:
            out.append(Violation(rid, f"{path}.text", "span text mismatch"))
        if span.char_start < prev_end:
            out.append(Violation(rid, path, "spans overlap or are not sorted"))
        prev_end = max(prev_end, span.char_end)

    tracked: set[int] = set()
    for i, track in enumerate(record.tracks):
        path = f"tracks[{i}]"
        if track.phrase_id not in seen_ids:
            out.append(Violation(rid, f"{path}.phrase_id", f"unknown phrase id {track.phrase_id}"))
        if track.phrase_id in tracked:
            out.append(Violation(rid, f"{path}.phrase_id", f"second track for phrase {track.phrase_id}"))
        tracked.add(track.phrase_id)
        prev_frame = -1
        for j, entry in enumerate(track.entries):
            epath = f"{path}.boxes[{j}]"
            if entry.frame_index <= prev_frame:
                out.append(Violation(rid, f"{epath}.frame_index", "frame indices not strictly increasing"))
            if not 0 <= entry.frame_index < record.num_frames:
                out.append(Violation(rid, f"{epath}.frame_index", "frame index out of range"))
            prev_frame = max(prev_frame, entry.frame_index)
            out.extend(_box_violation(rid, f"{epath}.box", entry.box))
            if entry.score is not None and not _is_fraction(entry.score):
                out.append(Violation(rid, f"{epath}.score", "score not in [0,1]"))
    return out


def validate_frame(frame: FrameAnnotation) -> list[Violation]:
    rid = f"{frame.clip_id}#{frame.frame_index}"
    out: list[Violation] = []
    if frame.frame_index < 0:
        out.append(Violation(rid, "frame_index", "frame_index must be >= 0"))
    for i, (text, box) in enumerate(frame.phrase_boxes):
        if not text.strip():
            out.append(Violation(rid, f"phrases[{i}].text", "empty phrase text"))
        out.extend(_box_violation(rid, f"phrases[{i}].box", box))
    return out


def validate_raw(raw: RawPrediction) -> list[Violation]:
    rid = raw.clip_id
    out: list[Violation] = []
    if not raw.num_frames > 0:
        out.append(Violation(rid, "num_frames", "num_frames must be > 0"))
    for i, obj in enumerate(raw.objects):
        if len(obj.frames) != raw.num_frames:
            out.append(Violation(rid, f"objects[{i}].frames",
                                 f"expected {raw.num_frames} frame slots, got {len(obj.frames)}"))
        for j, slot in enumerate(obj.frames):
            if not _is_fraction(slot.objectness):
                out.append(Violation(rid, f"objects[{i}].frames[{j}].objectness", "objectness not in [0,1]"))
    return out


def validate(item: Any) -> list[Violation]:
    if isinstance(item, GroundedVideoRecord):
        return validate_record(item)
    if isinstance(item, FrameAnnotation):
        return validate_frame(item)
    if isinstance(item, RawPrediction):
        return validate_raw(item)
    raise TypeError(f"cannot validate {type(item).__name__}")


# --------------------------------------------------------------------------
# JSON lines


class DatasetError(ValueError):
    """Malformed line in a dataset file."""

    def __init__(self, line: int, path: str, message: str):
        self.line = line
        self.path = path
        super().__init__(f"line {line}: {path}: {message}" if path else f"line {line}: {message}")


class ValidationError(ValueError):
    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        shown = "; ".join(str(v) for v in self.violations[:5])
        more = len(self.violations) - 5
        super().__init__(shown + (f" (+{more} more)" if more > 0 else ""))


class _FieldError(Exception):
    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message


class _Reader:
    """Typed field access that tracks the JSON path and unknown keys."""

    def __init__(self) -> None:
        self.unknown = 0

    def obj(self, value: Any, path: str, keys: Sequence[str]) -> dict:
        if not isinstance(value, dict):
            raise _FieldError(path or "$", "expected an object")
        self.unknown += sum(1 for k in value if k not in keys)
        return value

    def get(self, d: dict, key: str, path: str, kind: str, optional: bool = False) -> Any:
        sub = f"{path}.{key}" if path else key
        if key not in d:
            if optional:
                return None
            raise _FieldError(sub, "missing required field")
        value = d[key]
        if optional and value is None:
            return None
        return self.check(value, sub, kind)

    @staticmethod
    def check(value: Any, path: str, kind: str) -> Any:
        if kind == "str":
            if not isinstance(value, str):
                raise _FieldError(path, "expected a string")
        elif kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise _FieldError(path, "expected an integer")
        elif kind == "num":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise _FieldError(path, "expected a number")
            value = float(value)
        elif kind == "list":
            if not isinstance(value, list):
                raise _FieldError(path, "expected a list")
        return value

    def box(self, d: dict, key: str, path: str) -> BoundingBox:
        values = self.get(d, key, path, "list")
        sub = f"{path}.{key}"
        if len(values) != 4:
            raise _FieldError(sub, "expected [x, y, w, h]")
        return BoundingBox(*(self.check(v, f"{sub}[{i}]", "num") for i, v in enumerate(values)))


_FRAME_KEYS = ("clip_id", "frame_index", "timestamp_s", "caption", "phrases")
_RECORD_KEYS = ("clip_id", "num_frames", "fps", "width", "height", "caption", "phrases", "tracks")
_RAW_KEYS = ("clip_id", "num_frames", "objects")


def _parse_frame(r: _Reader, d: Any) -> FrameAnnotation:
    d = r.obj(d, "", _FRAME_KEYS)
    pairs = []
    for i, p in enumerate(r.get(d, "phrases", "", "list")):
        path = f"phrases[{i}]"
        p = r.obj(p, path, ("text", "box"))
        pairs.append((r.get(p, "text", path, "str"), r.box(p, "box", path)))
    return FrameAnnotation(
        clip_id=r.get(d, "clip_id", "", "str"),
        frame_index=r.get(d, "frame_index", "", "int"),
        timestamp_s=r.get(d, "timestamp_s", "", "num"),
        caption=r.get(d, "caption", "", "str"),
        phrase_boxes=tuple(pairs),
    )


def _parse_record(r: _Reader, d: Any) -> GroundedVideoRecord:
    d = r.obj(d, "", _RECORD_KEYS)
    phrases = []
    for i, p in enumerate(r.get(d, "phrases", "", "list")):
        path = f"phrases[{i}]"
        p = r.obj(p, path, ("id", "text", "char_start", "char_end"))
        phrases.append(PhraseSpan(
            id=r.get(p, "id", path, "int"),
            text=r.get(p, "text", path, "str"),
            char_start=r.get(p, "char_start", path, "int"),
            char_end=r.get(p, "char_end", path, "int"),
        ))
    tracks = []
    for i, t in enumerate(r.get(d, "tracks", "", "list")):
        path = f"tracks[{i}]"
        t = r.obj(t, path, ("phrase_id", "boxes"))
        entries = []
        for j, e in enumerate(r.get(t, "boxes", path, "list")):
            epath = f"{path}.boxes[{j}]"
            e = r.obj(e, epath, ("frame_index", "box", "score"))
            entries.append(TrackEntry(
                frame_index=r.get(e, "frame_index", epath, "int"),
                box=r.box(e, "box", epath),
                score=r.get(e, "score", epath, "num", optional=True),
            ))
        tracks.append(Track(phrase_id=r.get(t, "phrase_id", path, "int"), entries=tuple(entries)))
    return GroundedVideoRecord(
        clip_id=r.get(d, "clip_id", "", "str"),
        num_frames=r.get(d, "num_frames", "", "int"),
        fps=r.get(d, "fps", "", "num"),
        width=r.get(d, "width", "", "int"),
        height=r.get(d, "height", "", "int"),
        caption=r.get(d, "caption", "", "str"),
        phrases=tuple(phrases),
        tracks=tuple(tracks),
    )


def _parse_raw(r: _Reader, d: Any) -> RawPrediction:
    d = r.obj(d, "", _RAW_KEYS)
    objects = []
    for i, o in enumerate(r.get(d, "objects", "", "list")):
        path = f"objects[{i}]"
        o = r.obj(o, path, ("phrase_id", "frames"))
        slots = []
        for j, f in enumerate(r.get(o, "frames", path, "list")):
            fpath = f"{path}.frames[{j}]"
            f = r.obj(f, fpath, ("box", "objectness"))
            slots.append(RawFrame(box=r.box(f, "box", fpath),
                                  objectness=r.get(f, "objectness", fpath, "num")))
        objects.append(RawObject(phrase_id=r.get(o, "phrase_id", path, "int"), frames=tuple(slots)))
    return RawPrediction(
        clip_id=r.get(d, "clip_id", "", "str"),
        num_frames=r.get(d, "num_frames", "", "int"),
        objects=tuple(objects),
    )


_PARSERS = {"frames": _parse_frame, "records": _parse_record, "raw": _parse_raw}


def _box_json(box: BoundingBox) -> list[float]:
    return [box.x, box.y, box.w, box.h]


def to_json(item: Any) -> dict:
    """Schema-ordered JSON object for a frame, record or raw prediction."""
    if isinstance(item, FrameAnnotation):
        return {
            "clip_id": item.clip_id,
            "frame_index": item.frame_index,
            "timestamp_s": item.timestamp_s,
            "caption": item.caption,
            "phrases": [{"text": t, "box": _box_json(b)} for t, b in item.phrase_boxes],
        }
    if isinstance(item, GroundedVideoRecord):
        tracks = []
        for t in item.tracks:
            boxes = []
            for e in t.entries:
                entry: dict[str, Any] = {"frame_index": e.frame_index, "box": _box_json(e.box)}
                if e.score is not None:
                    entry["score"] = e.score
                boxes.append(entry)
            tracks.append({"phrase_id": t.phrase_id, "boxes": boxes})
        return {
            "clip_id": item.clip_id,
            "num_frames": item.num_frames,
            "fps": item.fps,
            "width": item.width,
            "height": item.height,
            "caption": item.caption,
            "phrases": [
                {"id": p.id, "text": p.text, "char_start": p.char_start, "char_end": p.char_end}
                for p in item.phrases
            ],
            "tracks": tracks,
        }
    if isinstance(item, RawPrediction):
        return {
            "clip_id": item.clip_id,
            "num_frames": item.num_frames,
            "objects": [
                {"phrase_id": o.phrase_id,
                 "frames": [{"box": _box_json(f.box), "objectness": f.objectness} for f in o.frames]}
                for o in item.objects
            ],
        }
    raise TypeError(f"cannot serialise {type(item).__name__}")


def dumps_line(item: Any) -> str:
    return json.dumps(to_json(item), ensure_ascii=False, allow_nan=False)


def iter_dataset(source: PathOrStream, kind: str) -> Iterator[Any]:
    """Yield typed values line by line; see :func:`load_dataset`."""
    if kind not in _PARSERS:
        raise ValueError(f"unknown dataset kind {kind!r}; expected one of {sorted(_PARSERS)}")
    parse = _PARSERS[kind]
    reader = _Reader()
    stream, owned = _open(source, "r")
    try:
        for lineno, line in enumerate(stream, 1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(lineno, "", f"invalid JSON ({exc.msg})") from None
            try:
                yield parse(reader, data)
            except _FieldError as exc:
                raise DatasetError(lineno, exc.path, exc.message) from None
    finally:
        if owned:
            stream.close()
        if reader.unknown:
            logger.warning("ignored %d unknown field(s) while reading %s data", reader.unknown, kind)


def load_dataset(source: PathOrStream, kind: str) -> list[Any]:
    """Read a JSON-lines file of ``frames``, ``records`` or ``raw`` predictions.

    Blank lines are skipped and order is preserved. A malformed line raises
    :class:`DatasetError` carrying the 1-based line number and field path;
    unknown fields are ignored and counted in a logged warning.
    """
    return list(iter_dataset(source, kind))


def save_dataset(items: Sequence[Any], dest: PathOrStream) -> int:
    """Validate every item, then write one JSON object per line.

    Nothing is written if any item fails validation.
    """
    items = list(items)
    violations = [v for item in items for v in validate(item)]
    if violations:
        raise ValidationError(violations)
    lines = [dumps_line(item) + "\n" for item in items]
    stream, owned = _open(dest, "w")
    try:
        stream.writelines(lines)
    finally:
        if owned:
            stream.close()
    return len(lines)


def _open(source: PathOrStream, mode: str) -> tuple[IO[str], bool]:
    if isinstance(source, (str, os.PathLike)):
        return open(Path(source), mode, encoding="utf-8"), True
    if isinstance(source, io.TextIOBase) or hasattr(source, "read" if mode == "r" else "write"):
        return source, False  # type: ignore[return-value]
    raise TypeError(f"expected a path or text stream, got {type(source).__name__}")
