"""Tagged captions (``<p>...</p>`` with optional ``<DET>``) and LLM dict replies."""

from __future__ import annotations

import re
from typing import Sequence

from .core import PhraseSpan

OPEN, CLOSE, DET = "<p>", "</p>", "<DET>"
_MARKER = re.compile(r"<p>|</p>|<DET>")


class TagParseError(ValueError):
    pass


class LLMResponseError(ValueError):
    """An LLM reply that does not contain the expected dictionary."""


def normalize_whitespace(text: str) -> str:
    return " ".join(text.split())


def _byte_offsets(text: str) -> list[int]:
    """offsets[i] is the UTF-8 byte offset of character i (len(text) included)."""
    out = [0]
    for ch in text:
        out.append(out[-1] + len(ch.encode("utf-8")))
    return out


def parse_tagged_caption(text: str) -> tuple[str, list[PhraseSpan]]:
    """Strip tags from ``text`` and return the clean caption and its phrase spans.

    Whitespace runs collapse to one space and the ends are trimmed before
    offsets are computed. ``<DET>`` may only follow a closing ``</p>``.
    """
    out: list[str] = []
    pending_space = False
    open_at: int | None = None  # position in `out` where the open phrase starts
    open_has_text = False
    last_was_close = False
    char_spans: list[tuple[int, int]] = []

    pos = 0
    for m in _MARKER.finditer(text):
        chunk = text[pos:m.start()]
        for ch in chunk:
            if ch.isspace():
                pending_space = True
                continue
            if pending_space and out:
                out.append(" ")
            pending_space = False
            if open_at is not None and not open_has_text:
                open_at = len(out)
                open_has_text = True
            out.append(ch)
        if chunk.strip():
            last_was_close = False
        pos = m.end()

        tag = m.group()
        if tag == OPEN:
            if open_at is not None:
                raise TagParseError(f"nested <p> at offset {m.start()}")
            open_at, open_has_text = len(out), False
            last_was_close = False
        elif tag == CLOSE:
            if open_at is None:
                raise TagParseError(f"</p> without matching <p> at offset {m.start()}")
            if not open_has_text:
                raise TagParseError(f"empty phrase ending at offset {m.start()}")
            char_spans.append((open_at, len(out)))
            open_at = None
            last_was_close = True
        else:
            if not last_was_close:
                raise TagParseError(f"<DET> not preceded by </p> at offset {m.start()}")
            last_was_close = False

    for ch in text[pos:]:
        if ch.isspace():
            pending_space = True
            continue
        if pending_space and out:
            out.append(" ")
        pending_space = False
        out.append(ch)
    if open_at is not None:
        raise TagParseError("unclosed <p>")

    clean = "".join(out)
    offsets = _byte_offsets(clean)
    spans = [
        PhraseSpan(id=i, text=clean[s:e], char_start=offsets[s], char_end=offsets[e])
        for i, (s, e) in enumerate(char_spans)
    ]
    return clean, spans


def render_tagged_caption(clean_caption: str, spans: Sequence[PhraseSpan], emit_det: bool = False) -> str:
    """Inverse of :func:`parse_tagged_caption`."""
    data = clean_caption.encode("utf-8")
    ordered = sorted(spans, key=lambda s: (s.char_start, s.char_end))
    pieces: list[bytes] = []
    cursor = 0
    for span in ordered:
        if span.char_start < cursor:
            raise TagParseError(f"span {span.id} overlaps a previous span")
        if not 0 <= span.char_start < span.char_end <= len(data):
            raise TagParseError(f"span {span.id} offsets out of range")
        if data[span.char_start:span.char_end] != span.text.encode("utf-8"):
            raise TagParseError(f"span {span.id} text does not match caption")
        pieces.append(data[cursor:span.char_start])
        pieces.append(OPEN.encode() + data[span.char_start:span.char_end] + CLOSE.encode())
        if emit_det:
            pieces.append(DET.encode())
        cursor = span.char_end
    pieces.append(data[cursor:])
    return b"".join(pieces).decode("utf-8")


# --------------------------------------------------------------------------
# pseudo-dict replies such as {'CATEGORY': 'a woman'}

_NEXT_KEY = re.compile(r"\s*['\"][^'\"]+['\"]\s*:")


def parse_llm_dict(text: str, key: str) -> str | None:
    """Pull the string value of ``key`` out of a one-key dict in an LLM reply.

    Surrounding prose and code fences are tolerated, as are single or double
    quotes. A value may contain apostrophes: it extends to the last quote that
    is followed by ``}`` (or by ``,`` and another key). For ``CATEGORY`` the
    literal value ``None`` maps to ``None``.
    """
    if "{" not in text:
        raise LLMResponseError("no dictionary found in response")
    key_re = re.compile(r"[{,]\s*(['\"])" + re.escape(key) + r"\1\s*:\s*")
    m = key_re.search(text)
    if m is None:
        raise LLMResponseError(f"key {key!r} not found in response")
    rest = text[m.end():]

    bare = re.match(r"None\b", rest)
    if bare:
        value = None
    else:
        if not rest or rest[0] not in "'\"":
            raise LLMResponseError(f"value of {key!r} is not a quoted string")
        value = _quoted_value(rest)
        if value is None:
            raise LLMResponseError(f"unterminated value for {key!r}")

    if value is not None and key == "CATEGORY" and value.strip() == "None":
        return None
    if value is None and key != "CATEGORY":
        raise LLMResponseError(f"{key!r} has no value")
    return value


def _quoted_value(rest: str) -> str | None:
    quote = rest[0]
    body = rest[1:]
    end = None
    i = body.find(quote)
    while i != -1:
        if i > 0 and body[i - 1] == "\\":
            i = body.find(quote, i + 1)
            continue
        after = body[i + 1:].lstrip()
        if after.startswith("}"):
            end = i
            break
        if after.startswith(",") and _NEXT_KEY.match(after[1:]):
            end = i
            break
        if after.startswith(","):
            end = i  # candidate; keep looking for a later closing quote
        i = body.find(quote, i + 1)
    if end is None:
        return None
    return body[:end].replace("\\" + quote, quote)
