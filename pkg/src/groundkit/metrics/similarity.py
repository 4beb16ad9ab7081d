"""Phrase similarity providers used by grounding recall."""

from __future__ import annotations

import math
from typing import Callable

import httpx

from ..text import content_stems

Similarity = Callable[[str, str], float]

BUILTIN_JACCARD = "builtin:jaccard"


def default_phrase_similarity(a: str, b: str) -> float:
    """Jaccard overlap of stemmed content words; identical (even empty) sets give 1."""
    sa, sb = content_stems(a), content_stems(b)
    if sa == sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


class HttpSimilarity:
    """Remote scorer: POST ``{"a": ..., "b": ...}`` and read ``{"score": ...}``."""

    def __init__(self, endpoint: str, timeout_s: float = 30.0, client: httpx.Client | None = None):
        self.endpoint = endpoint
        self._client = client or httpx.Client(timeout=timeout_s)

    def __call__(self, a: str, b: str) -> float:
        resp = self._client.post(self.endpoint, json={"a": a, "b": b})
        resp.raise_for_status()
        try:
            score = float(resp.json()["score"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"similarity service returned no usable score: {resp.text[:200]!r}") from exc
        if not math.isfinite(score):
            raise ValueError(f"similarity service returned {score}")
        return min(max(score, 0.0), 1.0)

    def close(self) -> None:
        self._client.close()


def resolve_similarity(name: str) -> Similarity:
    """``builtin:jaccard`` or ``http:<endpoint-url>``."""
    if name == BUILTIN_JACCARD:
        return default_phrase_similarity
    if name.startswith("https://"):
        return HttpSimilarity(name)
    if name.startswith("http:"):
        rest = name[len("http:"):]
        # a bare http:// URL is accepted as well as http:<url>
        return HttpSimilarity(name if rest.startswith("//") else rest)
    raise ValueError(f"unknown similarity provider {name!r}; use {BUILTIN_JACCARD} or http:<endpoint>")
