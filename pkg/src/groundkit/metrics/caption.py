"""Caption quality: CIDEr-D and an exact-plus-stem METEOR variant."""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

from ..text import stem, tokenize

CIDER_MAX_N = 4
CIDER_SIGMA = 6.0
CIDER_SCALE = 10.0

METEOR_ALPHA = 0.9
METEOR_GAMMA = 0.5
METEOR_BETA = 3.0


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _all_ngrams(tokens: Sequence[str]) -> Counter:
    counts: Counter = Counter()
    for n in range(1, CIDER_MAX_N + 1):
        counts.update(_ngrams(tokens, n))
    return counts


def _tfidf(counts: Counter, df: Counter, log_n: float) -> tuple[list[dict], list[float]]:
    vec: list[dict] = [{} for _ in range(CIDER_MAX_N)]
    for gram, tf in counts.items():
        vec[len(gram) - 1][gram] = tf * (log_n - math.log(max(1.0, df[gram])))
    norms = [math.sqrt(math.fsum(v * v for v in per_n.values())) for per_n in vec]
    return vec, norms


def cider_d_scores(candidates: Sequence[str], references: Sequence[Sequence[str]]) -> list[float]:
    """Per-candidate CIDEr-D (sigma 6, clipped counts, x10)."""
    if len(candidates) != len(references):
        raise ValueError("candidates and references differ in length")
    if len(candidates) < 2:
        raise ValueError("CIDEr-D needs a corpus of at least 2 candidates")
    for i, refs in enumerate(references):
        if not refs:
            raise ValueError(f"candidate {i} has no references")

    ref_tokens = [[tokenize(r) for r in refs] for refs in references]
    df: Counter = Counter()
    for refs in ref_tokens:
        df.update({g for toks in refs for g in _all_ngrams(toks)})
    log_n = math.log(float(len(candidates)))

    scores = []
    for cand, refs in zip(candidates, ref_tokens):
        c_toks = tokenize(cand)
        c_vec, c_norm = _tfidf(_all_ngrams(c_toks), df, log_n)
        per_ref = []
        for r_toks in refs:
            r_vec, r_norm = _tfidf(_all_ngrams(r_toks), df, log_n)
            delta = float(len(c_toks) - len(r_toks))
            penalty = math.exp(-(delta ** 2) / (2 * CIDER_SIGMA ** 2))
            per_n = []
            for n in range(CIDER_MAX_N):
                dot = math.fsum(min(v, r_vec[n].get(g, 0.0)) * r_vec[n].get(g, 0.0)
                                for g, v in c_vec[n].items())
                if c_norm[n] > 0 and r_norm[n] > 0:
                    dot /= c_norm[n] * r_norm[n]
                per_n.append(dot * penalty)
            per_ref.append(math.fsum(per_n) / CIDER_MAX_N)
        scores.append(CIDER_SCALE * math.fsum(per_ref) / len(per_ref))
    return scores


def cider_d(candidates: Sequence[str], references: Sequence[Sequence[str]]) -> float:
    scores = cider_d_scores(candidates, references)
    return math.fsum(scores) / len(scores)


def _align(cand: list[str], ref: list[str]) -> list[tuple[int, int]]:
    """Exact matches first, then stem matches; prefer extending the previous chunk."""
    used_c: set[int] = set()
    used_r: set[int] = set()
    pairs: dict[int, int] = {}
    for key in (lambda w: w, stem):
        c_keys = [key(w) for w in cand]
        r_keys = [key(w) for w in ref]
        for i, ck in enumerate(c_keys):
            if i in used_c:
                continue
            options = [j for j, rk in enumerate(r_keys) if j not in used_r and rk == ck]
            if not options:
                continue
            prev = pairs.get(i - 1)
            j = prev + 1 if prev is not None and prev + 1 in options else options[0]
            pairs[i] = j
            used_c.add(i)
            used_r.add(j)
    return sorted(pairs.items())


def meteor_lite(candidate: str, reference: str) -> float:
    """METEOR without the synonym stage; empty inputs score 0."""
    cand, ref = tokenize(candidate), tokenize(reference)
    if not cand or not ref:
        return 0.0
    alignment = _align(cand, ref)
    m = len(alignment)
    if m == 0:
        return 0.0
    chunks = 1
    for (ci, rj), (ci2, rj2) in zip(alignment, alignment[1:]):
        if ci2 != ci + 1 or rj2 != rj + 1:
            chunks += 1
    precision, recall = m / len(cand), m / len(ref)
    f_mean = precision * recall / (METEOR_ALPHA * precision + (1 - METEOR_ALPHA) * recall)
    penalty = METEOR_GAMMA * (chunks / m) ** METEOR_BETA
    return f_mean * (1 - penalty)


def meteor_lite_multi(candidate: str, references: Sequence[str]) -> float:
    """Best score over several references."""
    return max((meteor_lite(candidate, r) for r in references), default=0.0)
