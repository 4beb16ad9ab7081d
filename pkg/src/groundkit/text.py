"""Tokenisation, stemming and word lists shared by the metrics and the mock LLM."""

from __future__ import annotations

import re
from functools import lru_cache

from nltk.stem.porter import PorterStemmer

_TOKEN = re.compile(r"[a-z0-9]+(?:'[a-z]+)?")
_stemmer = PorterStemmer()

STOP_WORDS = frozenset("""
a an the this that these those some any another other each every
his her their its my your our whose
of in on at to for with by from into onto over under inside beside near
next behind above below between through across along around about off out up down
and or but nor so then while also too very just
is are was were be been being am has have had do does did
it he she they him them who which what there here s
""".split())

# Person words; also used to keep Stage-3 classification from crossing human/object.
HUMAN_WORDS = frozenset("""
person people human man men woman women child children kid kids boy boys girl girls
baby lady ladies gentleman guy guys hand hands finger fingers arm arms chef cook
worker individual someone somebody adult teenager player user mother father
""".split())


def tokenize(text: str) -> list[str]:
    """Lower-cased word tokens; punctuation is dropped."""
    return _TOKEN.findall(text.lower())


@lru_cache(maxsize=65536)
def stem(word: str) -> str:
    return _stemmer.stem(word.lower())


def content_stems(text: str) -> set[str]:
    return {stem(t) for t in tokenize(text) if t not in STOP_WORDS}


def is_human_word(word: str) -> bool:
    w = word.lower()
    if w.endswith("'s"):
        w = w[:-2]
    return w in HUMAN_WORDS
