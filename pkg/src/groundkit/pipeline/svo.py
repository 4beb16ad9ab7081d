"""Subject-verb-object triplets from frame captions.

Captions from still-image grounded captioners are long; only the
subject/verb/object skeleton plus prepositional attachments is passed on to
the caption-aggregation prompt. A small rule-based tagger is built in; callers
with a real POS tagger can pass its ``(token, tag)`` output instead (Penn
Treebank or Universal tags).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence

# coarse tags used internally
NOUN, VERB, AUX, ADJ, ADV, ADP, DET, PRON, CONJ, NUM, PART, PUNCT, OTHER = (
    "NOUN", "VERB", "AUX", "ADJ", "ADV", "ADP", "DET", "PRON", "CONJ", "NUM", "PART", "PUNCT", "X")


@dataclass(frozen=True)
class SvoTriplet:
    subject: str
    verb: str
    object: Optional[str] = None
    preps: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if not self.subject or not self.verb:
            raise ValueError("subject and verb must be non-empty")
        object.__setattr__(self, "preps", tuple((str(p), str(o)) for p, o in self.preps))

    def as_list(self) -> list:
        """``['person', 'holding', 'spoon', ('in', 'bowl')]`` form used in the prompt."""
        out: list = [self.subject, self.verb]
        if self.object:
            out.append(self.object)
        out.extend(self.preps)
        return out


def serialize_triplets(frame_triplets: Sequence[Sequence[SvoTriplet]]) -> str:
    return repr([[t.as_list() for t in frame] for frame in frame_triplets])


# --------------------------------------------------------------------------
# heuristic tagger

_DETS = set("""a an the this that these those some any another each every his her their its
my your our several both all no""".split())
_ADPS = set("""in on at with inside beside near of from into onto over under behind above below
between through across along around against toward towards by for about off out up down next
upon within underneath atop like""".split())
_AUXES = set("is are was were be been being am does do did has have had can could will would should may might".split())
_CONJS = set("and or but while then as".split())
_PRONS = set("he she it they we i you him them who which whom someone something somebody".split())
_NUMS = set("one two three four five six seven eight nine ten".split())
_ADVS = set("""also still carefully slowly quickly gently together now just very already again
currently then there here away back not never""".split())
_ADJS = set("""red green blue yellow white black brown orange pink purple gray grey silver golden
small large big little long short tall tiny huge wooden metal plastic hot cold warm fresh raw
clean dirty empty full sharp round square flat thin thick dark light bright new old present
visible other same different several""".split())
_VERBS = set("""cut stir hold use pour mix chop slice place put take open close make cook fry bake
wash clean peel add remove apply paint draw write fold sew knit play show see look watch sit
stand walk run pick grab move turn press push pull lift carry fill spread wipe brush comb dip
squeeze shake sprinkle whisk blend grate knead roll wrap tie attach insert measure hammer drill
screw decorate arrange serve eat drink taste position prepare assemble adjust check install
fix repair iron plant dig trim shave hang set lay touch rub scrub rinse dry boil heat season
demonstrate explain talk speak point wear work give get stack build glue tape sand saw seem
appear sew type read help reach flip""".split())
_IRREGULAR = {
    "held": "hold", "made": "make", "took": "take", "taken": "take", "shown": "show", "seen": "see",
    "saw": "see", "sat": "sit", "stood": "stand", "ran": "run", "drew": "draw", "drawn": "draw",
    "wrote": "write", "written": "write", "ate": "eat", "eaten": "eat", "drank": "drink",
    "shook": "shake", "put": "put", "cut": "cut", "set": "set", "laid": "lay", "hung": "hang",
    "wore": "wear", "worn": "wear", "gave": "give", "given": "give", "got": "get", "built": "build",
    "spread": "spread", "fixed": "fix",
}
_ING_NOUNS = set("""thing something anything nothing everything ceiling clothing building ring king
string wing spring icing stuffing dressing frosting topping seasoning pudding morning evening
painting drawing""".split())
_LY_NOUNS = set("family fly jelly belly lily bully butterfly".split())

_PTB = {
    "NN": NOUN, "NNS": NOUN, "NNP": NOUN, "NNPS": NOUN, "VB": VERB, "VBD": VERB, "VBG": VERB,
    "VBN": VERB, "VBP": VERB, "VBZ": VERB, "MD": AUX, "JJ": ADJ, "JJR": ADJ, "JJS": ADJ,
    "RB": ADV, "RBR": ADV, "RBS": ADV, "IN": ADP, "DT": DET, "PDT": DET, "PRP$": DET, "WP$": DET,
    "PRP": PRON, "WP": PRON, "WDT": PRON, "CC": CONJ, "CD": NUM, "RP": PART, "TO": PART,
    "EX": PRON, "POS": PART,
}
_UNIVERSAL = {
    "NOUN": NOUN, "PROPN": NOUN, "VERB": VERB, "AUX": AUX, "ADJ": ADJ, "ADV": ADV, "ADP": ADP,
    "DET": DET, "PRON": PRON, "CCONJ": CONJ, "SCONJ": CONJ, "CONJ": CONJ, "NUM": NUM,
    "PART": PART, "PUNCT": PUNCT, ".": PUNCT, "X": OTHER, "SYM": OTHER, "INTJ": OTHER,
}

_WORD = re.compile(r"[A-Za-z0-9]+(?:['’][A-Za-z]+)?|[.,;!?]")


def tokenize_caption(text: str) -> list[str]:
    return _WORD.findall(text)


def _verb_base(word: str) -> str | None:
    w = word.lower()
    if w in _IRREGULAR:
        return _IRREGULAR[w]
    if w in _VERBS:
        return w
    candidates = []
    if w.endswith("ing"):
        b = w[:-3]
        candidates += [b, b + "e", b[:-1] if len(b) > 2 and b[-1] == b[-2] else b]
    if w.endswith("ed"):
        b = w[:-2]
        candidates += [b, w[:-1], b[:-1] if len(b) > 2 and b[-1] == b[-2] else b]
    if w.endswith("ies"):
        candidates.append(w[:-3] + "y")
    if w.endswith("es"):
        candidates.append(w[:-2])
    if w.endswith("s"):
        candidates.append(w[:-1])
    for c in candidates:
        if c in _VERBS:
            return c
    return None


def heuristic_tag(tokens: Sequence[str]) -> list[tuple[str, str]]:
    """Closed-class word lists, suffix rules and a small verb lexicon."""
    tags: list[str] = []
    for tok in tokens:
        w = tok.lower()
        prev = tags[-1] if tags else None
        if w in ".,;!?":
            tag = PUNCT
        elif w in _DETS:
            tag = DET
        elif w in _AUXES or w in ("'s",):
            tag = AUX
        elif w in _ADPS:
            tag = ADP
        elif w in _CONJS:
            tag = CONJ
        elif w in _PRONS:
            tag = PRON
        elif w in _NUMS or w.isdigit():
            tag = NUM
        elif w == "to":
            tag = PART
        elif w in _ADVS:
            tag = ADV
        elif w in _ADJS:
            tag = ADJ
        elif prev in (DET, ADJ, NUM) and w.endswith("ed") and _verb_base(w):
            tag = ADJ  # "a chopped onion"
        elif _verb_base(w) is not None:
            # "a cutting board": verb forms after a determiner modify a noun
            tag = NOUN if prev in (DET, ADJ, NUM) else VERB
        elif w.endswith("ing") and w not in _ING_NOUNS and len(w) > 4:
            tag = NOUN if prev in (DET, ADJ, NUM) else VERB
        elif w.endswith("ly") and w not in _LY_NOUNS and len(w) > 4:
            tag = ADV
        elif re.search(r"(ful|ous|ive|able|ible)$", w) and len(w) > 5:
            tag = ADJ
        else:
            tag = NOUN
        tags.append(tag)
    return list(zip(tokens, tags))


def _map_tag(tag: str) -> str:
    if tag in _UNIVERSAL:
        return _UNIVERSAL[tag]
    if tag in _PTB:
        return _PTB[tag]
    if tag and not tag[0].isalpha():
        return PUNCT
    return OTHER


# --------------------------------------------------------------------------
# chunking


class _Clauses:
    def __init__(self, tagged: list[tuple[str, str]]):
        self.words = [w for w, _ in tagged]
        self.tags = [t for _, t in tagged]
        self.n = len(tagged)
        self.out: list[SvoTriplet] = []

    def tag(self, i: int) -> str | None:
        return self.tags[i] if i < self.n else None

    def noun_phrase(self, i: int) -> tuple[str | None, int]:
        """Head of the NP starting at ``i`` (compound nouns joined) and the index after it."""
        j = i
        if self.tag(j) == PRON and self.words[j].lower() in ("he", "she", "they", "it", "someone", "somebody"):
            return self.words[j].lower(), j + 1
        while self.tag(j) in (DET, NUM):
            j += 1
        while self.tag(j) in (ADJ, ADV, NUM):
            j += 1
        start = j
        while self.tag(j) == NOUN:
            j += 1
        if j == start:
            return None, i
        return " ".join(w.lower() for w in self.words[start:j]), j

    def skip_attachments(self, i: int) -> int:
        """Skip prepositional phrases hanging off a subject ("a man in a white shirt and apron")."""
        in_pp = False
        while True:
            if self.tag(i) == ADP or (in_pp and self.tag(i) == CONJ):
                np, j = self.noun_phrase(i + 1)
                if np is None:
                    return i
                i, in_pp = j, True
            else:
                return i

    def verb_group(self, i: int) -> tuple[str | None, int]:
        j = i
        last_aux = None
        while self.tag(j) in (ADV, AUX, PART):
            if self.tag(j) == AUX:
                last_aux = self.words[j].lower()
            j += 1
        if self.tag(j) == VERB:
            return self.words[j].lower(), j + 1
        if last_aux is not None:
            return last_aux, j
        return None, i

    def predicate(self, subject: str, verb: str, i: int) -> int:
        while self.tag(i) in (ADV, PART):
            i += 1
        obj, j = self.noun_phrase(i)
        if obj is not None:
            i = j
        preps: list[tuple[str, str]] = []
        while self.tag(i) == ADP:
            pobj, j = self.noun_phrase(i + 1)
            if pobj is None:
                # "next to the bowl"
                if self.tag(i + 1) in (ADP, PART):
                    pobj, j = self.noun_phrase(i + 2)
                if pobj is None:
                    break
            preps.append((self.words[i].lower(), pobj))
            i = j
        self.out.append(SvoTriplet(subject, verb, obj, tuple(preps)))

        while True:
            # participle clause: "stirring food using a spoon"
            if self.tag(i) == VERB:
                return self.predicate(subject, self.words[i].lower(), i + 1)
            if self.tag(i) in (CONJ, PUNCT) and self.words[i] not in ".;!?":
                k = i + 1
                while self.tag(k) in (CONJ, ADV):
                    k += 1
                v, k2 = self.verb_group(k)
                if v is not None:
                    return self.predicate(subject, v, k2)
                np, k3 = self.noun_phrase(k)
                if np is not None:
                    after = self.skip_attachments(k3)
                    if self.tag(after) in (AUX, VERB):
                        return k  # new clause with its own subject
                    if obj is not None:
                        self.out.append(SvoTriplet(subject, verb, np, ()))
                        i = k3
                        continue
                return k
            return i

    def run(self) -> list[SvoTriplet]:
        i = 0
        while i < self.n:
            np, j = self.noun_phrase(i)
            if np is None:
                i += 1
                continue
            k = self.skip_attachments(j)
            if self.tag(k) in (PRON,) and self.words[k].lower() in ("who", "which", "that"):
                k += 1
            verb, k2 = self.verb_group(k)
            if verb is None:
                i = j
                continue
            i = max(self.predicate(np, verb, k2), i + 1)
        return self.out


def extract_svo(caption: str, pos_tags: Sequence[tuple[str, str]] | None = None) -> list[SvoTriplet]:
    """Extract subject-verb-object triplets with prepositional attachments.

    Only clauses with a verb yield triplets; a verbless caption gives ``[]``.
    """
    if pos_tags is not None:
        tagged = [(tok, _map_tag(tag)) for tok, tag in pos_tags]
    else:
        tagged = heuristic_tag(tokenize_caption(caption))
    out: list[SvoTriplet] = []
    sentence: list[tuple[str, str]] = []
    for tok, tag in tagged + [(".", PUNCT)]:
        if tag == PUNCT and tok in ".;!?":
            if sentence:
                out.extend(_Clauses(sentence).run())
            sentence = []
        else:
            sentence.append((tok, tag))
    return out
