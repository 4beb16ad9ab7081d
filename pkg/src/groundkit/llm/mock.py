"""Deterministic offline stand-in for the annotation LLM.

The mock recognises the two annotation prompts by their system message. If
the new input repeats one of the prompt's own in-context examples it returns
that example's answer, as a model following the examples would. Otherwise it
applies small frequency heuristics. It is a test fixture, not a model of LLM
behaviour.
"""

from __future__ import annotations

import ast
import re
from collections import Counter
from typing import Iterable, Optional

from ..text import STOP_WORDS, content_stems, is_human_word, stem, tokenize
from .types import ChatPrompt, MockPromptError

STAGE2_MARKER = "Generate a dynamic, video-level description"
STAGE3_MARKER = "You are tasked with classifying humans and objects"

Triplet = tuple[str, str, Optional[str], tuple[tuple[str, str], ...]]

_INNER_LIST = re.compile(r"\[[^\[\]]*\]")
_TUPLE = re.compile(r"\(([^()]*)\)")
_QUOTED = re.compile(r"'([^']*)'|\"([^\"]*)\"")

STATIC_VERBS = frozenset("""
is are was were be am being been show shows shown showing display displays displayed
depict depicts depicted see seen sees appear appears appearing visible
position positioned place placed located sit sits sitting stand stands standing
contain contains containing has have having lie lies lying rest rests resting
""".split())
INSTRUMENT_VERBS = frozenset("use uses used using hold holds held holding".split())
SCENE_WORDS = frozenset("image picture photo scene frame video shot view".split())
MASS_NOUNS = frozenset("""
food water paper flour dough rice oil sugar salt soup sauce meat butter milk juice
hair cheese bread pasta batter cream paint glue sand soil wood fabric yarn
""".split())


def mock_complete(prompt: ChatPrompt) -> str:
    system = prompt.system
    if system.startswith(STAGE2_MARKER):
        return _stage2(prompt)
    if system.startswith(STAGE3_MARKER):
        return _stage3(prompt)
    raise MockPromptError("mock LLM only understands the Stage-2 and Stage-3 annotation prompts")


# --------------------------------------------------------------------------
# Stage 2: caption aggregation


def parse_svo_text(text: str) -> list[Triplet]:
    """Read triplets from an SVO listing; tolerant of unbalanced outer brackets."""
    _, _, body = text.partition("SVO:")
    body = body or text
    out: list[Triplet] = []
    for m in _INNER_LIST.finditer(body):
        group = m.group()[1:-1]
        preps = []
        for t in _TUPLE.finditer(group):
            words = _quoted(t.group(1))
            if len(words) == 2:
                preps.append((words[0], words[1]))
        words = _quoted(_TUPLE.sub("", group))
        if len(words) < 2:
            continue
        obj = words[2] if len(words) > 2 else None
        out.append((words[0], words[1], obj, tuple(preps)))
    return out


def _quoted(text: str) -> list[str]:
    return [a if a or not b else b for a, b in _QUOTED.findall(text)]


def _stage2(prompt: ChatPrompt) -> str:
    new = Counter(parse_svo_text(prompt.final_user))
    if not new:
        raise MockPromptError("no SVO triplets in the final user turn")
    for user, assistant in prompt.examples():
        if Counter(parse_svo_text(user)) == new:
            return assistant
    caption = compose_caption(list(parse_svo_text(prompt.final_user)))
    quote = '"' if "'" in caption else "'"
    return "{'CAPTION': " + quote + caption + quote + "}"


def _head(phrase: str) -> str:
    words = phrase.split()
    return words[-1] if words else phrase


def _is_human(phrase: str) -> bool:
    return any(is_human_word(w) for w in phrase.split())


_IRREGULAR = {"is": "be", "are": "be", "was": "be", "were": "be", "has": "have", "held": "hold",
              "used": "use", "using": "use", "lying": "lie", "sitting": "sit", "shown": "show",
              "seen": "see", "sees": "see", "placed": "place", "positioned": "position"}


def _lemma(verb: str) -> str:
    v = verb.lower()
    if v in _IRREGULAR:
        return _IRREGULAR[v]
    if v.endswith("ing") and len(v) > 5:
        base = v[:-3]
        if len(base) > 2 and base[-1] == base[-2] and base[-1] not in "ls":
            base = base[:-1]
        return base
    if v.endswith("ies") and len(v) > 4:
        return v[:-3] + "y"
    if re.search(r"(sh|ch|x|ss|z)es$", v):
        return v[:-2]
    if v.endswith("s") and not v.endswith("ss") and len(v) > 3:
        return v[:-1]
    return v


def _gerund(verb: str) -> str:
    v = verb.lower()
    if v.endswith("ing"):
        return v
    v = _lemma(v)
    if v.endswith("ie"):
        return v[:-2] + "ying"
    if v.endswith("e") and not v.endswith(("ee", "ye", "oe")) and len(v) > 2:
        return v[:-1] + "ing"
    vowel_groups = re.findall(r"[aeiou]+", v)
    if (len(vowel_groups) == 1 and len(v) >= 3 and v[-1] not in "aeiouwxy"
            and v[-2] in "aeiou" and v[-3] not in "aeiou"):
        return v + v[-1] + "ing"
    return v + "ing"


def _with_article(noun: str) -> str:
    words = noun.split()
    if not words:
        return noun
    first = words[0].lower()
    if first in STOP_WORDS:
        return noun
    head = words[-1].lower()
    if head in MASS_NOUNS or (head.endswith("s") and not head.endswith("ss")):
        return noun
    return ("an " if first[0] in "aeiou" else "a ") + noun


def _most_common(items: Iterable[str]) -> str | None:
    counts: Counter[str] = Counter()
    order: dict[str, int] = {}
    for i, item in enumerate(items):
        counts[item] += 1
        order.setdefault(item, i)
    if not counts:
        return None
    return max(counts, key=lambda k: (counts[k], -order[k]))


def compose_caption(triplets: list[Triplet]) -> str:
    """Two-phrase tagged caption from frame-level triplets (see module docs)."""
    humans = [s for s, _, _, _ in triplets if _is_human(s)]
    human = _most_common(humans)
    if human is None:
        return _compose_without_human(triplets)

    human_trips = [t for t in triplets if _is_human(t[0])]

    def dynamic(ts: list[Triplet]) -> list[str]:
        return [_lemma(v) for _, v, _, _ in ts
                if v.lower() not in STATIC_VERBS and v.lower() not in INSTRUMENT_VERBS
                and _lemma(v) not in STATIC_VERBS]

    verb = _most_common(dynamic(human_trips)) or _most_common(dynamic(triplets))
    instrument_objs = [o for _, v, o, _ in triplets if v.lower() in INSTRUMENT_VERBS and o]
    if verb is None:
        held = [t for t in human_trips if t[1].lower() in INSTRUMENT_VERBS]
        if not held:
            return f"<p>{_capitalise(_with_article(human))}</p> is in the video"
        verb = _lemma(held[0][1])
        pool = held
        instrument_objs = []
    else:
        pool = [t for t in triplets if _lemma(t[1]) == verb]
        human_pool = [t for t in pool if _is_human(t[0])]
        pool = human_pool or pool

    obj = _most_common(o for _, _, o, _ in pool if o)
    prep_pair = None
    if obj is None:
        obj = _most_common(p[1] for _, _, _, ps in pool for p in ps)
    else:
        prep_pair = _most_common(f"{p}\t{q}" for _, _, o, ps in pool if o == obj for p, q in ps)
    instrument = _most_common(o for o in instrument_objs if o != obj)

    parts = [f"<p>{_capitalise(_with_article(human))}</p> is {_gerund(verb)}"]
    if obj is not None:
        phrase = _with_article(obj)
        if prep_pair:
            prep, pobj = prep_pair.split("\t")
            phrase += f" {prep} {_with_article(pobj)}"
        parts.append(f"<p>{phrase}</p>")
    if instrument is not None:
        parts.append(f"using {_with_article(instrument)}")
    return " ".join(parts)


def _compose_without_human(triplets: list[Triplet]) -> str:
    nouns: list[str] = []
    for s, _, o, ps in triplets:
        nouns.extend(n for n in [s, o, *(q for _, q in ps)]
                     if n and _head(n).lower() not in SCENE_WORDS)
    first = _most_common(nouns)
    if first is None:
        raise MockPromptError("no objects to describe")
    second = _most_common(n for n in nouns if n != first)
    verbs = [_lemma(v) for s, v, _, _ in triplets
             if s == first and v.lower() not in STATIC_VERBS and _lemma(v) not in STATIC_VERBS]
    verb = _most_common(verbs)
    head = f"<p>{_capitalise(_with_article(first))}</p>"
    if second is None:
        return f"{head} is in the video"
    link = f"is {_gerund(verb)}" if verb else "is next to"
    return f"{head} {link} <p>{_with_article(second)}</p>"


def _capitalise(text: str) -> str:
    return text[:1].upper() + text[1:]


# --------------------------------------------------------------------------
# Stage 3: phrase classification


def parse_stage3_input(text: str) -> tuple[str, list[str]]:
    item = categories = None
    for line in text.splitlines():
        key, _, value = line.partition(":")
        key = key.strip().lower()
        if key == "input":
            item = _literal(value.strip())
        elif key == "categories":
            categories = _literal(value.strip())
    if not isinstance(item, str) or not isinstance(categories, list):
        raise MockPromptError("could not read Input/Categories from the final user turn")
    return item, [str(c) for c in categories]


def _literal(value: str):
    try:
        return ast.literal_eval(value)
    except (ValueError, SyntaxError):
        # in-context examples may use stray backticks as quotes
        return ast.literal_eval(value.replace("`", "'"))


_GROUPS = {
    "food": "food meal dish snack ingredient breakfast lunch dinner",
    "drink": "beverage drink liquid juice coffee tea water milk smoothie cocktail",
}
_GROUP_OF = {stem(w): g for g, words in _GROUPS.items() for w in words.split()}


def _concepts(phrase: str) -> set[str]:
    stems = content_stems(phrase)
    return stems | {"#" + _GROUP_OF[s] for s in stems if s in _GROUP_OF}


def _head_is_human(phrase: str) -> bool:
    for tok in tokenize(phrase):
        if tok in STOP_WORDS:
            continue
        return is_human_word(tok)
    return False


def classify(item: str, categories: list[str]) -> str | None:
    """Pick the category sharing most stems (or food/drink group) with ``item``.

    Human inputs only map to human categories and objects only to objects.
    """
    human = _head_is_human(item)
    concepts = _concepts(item)
    best, best_score = None, 0
    for cat in categories:
        if _head_is_human(cat) != human:
            continue
        score = len(concepts & _concepts(cat)) + (1 if human else 0)
        if score > best_score:
            best, best_score = cat, score
    return best


def _stage3(prompt: ChatPrompt) -> str:
    item, categories = parse_stage3_input(prompt.final_user)
    for user, assistant in prompt.examples():
        try:
            if parse_stage3_input(user) == (item, categories):
                return assistant
        except (MockPromptError, ValueError, SyntaxError):
            continue
    label = classify(item, categories)
    if label is None:
        return "{'CATEGORY': 'None'}"
    quote = '"' if "'" in label else "'"
    return "{'CATEGORY': " + quote + label + quote + "}"
