import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from groundkit.core import PhraseSpan
from groundkit.tagparse import (
    LLMResponseError,
    TagParseError,
    parse_llm_dict,
    parse_tagged_caption,
    render_tagged_caption,
)

STIRRING = "<p>A person</p> is stirring <p>food in a bowl</p> using a spoon"


def test_parse_reference_caption():
    clean, spans = parse_tagged_caption(STIRRING)
    assert clean == "A person is stirring food in a bowl using a spoon"
    assert [(s.char_start, s.char_end, s.text) for s in spans] == [(0, 8, "A person"), (21, 35, "food in a bowl")]
    assert [s.id for s in spans] == [0, 1]


def test_parse_plain_caption():
    assert parse_tagged_caption("plain caption with no tags") == ("plain caption with no tags", [])


def test_det_tokens_are_stripped():
    clean, spans = parse_tagged_caption("<p>A man</p><DET> opens <p>a box</p><DET>")
    assert clean == "A man opens a box"
    assert [s.text for s in spans] == ["A man", "a box"]


def test_det_after_whitespace_is_allowed():
    clean, spans = parse_tagged_caption("<p>A man</p> <DET> waves")
    assert clean == "A man waves"
    assert len(spans) == 1


def test_whitespace_is_normalised():
    clean, spans = parse_tagged_caption("  <p> A   man </p>\n  waves\t ")
    assert clean == "A man waves"
    assert spans[0].text == "A man"


def test_offsets_are_utf8_bytes():
    clean, spans = parse_tagged_caption("un café avec <p>crème brûlée</p>")
    start = len("un café avec ".encode("utf-8"))
    assert (spans[0].char_start, spans[0].char_end) == (start, start + len("crème brûlée".encode("utf-8")))


@pytest.mark.parametrize("bad", [
    "<p>a <p>b</p></p>",
    "a</p>",
    "<p></p> x",
    "<p>  </p>",
    "<p>open",
    "<DET> first",
    "word <DET>",
])
def test_malformed_tags_raise(bad):
    with pytest.raises(TagParseError):
        parse_tagged_caption(bad)


def test_render_reference_caption():
    clean, spans = parse_tagged_caption(STIRRING)
    assert render_tagged_caption(clean, spans) == STIRRING
    assert render_tagged_caption(clean, []) == clean
    assert render_tagged_caption(clean, spans, emit_det=True).count("</p><DET>") == 2


def test_render_rejects_overlap():
    spans = [PhraseSpan(0, "A person", 0, 8), PhraseSpan(1, "person is", 2, 11)]
    with pytest.raises(TagParseError):
        render_tagged_caption("A person is here", spans)


def random_layout(rng: random.Random) -> tuple[str, list[PhraseSpan]]:
    alphabet = "abcxyzé字ü"
    words = ["".join(rng.choice(alphabet) for _ in range(rng.randint(1, 5))) for _ in range(rng.randint(1, 10))]
    chosen = sorted(rng.sample(range(len(words)), rng.randint(0, len(words))))
    # merge some adjacent chosen words into one multi-word phrase
    groups: list[list[int]] = []
    for i in chosen:
        if groups and groups[-1][-1] == i - 1 and rng.random() < 0.5:
            groups[-1].append(i)
        else:
            groups.append([i])
    spans = []
    text = " ".join(words)
    starts = []
    pos = 0
    for w in words:
        starts.append(pos)
        pos += len(w) + 1
    for k, g in enumerate(groups):
        s, e = starts[g[0]], starts[g[-1]] + len(words[g[-1]])
        spans.append(PhraseSpan(k, text[s:e], len(text[:s].encode()), len(text[:e].encode())))
    return text, spans


def test_inverse_property_random_layouts():
    rng = random.Random(99)
    for _ in range(1000):
        clean, spans = random_layout(rng)
        for det in (False, True):
            assert parse_tagged_caption(render_tagged_caption(clean, spans, det)) == (clean, spans)


@given(st.text(alphabet="ab <>/pDET\n", max_size=40))
def test_parse_never_crashes(text):
    try:
        clean, spans = parse_tagged_caption(text)
    except TagParseError:
        return
    data = clean.encode("utf-8")
    for s in spans:
        assert data[s.char_start:s.char_end].decode("utf-8") == s.text


@given(st.text(max_size=60))
def test_clean_text_is_fixed_point(text):
    clean = " ".join(text.replace("<", " ").replace(">", " ").split())
    assert parse_tagged_caption(clean) == (clean, [])


def test_llm_dict_caption():
    reply = "{'CAPTION': '<p>A woman</p> is cutting <p>an object</p> using a craft cutter'}"
    assert parse_llm_dict(reply, "CAPTION") == "<p>A woman</p> is cutting <p>an object</p> using a craft cutter"


def test_llm_dict_none_category():
    assert parse_llm_dict("{'CATEGORY': 'None'}", "CATEGORY") is None
    assert parse_llm_dict("{'CATEGORY': None}", "CATEGORY") is None


def test_llm_dict_tolerates_prose_and_fences():
    assert parse_llm_dict("I think the answer is {'CATEGORY': 'a woman'}", "CATEGORY") == "a woman"
    assert parse_llm_dict('```python\n{"CATEGORY": "a meal"}\n```', "CATEGORY") == "a meal"


def test_llm_dict_internal_apostrophes():
    assert parse_llm_dict("{'CAPTION': '<p>A person's hands</p> knead dough'}", "CAPTION") == \
        "<p>A person's hands</p> knead dough"
    assert parse_llm_dict("{'CAPTION': 'it\\'s late'}", "CAPTION") == "it's late"
    assert parse_llm_dict("{'CAPTION': 'a, b', 'X': 'c'}", "CAPTION") == "a, b"


@pytest.mark.parametrize("reply", ["no dict here", "{'OTHER': 'x'}", "{'CAPTION': 'never closed", "{'CAPTION': 42}"])
def test_llm_dict_errors(reply):
    with pytest.raises(LLMResponseError):
        parse_llm_dict(reply, "CAPTION")


@given(st.text(max_size=80))
def test_llm_dict_never_crashes(text):
    try:
        parse_llm_dict(text, "CATEGORY")
    except LLMResponseError:
        pass
