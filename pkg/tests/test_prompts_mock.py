"""Prompt texts against golden files, and the offline mock on the in-context pairs."""

import json
from pathlib import Path

import pytest

from groundkit.llm import ChatPrompt, MockPromptError, mock_complete
from groundkit.llm.mock import classify, compose_caption, parse_stage3_input, parse_svo_text
from groundkit.pipeline import (
    PipelineConfig,
    SvoTriplet,
    aggregate_captions,
    build_stage2_prompt,
    build_stage3_prompt,
    classify_phrase,
)
from groundkit.pipeline.prompts import STAGE2_EXAMPLES, STAGE3_EXAMPLES
from groundkit.tagparse import parse_llm_dict, render_tagged_caption
from helpers import frame

GOLDEN = Path(__file__).parent / "golden"


def golden_text(name: str) -> str:
    return (GOLDEN / name).read_text(encoding="utf-8").rstrip("\n")


def golden_pairs(name: str) -> list[tuple[str, str]]:
    return [tuple(p) for p in json.loads((GOLDEN / name).read_text(encoding="utf-8"))]


STAGE2_PAIRS = golden_pairs("stage2_examples.json")
STAGE3_PAIRS = golden_pairs("stage3_examples.json")


def triplets_of(svo_text: str) -> list[list[SvoTriplet]]:
    return [[SvoTriplet(s, v, o, p)] for s, v, o, p in parse_svo_text(svo_text)]


def test_stage2_prompt_layout():
    prompt = build_stage2_prompt([[SvoTriplet("person", "holding", "spoon")]])
    assert prompt.system == golden_text("stage2_system.txt")
    assert prompt.examples() == STAGE2_PAIRS
    assert prompt.final_user == "SVO:\n[[['person', 'holding', 'spoon']]]"
    assert prompt.temperature == 0.0 and prompt.max_tokens == 512
    roles = [m["role"] for m in prompt.to_messages()]
    assert roles == ["system"] + ["user", "assistant"] * 2 + ["user"]


def test_stage3_prompt_layout():
    prompt = build_stage3_prompt("a hand", ["a person", "a knife"])
    assert prompt.system == golden_text("stage3_system.txt")
    assert prompt.examples() == STAGE3_PAIRS
    assert prompt.final_user == "Input: 'a hand'\nCategories: ['a person', 'a knife']"


def test_prompt_builders_reject_empty_input():
    with pytest.raises(ValueError):
        build_stage2_prompt([[], []])
    with pytest.raises(ValueError):
        build_stage3_prompt("a cup", [])


def test_chat_prompt_role_checks():
    with pytest.raises(ValueError):
        ChatPrompt(())
    prompt = build_stage3_prompt("a cup", ["a mug"])
    with pytest.raises(ValueError):
        ChatPrompt(prompt.messages[:-1])


@pytest.mark.parametrize("index", range(len(STAGE2_PAIRS)))
def test_mock_aggregation_reproduces_examples(index):
    user, expected = STAGE2_PAIRS[index]
    frames = [frame("clip", 0, "unused", [])]
    calls = []

    def llm(prompt):
        calls.append(prompt)
        return mock_complete(prompt)

    clean, spans = aggregate_captions(frames, llm, triplets=triplets_of(user))
    assert len(calls) == 1
    assert llm(calls[0]) == expected
    assert render_tagged_caption(clean, spans) == parse_llm_dict(expected, "CAPTION")


@pytest.mark.parametrize("index", range(len(STAGE2_PAIRS)))
def test_caption_heuristics_reproduce_examples_without_echo(index):
    user, expected = STAGE2_PAIRS[index]
    assert compose_caption(parse_svo_text(user)) == parse_llm_dict(expected, "CAPTION")


@pytest.mark.parametrize("index", range(len(STAGE3_PAIRS)))
def test_mock_classification_reproduces_examples(index):
    user, expected = STAGE3_PAIRS[index]
    item, categories = parse_stage3_input(user)
    want = parse_llm_dict(expected, "CATEGORY")
    assert classify_phrase(item, categories, mock_complete) == want
    # the fallback heuristic agrees even without the echo
    assert classify(item, categories) == want


def test_classification_never_crosses_human_object_line():
    assert classify("a woman", ["a knife", "a bowl"]) is None
    assert classify("a knife", ["a chef", "a woman"]) is None
    assert classify("a small knife", ["a chef", "the knife"]) == "the knife"


def test_mock_caption_without_humans():
    triplets = [("bottle", "positioned", None, (("beside", "bowl"),)), ("image", "shows", "bottle", ())]
    assert compose_caption(triplets) == "<p>A bottle</p> is next to <p>a bowl</p>"


def test_mock_rejects_foreign_prompts():
    with pytest.raises(MockPromptError):
        mock_complete(ChatPrompt.from_turns("You are a poet.", [], "Write a haiku."))


def test_aggregation_retries_malformed_replies():
    replies = iter(["sorry, no idea", "{'CAPTION': 'no tags here'}", "{'CAPTION': '<p>A cat</p> runs'}"])
    clean, spans = aggregate_captions([frame("c", 0, "A cat runs.", [])], lambda p: next(replies),
                                      PipelineConfig(max_retries=2))
    assert clean == "A cat runs" and spans[0].text == "A cat"


def test_classification_maps_unknown_answers_to_none():
    answers = iter(["{'CATEGORY': 'a dog'}"] * 3)
    assert classify_phrase("a cat", ["a person"], lambda p: next(answers)) is None


def test_examples_constants_match_goldens():
    assert list(STAGE2_EXAMPLES) == STAGE2_PAIRS
    assert list(STAGE3_EXAMPLES) == STAGE3_PAIRS
