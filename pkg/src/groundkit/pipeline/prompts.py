"""In-context prompts for caption aggregation (Stage 2) and phrase classification (Stage 3).

System instructions are kept character-for-character, LaTeX-style quotes
included. Example payloads use plain apostrophes so they read as Python
literals.
"""

from __future__ import annotations

from typing import Sequence

from ..llm.types import ChatPrompt
from .svo import SvoTriplet, serialize_triplets

DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_TOKENS = 512

STAGE2_SYSTEM = """\
Generate a dynamic, video-level description based on frame-level inputs. The inputs include actions performed in individual frames in the form of Subject-Verb-Object (SVO) triplets along with prepositions and prepositional objects. The SVO triplets describe how actions are performed and how objects interact. Your output should be a concise narrative in 1 sentence, focusing on the most salient actions depicted across the frames. Enclose the exact text of relevant objects within <p></p> tags.

Input format:
[[`subject': `subject_text', `verb': `action_text', `object': `object_text',
`prepositions_objects': [('preposition', `prepositional_object')],],]

Output format:
A Python dictionary with a key `CAPTION', and as a value a dynamic description of the video content.

Infer motion from static descriptions. E.g. `image shows a person holding a spoon and a bowl' implies `person is stirring food in a bowl'. Enclose the human and the most frequent object that is used to perform the action within <p></p> tags. If there is no human, enclose the two most frequent objects within <p></p> tags."""

STAGE2_EXAMPLES: tuple[tuple[str, str], ...] = (
    (
        """\
SVO:
[['image', 'shows', 'cup'], ['bowl', 'is']],
[['person', 'holding', 'spoon'], ['spoon', 'is', 'bowl'],
[['image', 'shows', 'spoon', ('inside', 'bowl')]],
[['person', 'seen'], ['person', 'holding', 'spoon'], ['spoon', 'used'],
 ['spoon', 'stir', 'food', ('in', 'bowl')]],
[['person', 'holding', 'spoon'], ['spoon', 'is', 'bowl']],
[['person', 'holding', 'spoon'], ['spoon', 'is', 'bowl']],
[['person', 'holding', 'spoon'], ['spoon', 'is', 'bowl']],
['image', 'shows', 'spoon', ('in', 'bowl')]],
[['image', 'shows', 'bottle'], ['bottle', 'positioned', ('beside', 'bowl')]],
[['image', 'shows', 'bottle'], ['bottle', 'positioned', ('beside', 'cup')]],
[['image', 'shows', 'bottle'], ['image', 'placed', ('on', 'counter')],
 ['bottle', 'positioned', ('beside', 'bowl')]]]""",
        "{'CAPTION': '<p>A person</p> is stirring <p>food in a bowl</p> using a spoon'}",
    ),
    (
        """\
SVO:
[['hand', 'using', 'cutting board']],
[['woman', 'using', 'cutting board'], ['woman', 'make', 'craft project']],
[['child', 'using', 'craft cutter'], ['child', 'cut', 'object']],
[['child', 'using', 'craft cutter'], ['child', 'cut', 'paper']],
[['woman', 'using', 'craft cutter'], ['woman', 'cut', 'object']],
[['woman', 'using', 'scissors pair'], ['woman', 'cut', 'piece', ('of', 'paper')]],
[['hand', 'using', 'scissors pair'], ['hand', 'cut', 'piece', ('of', 'paper')]],
[['woman', 'using', 'scissors pair'], ['woman', 'cut', 'piece', ('of', 'paper')]],
[['woman', 'using', 'craft cutter'], ['woman', 'cut', 'object']],
[['woman', 'using', 'craft cutter'], ['woman', 'cut', 'plate']]]""",
        "{'CAPTION': '<p>A woman</p> is cutting <p>an object</p> using a craft cutter'}",
    ),
)

STAGE3_SYSTEM = """\
You are tasked with classifying humans and objects to a set of given categories.

Input format:
Human/Object (string), set of categories (lists of strings).

Output format:
A Python dictionary with a key `CATEGORY', and as a value the predicted category of the human/object.

Use `None' if the human/object doesn`t belong to any of the categories. DO NEVER classify a human as the object category and vice versa."""

STAGE3_EXAMPLES: tuple[tuple[str, str], ...] = (
    ("Input: 'person'\nCategories: ['a woman', 'her hair']", "{'CATEGORY': 'a woman'}"),
    ("Input: 'table'\nCategories: ['a person', 'a bowl']", "{'CATEGORY': 'None'}"),
    ("Input: 'a piece of food on a plate'\nCategories: ['a woman', 'a meal']", "{'CATEGORY': 'a meal'}"),
    ("Input: 'a hand'\nCategories: ['a person', 'food on a plate']", "{'CATEGORY': 'a person'}"),
    ("Input: 'a man in a white shirt and black apron is also present'\nCategories: ['a person', 'food']",
     "{'CATEGORY': 'a person'}"),
)


def build_stage2_prompt(frame_triplets: Sequence[Sequence[SvoTriplet]], *,
                        temperature: float = DEFAULT_TEMPERATURE,
                        max_tokens: int = DEFAULT_MAX_TOKENS) -> ChatPrompt:
    """Caption-aggregation prompt for the per-frame triplet lists (empty frames dropped)."""
    frames = [list(f) for f in frame_triplets if f]
    if not frames:
        raise ValueError("stage-2 prompt needs at least one frame with a triplet")
    new_input = "SVO:\n" + serialize_triplets(frames)
    return ChatPrompt.from_turns(STAGE2_SYSTEM, STAGE2_EXAMPLES, new_input, temperature, max_tokens)


def render_stage3_input(frame_phrase: str, video_phrases: Sequence[str]) -> str:
    return f"Input: {frame_phrase!r}\nCategories: {list(video_phrases)!r}"


def build_stage3_prompt(frame_phrase: str, video_phrases: Sequence[str], *,
                        temperature: float = DEFAULT_TEMPERATURE,
                        max_tokens: int = DEFAULT_MAX_TOKENS) -> ChatPrompt:
    if not video_phrases:
        raise ValueError("stage-3 prompt needs at least one category")
    return ChatPrompt.from_turns(STAGE3_SYSTEM, STAGE3_EXAMPLES, render_stage3_input(frame_phrase, video_phrases),
                   temperature, max_tokens)
