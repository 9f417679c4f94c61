"""Instruction grammar: task modes, vocabulary, goals, tokenization.

Every instruction has the surface form "<verb> the <color> <shape-synonym>".
The goal identity is the (color, shape synonym) pair; the verb is free
variation, so instructions differing only in verb denote the same goal.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

PAD, BOS, EOS = 0, 1, 2
SPECIALS = ("<pad>", "<bos>", "<eos>")
VERBS = ("reach", "touch", "contact")
DETERMINER = "the"

BASE_COLORS = ("red", "green", "blue")
EXTRA_COLORS = ("yellow", "purple", "orange", "magenta", "cyan", "brown")

SHAPE_SYNONYMS = {
    "box": ("box", "block", "square"),
    "rectangle": ("rectangle", "oblong", "brick"),
    "cylinder": ("cylinder", "barrel", "tophat"),
}
SHAPE_CLASSES = tuple(SHAPE_SYNONYMS)

# verb + "the" + color + synonym + EOS
INSTRUCTION_LENGTH = 5


class UnknownWordError(KeyError):
    pass


class TaskMode(str, Enum):
    DEFAULT = "default"
    COLOR = "color"
    SHAPE = "shape"
    COLOR_SHAPE = "color_shape"

    @classmethod
    def parse(cls, value) -> "TaskMode":
        if isinstance(value, TaskMode):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown task mode {value!r}; expected one of {[m.value for m in cls]}")


def mode_colors(mode: TaskMode) -> tuple[str, ...]:
    if mode in (TaskMode.COLOR, TaskMode.COLOR_SHAPE):
        return BASE_COLORS + EXTRA_COLORS
    return BASE_COLORS


def mode_shape_classes(mode: TaskMode) -> tuple[str, ...]:
    if mode in (TaskMode.SHAPE, TaskMode.COLOR_SHAPE):
        return SHAPE_CLASSES
    return ("box",)


def shape_class_of(synonym: str) -> str:
    for cls_name, synonyms in SHAPE_SYNONYMS.items():
        if synonym in synonyms:
            return cls_name
    raise UnknownWordError(f"{synonym!r} is not a shape synonym")


@dataclass(frozen=True)
class GoalDescriptor:
    """Goal identity: a color plus one synonym of the target's shape class."""

    color: str
    shape_synonym: str
    shape_class: str

    def __post_init__(self):
        if self.shape_synonym not in SHAPE_SYNONYMS[self.shape_class]:
            raise ValueError(
                f"{self.shape_synonym!r} is not a synonym of shape class {self.shape_class!r}"
            )


@dataclass(frozen=True)
class Instruction:
    goal: GoalDescriptor
    verb: str
    tokens: tuple[int, ...]

    @property
    def surface(self) -> str:
        return f"{self.verb} {DETERMINER} {self.goal.color} {self.goal.shape_synonym}"


class Vocabulary:
    """Deterministic token table for one task mode.

    Order: <pad>, <bos>, <eos>, verbs, "the", color words, shape synonyms.
    """

    def __init__(self, mode: TaskMode):
        self.mode = TaskMode.parse(mode)
        words = list(SPECIALS) + list(VERBS) + [DETERMINER]
        words += list(mode_colors(self.mode))
        for cls_name in mode_shape_classes(self.mode):
            words += list(SHAPE_SYNONYMS[cls_name])
        self.tokens = tuple(words)
        self._index = {w: i for i, w in enumerate(words)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def index(self, word: str) -> int:
        try:
            return self._index[word]
        except KeyError:
            raise UnknownWordError(f"{word!r} not in the {self.mode.value} vocabulary")

    def word(self, idx: int) -> str:
        return self.tokens[idx]

    def tokenize(self, text: str) -> list[int]:
        return [self.index(w) for w in text.split()]

    def detokenize(self, indices) -> str:
        words = []
        for idx in indices:
            idx = int(idx)
            if idx == EOS:
                break
            if idx in (PAD, BOS):
                continue
            words.append(self.tokens[idx])
        return " ".join(words)

    def dump(self) -> str:
        """One token per line, in index order."""
        return "\n".join(self.tokens) + "\n"


def build_vocabulary(mode: TaskMode) -> Vocabulary:
    return Vocabulary(mode)


def enumerate_goals(mode: TaskMode) -> list[GoalDescriptor]:
    """All (color, shape synonym) goal identities of the mode, fixed order."""
    mode = TaskMode.parse(mode)
    goals = []
    for color in mode_colors(mode):
        for cls_name in mode_shape_classes(mode):
            for synonym in SHAPE_SYNONYMS[cls_name]:
                goals.append(GoalDescriptor(color, synonym, cls_name))
    return goals


def make_instruction(vocab: Vocabulary, goal: GoalDescriptor, verb: str) -> Instruction:
    if goal.color not in mode_colors(vocab.mode) or goal.shape_class not in mode_shape_classes(vocab.mode):
        raise ValueError(f"goal {goal} not expressible in mode {vocab.mode.value}")
    words = [verb, DETERMINER, goal.color, goal.shape_synonym]
    tokens = tuple(vocab.tokenize(" ".join(words)) + [EOS])
    return Instruction(goal=goal, verb=verb, tokens=tokens)


def sample_instruction(vocab: Vocabulary, goal: GoalDescriptor, rng: np.random.Generator) -> Instruction:
    verb = VERBS[rng.integers(len(VERBS))]
    return make_instruction(vocab, goal, verb)


def expert_hindsight_instruction(
    vocab: Vocabulary, color: str, shape_class: str, rng: np.random.Generator
) -> Instruction:
    """Instruction describing a contacted object, synonym and verb uniform."""
    if color not in mode_colors(vocab.mode):
        raise ValueError(f"color {color!r} outside mode {vocab.mode.value}")
    if shape_class not in mode_shape_classes(vocab.mode):
        raise ValueError(f"shape class {shape_class!r} outside mode {vocab.mode.value}")
    synonyms = SHAPE_SYNONYMS[shape_class]
    synonym = synonyms[rng.integers(len(synonyms))]
    verb = VERBS[rng.integers(len(VERBS))]
    return make_instruction(vocab, GoalDescriptor(color, synonym, shape_class), verb)


def parse_instruction(vocab: Vocabulary, tokens) -> Instruction | None:
    """Instruction for a token sequence, or None if it breaks the grammar."""
    toks = [int(t) for t in tokens]
    while toks and toks[-1] == PAD:
        toks.pop()
    if len(toks) != INSTRUCTION_LENGTH or toks[-1] != EOS:
        return None
    try:
        verb, det, color, synonym = (vocab.word(t) for t in toks[:4])
    except IndexError:
        return None
    if verb not in VERBS or det != DETERMINER:
        return None
    if color not in mode_colors(vocab.mode):
        return None
    try:
        cls_name = shape_class_of(synonym)
    except UnknownWordError:
        return None
    if cls_name not in mode_shape_classes(vocab.mode):
        return None
    return Instruction(GoalDescriptor(color, synonym, cls_name), verb, tuple(toks))


def pad_tokens(tokens, length: int = INSTRUCTION_LENGTH) -> np.ndarray:
    """Fixed-length int array, PAD-filled, truncated past length."""
    arr = np.full(length, PAD, dtype=np.int64)
    toks = list(tokens)[:length]
    arr[: len(toks)] = toks
    return arr
