"""Word tokenization and the document -> paragraph -> sentence -> word hierarchy.

A word is a maximal run of non-whitespace characters; punctuation stays attached
("Illinois." is one unit). Paragraphs are separated by blank lines (a gap
containing two or more newlines). A sentence ends after a word whose last
character, ignoring closing quotes and brackets, is one of ``. ! ? :``, or at the
end of its paragraph.

Segment spans are half-open ``[start, stop)`` ranges over word-unit indices.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property

from .errors import ContractViolation

_WORD_RE = re.compile(r"\S+")
_SENTENCE_END = frozenset(".!?:")
_CLOSERS = "\"')]}”’"


class Level(IntEnum):
    WORD = 0
    SENTENCE = 1
    PARAGRAPH = 2
    DOCUMENT = 3

    @classmethod
    def parse(cls, value: "str | Level") -> "Level":
        if isinstance(value, Level):
            return value
        if isinstance(value, int):
            return cls(value)
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise ContractViolation(f"unknown level {value!r}") from None


@dataclass(frozen=True)
class WordUnit:
    index: int
    start: int
    end: int
    surface: str


@dataclass(frozen=True)
class Document:
    """A tokenized document plus the question/answer metadata it is explained for."""

    id: str
    text: str
    units: tuple[WordUnit, ...]
    question: str = ""
    answer: str = "yes"
    evidence: tuple[tuple[int, int], ...] = ()

    @classmethod
    def from_text(cls, text: str, id: str = "doc", question: str = "", answer: str = "yes",
                  evidence=()) -> "Document":
        spans = tuple((int(s), int(e)) for s, e in evidence)
        for s, e in spans:
            if not 0 <= s < e <= len(text):
                raise ContractViolation(f"evidence span ({s}, {e}) outside document of length {len(text)}")
        return cls(id=id, text=text, units=tuple(tokenize(text)), question=question,
                   answer=answer, evidence=spans)

    @property
    def n(self) -> int:
        return len(self.units)

    def gap_after(self, i: int) -> str:
        """Whitespace between unit ``i`` and unit ``i + 1``."""
        return self.text[self.units[i].end:self.units[i + 1].start]

    @cached_property
    def paragraph_breaks(self) -> frozenset[int]:
        """Indices ``i`` such that a blank line separates unit ``i`` from ``i + 1``."""
        return frozenset(i for i in range(self.n - 1) if self.gap_after(i).count("\n") >= 2)

    def evidence_units(self) -> list[int]:
        """Indices of word units overlapping any evidence span."""
        return [u.index for u in self.units
                if any(u.start < e and s < u.end for s, e in self.evidence)]


@dataclass(frozen=True)
class Segment:
    level: Level
    start: int
    stop: int
    children: tuple["Segment", ...] = field(default=(), compare=False)

    @property
    def width(self) -> int:
        return self.stop - self.start

    def indices(self) -> range:
        return range(self.start, self.stop)


@dataclass(frozen=True)
class SegmentTree:
    root: Segment
    document: Document

    def level(self, level: Level) -> list[Segment]:
        """All segments at ``level`` in document order."""
        out: list[Segment] = []
        stack = [self.root]
        while stack:
            seg = stack.pop()
            if seg.level == level:
                out.append(seg)
            elif seg.level > level:
                stack.extend(reversed(seg.children))
        return out


def tokenize(text: str) -> list[WordUnit]:
    return [WordUnit(i, m.start(), m.end(), m.group()) for i, m in enumerate(_WORD_RE.finditer(text))]


def _ends_sentence(surface: str) -> bool:
    stripped = surface.rstrip(_CLOSERS)
    return bool(stripped) and stripped[-1] in _SENTENCE_END


def _split(start: int, stop: int, cut_after) -> list[tuple[int, int]]:
    spans = []
    lo = start
    for i in range(start, stop - 1):
        if cut_after(i):
            spans.append((lo, i + 1))
            lo = i + 1
    if stop > lo:
        spans.append((lo, stop))
    return spans


def decompose(doc: Document, parent: Segment, target_level: Level | str) -> list[Segment]:
    """Split ``parent`` into the segments one level below it."""
    target_level = Level.parse(target_level)
    if target_level != parent.level - 1:
        raise ContractViolation(f"cannot decompose {parent.level.name} into {target_level.name}")
    if target_level == Level.WORD:
        return [Segment(Level.WORD, i, i + 1) for i in parent.indices()]
    if target_level == Level.PARAGRAPH:
        breaks = doc.paragraph_breaks
        spans = _split(parent.start, parent.stop, breaks.__contains__)
    else:
        units, breaks = doc.units, doc.paragraph_breaks
        spans = _split(parent.start, parent.stop,
                       lambda i: i in breaks or _ends_sentence(units[i].surface))
    return [Segment(target_level, a, b) for a, b in spans]


def root_segment(doc: Document) -> Segment:
    return Segment(Level.DOCUMENT, 0, doc.n)


def build_tree(doc: Document, deepest_level: Level | str = Level.WORD) -> SegmentTree:
    deepest_level = Level.parse(deepest_level)

    def grow(seg: Segment) -> Segment:
        if seg.level <= deepest_level or seg.level == Level.WORD:
            return seg
        kids = tuple(grow(c) for c in decompose(doc, seg, seg.level - 1))
        return Segment(seg.level, seg.start, seg.stop, kids)

    return SegmentTree(grow(root_segment(doc)), doc)
