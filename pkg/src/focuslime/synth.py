"""Synthetic long-document suites with planted trigger words.

Filler text is made of pseudo-words that can never collide with a trigger. The
triggers of each document are planted inside one sentence, and their character
spans (or the whole sentence's span) are recorded as the evidence.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .models import SyntheticModel, normalize_word

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr", "pl"]
_VOWELS = ["a", "e", "i", "o", "u", "ae", "io"]
_CODAS = ["", "", "n", "r", "s", "l", "x"]


@dataclass
class SyntheticSuiteSpec:
    documents: int = 20
    words_per_document: int = 2000
    paragraphs: int = 10
    min_sentence: int = 8
    max_sentence: int = 20
    triggers: list[str] = field(default_factory=lambda: ["governing", "illinois", "law"])
    trigger_paragraph: int | None = None
    evidence: str = "triggers"
    model: dict = field(default_factory=lambda: {"kind": "keyword_and", "p_on": 0.95, "p_off": 0.05})
    control_documents: int = 0
    question: str = "Does the contract specify a governing law?"
    seed: int = 0

    def __post_init__(self):
        if self.evidence not in ("triggers", "sentence"):
            raise ConfigError("evidence must be 'triggers' or 'sentence'")
        if self.paragraphs < 1 or self.words_per_document < self.paragraphs:
            raise ConfigError("need at least one word per paragraph")
        if not 1 <= self.min_sentence <= self.max_sentence:
            raise ConfigError("bad sentence length range")
        if self.max_sentence < len(self.triggers):
            raise ConfigError("sentences too short to hold every trigger")
        if self.trigger_paragraph is not None and not 0 <= self.trigger_paragraph < self.paragraphs:
            raise ConfigError("trigger_paragraph out of range")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSuiteSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown suite keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def model_definition(self) -> SyntheticModel:
        d = dict(self.model)
        kind = d.get("kind", "keyword_and")
        if kind == "keyword_and":
            d.setdefault("keywords", list(self.triggers))
        elif kind == "clause":
            d.setdefault("clauses", [list(self.triggers)])
        elif kind == "weighted_linear" and "weights" not in d:
            d["weights"] = {t: 1.0 for t in self.triggers}
        return SyntheticModel.from_dict(d)


def _vocabulary(rng: np.random.Generator, size: int, banned: set[str]) -> list[str]:
    words: list[str] = []
    seen = set(banned)
    while len(words) < size:
        n_syl = int(rng.integers(1, 4))
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    + _CODAS[rng.integers(len(_CODAS))] for _ in range(n_syl))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def _sentence_lengths(rng, total: int, lo: int, hi: int) -> list[int]:
    out = []
    while total > 0:
        n = min(int(rng.integers(lo, hi + 1)), total)
        out.append(n)
        total -= n
    return out


def _one_document(rng, spec: SyntheticSuiteSpec, vocab: list[str], planted: bool):
    per_par = [spec.words_per_document // spec.paragraphs] * spec.paragraphs
    for i in range(spec.words_per_document % spec.paragraphs):
        per_par[i] += 1
    paragraphs = [[list(rng.choice(vocab, size=n)) for n in _sentence_lengths(rng, w, spec.min_sentence,
                                                                                spec.max_sentence)]
                  for w in per_par]
    where = None
    if planted:
        p = spec.trigger_paragraph if spec.trigger_paragraph is not None else int(rng.integers(spec.paragraphs))
        fits = [i for i, s in enumerate(paragraphs[p]) if len(s) >= len(spec.triggers)]
        if not fits:
            raise ConfigError(f"paragraph {p} has no sentence long enough for the triggers")
        si = fits[int(rng.integers(len(fits)))]
        slots = sorted(rng.choice(len(paragraphs[p][si]), size=len(spec.triggers), replace=False))
        for slot, trig in zip(slots, spec.triggers):
            paragraphs[p][si][slot] = trig
        where = (p, si, set(int(s) for s in slots))

    text_parts, evidence = [], []
    pos = 0
    for pi, sentences in enumerate(paragraphs):
        if pi:
            text_parts.append("\n\n")
            pos += 2
        for si, words in enumerate(sentences):
            if si:
                text_parts.append(" ")
                pos += 1
            sent_start = pos
            for wi, w in enumerate(words):
                if wi:
                    text_parts.append(" ")
                    pos += 1
                surface = w.capitalize() if wi == 0 else w
                if wi == len(words) - 1:
                    surface += "."
                text_parts.append(surface)
                if where and (pi, si) == where[:2] and wi in where[2] and spec.evidence == "triggers":
                    evidence.append({"start": pos, "end": pos + len(w)})
                pos += len(surface)
            if where and (pi, si) == where[:2] and spec.evidence == "sentence":
                evidence.append({"start": sent_start, "end": pos})
    return "".join(text_parts), evidence


def generate_suite(spec: SyntheticSuiteSpec) -> tuple[list[dict], SyntheticModel]:
    """Dataset records (JSONL schema) plus the synthetic model that reads them."""
    model = spec.model_definition()
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    banned = {normalize_word(t) for t in spec.triggers} | set(model.triggers)
    vocab = _vocabulary(rng, 400, banned)
    records = []
    total = spec.documents + spec.control_documents
    for i in range(total):
        planted = i < spec.documents
        text, evidence = _one_document(rng, spec, vocab, planted)
        records.append({
            "id": f"synth-{i:04d}" if planted else f"control-{i - spec.documents:04d}",
            "document": text,
            "question": spec.question,
            "answer": "yes",
            "evidence": evidence,
        })
    return records, model
