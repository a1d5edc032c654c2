"""Binary masks over word units, text reconstruction and the two sampling laws.

Randomness comes from numpy's PCG64 bit generator seeded directly with the
caller's integer seed. Mask bits are read from the raw 64-bit PCG64 output
stream, least significant bit first, row-major over ``(sample, active unit)``.
Because only raw generator words are used (no numpy distribution code), the
masks for a given seed are identical on every platform and numpy version that
ships PCG64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DegenerateFocus
from .segmenter import Document

PLACEHOLDER = "[MASK]"


@dataclass
class PerturbedSample:
    mask: np.ndarray
    text: str
    prediction: float | None = None
    weight: float | None = None


def as_mask(bits, n: int | None = None) -> np.ndarray:
    arr = np.asarray(bits, dtype=np.uint8)
    if arr.ndim != 1 or np.any(arr > 1):
        raise ContractViolation("mask must be a 1-d vector of 0/1 values")
    if n is not None and arr.shape[0] != n:
        raise ContractViolation(f"mask length {arr.shape[0]} != unit count {n}")
    return arr


def apply_mask(mask, doc: Document, replacement: str | None = None) -> str:
    """Rebuild the document text keeping only units whose bit is 1.

    Surviving units are joined by single spaces; a blank line is emitted where
    the original had a paragraph break between two surviving units. With
    ``replacement`` set, removed units become that token instead of vanishing.
    """
    mask = as_mask(mask, doc.n)
    if replacement is None:
        keep = np.flatnonzero(mask)
        words = [doc.units[i].surface for i in keep]
    else:
        keep = np.arange(doc.n)
        words = [u.surface if b else replacement for u, b in zip(doc.units, mask)]
    if not words:
        return ""
    cum = _break_counts(doc)
    seps = np.where(cum[keep[1:]] > cum[keep[:-1]], "\n\n", " ")
    out = [words[0]]
    for sep, word in zip(seps, words[1:]):
        out.append(sep)
        out.append(word)
    return "".join(out)


def _break_counts(doc: Document) -> np.ndarray:
    # cum[j] = number of paragraph breaks after units 0..j-1
    flags = np.zeros(doc.n, dtype=np.int64)
    if doc.paragraph_breaks:
        flags[sorted(doc.paragraph_breaks)] = 1
    return np.concatenate(([0], np.cumsum(flags)))[:doc.n]


def _random_bits(rows: int, cols: int, seed: int) -> np.ndarray:
    if rows == 0 or cols == 0:
        return np.zeros((rows, cols), dtype=np.uint8)
    n_bits = rows * cols
    words = np.random.PCG64(seed).random_raw((n_bits + 63) // 64)
    raw = np.asarray(words, dtype="<u8").view(np.uint8)
    bits = np.unpackbits(raw, bitorder="little")[:n_bits]
    return bits.reshape(rows, cols)


def sample_unconstrained(n: int, K: int, seed: int) -> np.ndarray:
    """``K`` masks over ``n`` units, bits i.i.d. Bernoulli(0.5); row 0 is all ones."""
    if n < 1 or K < 1:
        raise ContractViolation("sample_unconstrained needs n >= 1 and K >= 1")
    masks = np.ones((K, n), dtype=np.uint8)
    masks[1:] = _random_bits(K - 1, n, seed)
    return masks


def sample_constrained(focus_mask, K: int, seed: int) -> np.ndarray:
    """``K`` masks where frozen units (focus bit 0) are always kept.

    Active units are Bernoulli(0.5). Row 0 is the all-ones anchor. With an
    all-ones focus mask this draws exactly the same masks as
    :func:`sample_unconstrained` for the same seed.
    """
    focus = as_mask(focus_mask)
    if K < 1:
        raise ContractViolation("sample_constrained needs K >= 1")
    active = np.flatnonzero(focus)
    if active.size == 0:
        raise DegenerateFocus("focus mask has no active units")
    masks = np.ones((K, focus.size), dtype=np.uint8)
    masks[1:, active] = _random_bits(K - 1, active.size, seed)
    return masks


def derive_seed(seed: int, *stream: int) -> int:
    """Independent child seed for a named sub-stream of one explanation."""
    ss = np.random.SeedSequence([int(seed) & (2**63 - 1), *stream])
    return int(ss.generate_state(1, np.uint64)[0])
