"""Faithfulness and evidence-alignment metrics.

AOPC_k is the mean over documents of ``p(x) - p(x^(k))`` where ``x^(k)`` is the
document with its ``k`` highest-scoring word units deleted. Drops are signed and
never clamped. When ``k`` exceeds a document's length it is truncated to the
length, and the truncated value still counts toward the mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BudgetExhausted, ContractViolation, NoEvidence
from .focus import _label, scrutinize
from .models import Budget, BlackBoxModel
from .perturb import apply_mask, derive_seed
from .segmenter import Document
from .surrogate import Attribution, KernelConfig, DEFAULT_RIDGE, top_k_features

AOPC_DEPTH = 100
RATIOS_TEXT = (1.0, 1.5, 2.0)
RATIOS_TABLE = (0.5, 1.5, 2.0)


def _scores(attr) -> np.ndarray:
    return attr.scores if isinstance(attr, Attribution) else np.asarray(attr, dtype=np.float64)


def deletion_mask(attr, n: int, k: int) -> np.ndarray:
    mask = np.ones(n, dtype=np.uint8)
    mask[top_k_features(_scores(attr), min(k, n))] = 0
    return mask


def delete_top_k(doc: Document, attr, k: int, replacement: str | None = None) -> str:
    """The document with its ``k`` most important units removed (``k = 0`` is the identity)."""
    if k < 0:
        raise ContractViolation("k must be non-negative")
    return apply_mask(deletion_mask(attr, doc.n, k), doc, replacement)


@dataclass
class AOPCCurve:
    """AOPC_k for k = 1..depth, plus the per-document rows they average."""

    values: np.ndarray
    per_example: np.ndarray
    ids: list[str] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return self.values.shape[0]

    def at(self, k: int) -> float:
        return float(self.values[k - 1])

    @property
    def aopc(self) -> float:
        return float(self.values.mean())

    @property
    def aopc_10(self) -> float:
        return self.at(10)

    @property
    def aopc_50(self) -> float:
        return self.at(50)

    @property
    def aopc_100(self) -> float:
        return self.at(100)

    def summary(self) -> dict:
        out = {"aopc": self.aopc, "depth": self.depth}
        for k in (10, 50, 100):
            if k <= self.depth:
                out[f"aopc_{k}"] = self.at(k)
        return out


def drops(model: BlackBoxModel, doc: Document, attr, ks: Sequence[int], budget: Budget,
          parallelism: int = 1, replacement: str | None = None) -> np.ndarray:
    """``p(x) - p(x^(k))`` for each ``k`` in ``ks``, from a single batched query."""
    label = _label(model, doc)
    texts = [apply_mask(np.ones(doc.n, dtype=np.uint8), doc, replacement)]
    texts += [delete_top_k(doc, attr, min(k, doc.n), replacement) for k in ks]
    preds = model.batch_query(texts, budget, doc.question, label, parallelism)
    p = np.array([x.probability for x in preds])
    return p[0] - p[1:]


def aopc_k(model: BlackBoxModel, dataset, k: int, budget: Budget, parallelism: int = 1,
           replacement: str | None = None) -> float:
    """Mean drop at depth ``k`` over ``dataset`` of ``(doc, attribution[, label])`` items.

    The label is taken from the document; a third tuple element overrides it.
    On budget exhaustion :class:`BudgetExhausted` carries the mean over the
    completed documents as ``partial`` and their count as ``index``.
    """
    if not dataset:
        raise ContractViolation("empty dataset")
    total, count = 0.0, 0
    for item in dataset:
        doc, attr = item[0], item[1]
        if len(item) > 2 and item[2] is not None:
            doc = _with_answer(doc, item[2])
        try:
            total += float(drops(model, doc, attr, [k], budget, parallelism, replacement)[0])
        except BudgetExhausted as exc:
            raise BudgetExhausted(str(exc), partial=total / count if count else None, index=count) from exc
        count += 1
    return total / count


def _with_answer(doc: Document, answer: str) -> Document:
    if doc.answer == answer:
        return doc
    return Document(doc.id, doc.text, doc.units, doc.question, answer, doc.evidence)


def aopc_summary(model: BlackBoxModel, dataset, budget: Budget, depth: int = AOPC_DEPTH,
                 parallelism: int = 1, replacement: str | None = None) -> AOPCCurve:
    if not dataset:
        raise ContractViolation("empty dataset")
    rows, ids = [], []
    ks = list(range(1, depth + 1))
    for item in dataset:
        doc, attr = item[0], item[1]
        if len(item) > 2 and item[2] is not None:
            doc = _with_answer(doc, item[2])
        try:
            rows.append(drops(model, doc, attr, ks, budget, parallelism, replacement))
        except BudgetExhausted as exc:
            partial = AOPCCurve(np.mean(rows, axis=0), np.array(rows), ids) if rows else None
            raise BudgetExhausted(str(exc), partial=partial, index=len(rows)) from exc
        ids.append(doc.id)
    per = np.array(rows)
    return AOPCCurve(per.mean(axis=0), per, ids)


@dataclass
class AlignmentReport:
    ratios: tuple[float, ...]
    ids: list[str]
    recall: np.ndarray
    evidence_words: list[int]
    retrieved: np.ndarray
    skipped: list[str] = field(default_factory=list)

    def mean(self) -> dict[float, float]:
        if not self.ids:
            return {r: float("nan") for r in self.ratios}
        return {r: float(self.recall[:, j].mean()) for j, r in enumerate(self.ratios)}


def _k_for(ratio: float, e: int) -> int:
    return max(1, math.ceil(round(ratio * e, 9)))


def recall_at_ratio(attr, evidence_units, ratio: float) -> float:
    """Fraction of evidence units among the top ``ceil(ratio * |evidence|)`` units."""
    evidence = set(int(i) for i in evidence_units)
    if not evidence:
        raise NoEvidence("no evidence units")
    k = _k_for(ratio, len(evidence))
    hits = evidence.intersection(top_k_features(_scores(attr), k))
    return len(hits) / len(evidence)


def alignment_report(items, ratios=RATIOS_TEXT) -> AlignmentReport:
    """Recall at each ratio for ``(doc, attribution)`` pairs; docs without evidence are skipped."""
    ratios = tuple(float(r) for r in ratios)
    ids, rows, sizes, retrieved, skipped = [], [], [], [], []
    for doc, attr in items:
        ev = doc.evidence_units()
        if not ev:
            skipped.append(doc.id)
            continue
        ids.append(doc.id)
        rows.append([recall_at_ratio(attr, ev, r) for r in ratios])
        sizes.append(len(ev))
        retrieved.append([min(_k_for(r, len(ev)), doc.n) for r in ratios])
    return AlignmentReport(ratios, ids, np.array(rows).reshape(len(ids), len(ratios)), sizes,
                           np.array(retrieved).reshape(len(ids), len(ratios)), skipped)


@dataclass
class NarrowingStep:
    step: int
    focus_mask: np.ndarray
    attribution: Attribution
    curve: np.ndarray
    frozen: int | None = None

    @property
    def n_active(self) -> int:
        return int(self.focus_mask.sum())

    @property
    def fidelity(self) -> float:
        return float(self.curve.mean())


@dataclass
class NarrowingTrace:
    doc_id: str
    steps: list[NarrowingStep]
    optimal: int
    stopped_early: str | None = None

    def rows(self) -> list[dict]:
        return [{"step": s.step, "n_active": s.n_active, "mean_aopc": s.fidelity,
                 "optimal": int(i == self.optimal)} for i, s in enumerate(self.steps)]

    def to_dict(self) -> dict:
        return {
            "id": self.doc_id,
            "optimal": self.optimal,
            "stopped_early": self.stopped_early,
            "steps": [
                {"step": s.step, "n_active": s.n_active, "frozen": s.frozen,
                 "focus_mask": [int(b) for b in s.focus_mask],
                 "scores": [float(x) for x in s.attribution.scores],
                 "aopc": [float(x) for x in s.curve], "mean_aopc": s.fidelity}
                for s in self.steps
            ],
        }


def _least_important(scores: np.ndarray, focus: np.ndarray) -> int:
    active = np.flatnonzero(focus)
    mag = np.abs(scores[active])
    # smallest |score|; ties go to the latest position
    order = np.lexsort((-active, mag))
    return int(active[order[0]])


def narrowing_study(doc: Document, target: BlackBoxModel, proxy: BlackBoxModel, steps: int,
                    K_per_step: int, seed: int, target_budget: Budget, proxy_budget: Budget | None = None,
                    kernel: KernelConfig = KernelConfig(), lam: float = DEFAULT_RIDGE,
                    parallelism: int = 1, depth: int = AOPC_DEPTH) -> NarrowingTrace:
    """Greedy neighbourhood narrowing with the fidelity of each neighbourhood.

    Step 0 is the full neighbourhood. At each step the proxy explanation on the
    current neighbourhood picks the least important active word, which is then
    frozen. Every neighbourhood on the path gets a target-model explanation whose
    fidelity is its mean AOPC over k = 1..min(depth, n_active). The optimal
    neighbourhood is the one with the highest fidelity (earliest on ties).
    """
    if steps < 1:
        raise ContractViolation("steps must be >= 1")
    proxy_budget = target_budget if proxy_budget is None else proxy_budget
    same = proxy is target
    focus = np.ones(doc.n, dtype=np.uint8)
    path: list[NarrowingStep] = []
    stopped = None
    frozen = None
    for step in range(steps + 1):
        s = derive_seed(seed, 3, step)
        try:
            t_exp = scrutinize(doc, focus, target, K_per_step, s, target_budget, kernel, lam, parallelism)
            ks = list(range(1, min(depth, int(focus.sum())) + 1))
            curve = drops(target, doc, t_exp.attribution, ks, target_budget, parallelism)
        except BudgetExhausted:
            stopped = "budget_exhausted"
            break
        path.append(NarrowingStep(step, focus.copy(), t_exp.attribution, curve, frozen))
        if step == steps:
            break
        if focus.sum() <= 1:
            stopped = "single_feature"
            break
        try:
            p_exp = t_exp if same else scrutinize(doc, focus, proxy, K_per_step, s, proxy_budget,
                                                  kernel, lam, parallelism)
        except BudgetExhausted:
            stopped = "budget_exhausted"
            break
        frozen = _least_important(p_exp.attribution.scores, focus)
        focus[frozen] = 0
    if not path:
        raise BudgetExhausted(f"{doc.id}: budget exhausted before the first narrowing step")
    fid = [p.fidelity for p in path]
    return NarrowingTrace(doc.id, path, int(np.argmax(fid)), stopped)
