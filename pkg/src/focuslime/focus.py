"""Two-phase explanation: proxy-guided scouting, then target-model scrutinizing.

Phase I starts from the whole document, splits the surviving candidates one
level down (paragraphs, then sentences, ...), scores each piece with a LIME fit
against the cheap proxy model and keeps the best ``k`` pieces. It stops once the
surviving word count is small enough for the target budget, the iteration cap
is hit, or the deepest level is reached. The survivors become the focus mask.

Phase II perturbs only the focus-mask words, queries the target model and fits
the kernel-weighted ridge surrogate on the active coordinates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import BudgetExhausted, ContractViolation, DegenerateFocus
from .models import Budget, BlackBoxModel, k_max
from .perturb import apply_mask, derive_seed, sample_constrained, sample_unconstrained
from .segmenter import Document, Level, Segment, decompose, root_segment
from .surrogate import (DEFAULT_RIDGE, Attribution, KernelConfig, SurrogateFit, fit,
                        kernel_weights, to_attribution)

logger = logging.getLogger(__name__)

METHODS = ("focus", "lime", "proxy-only", "focus-no-proxy")

_SCOUT_STREAM = 1
_SCRUTINIZE_STREAM = 2


class Decision(str, Enum):
    STOP = "stop"
    CONTINUE = "continue"


@dataclass(frozen=True)
class ScoutConfig:
    k_schedule: dict = field(default_factory=lambda: {Level.PARAGRAPH: 3, Level.SENTENCE: 5, Level.WORD: 20})
    samples_per_unit: int = 10
    samples_cap: int = 500
    density_floor: float = 5.0
    max_iter: int = 3
    deepest_level: Level = Level.SENTENCE

    def __post_init__(self):
        object.__setattr__(self, "k_schedule", {Level.parse(k): int(v) for k, v in self.k_schedule.items()})
        object.__setattr__(self, "deepest_level", Level.parse(self.deepest_level))
        if self.deepest_level == Level.DOCUMENT:
            raise ContractViolation("deepest level must be below DOCUMENT")
        if any(v < 1 for v in self.k_schedule.values()):
            raise ContractViolation("k_schedule counts must be >= 1")
        for lvl in range(self.deepest_level, Level.DOCUMENT):
            if Level(lvl) not in self.k_schedule:
                raise ContractViolation(f"k_schedule has no entry for {Level(lvl).name}")
        if min(self.samples_per_unit, self.samples_cap, self.max_iter) < 1 or self.density_floor < 1:
            raise ContractViolation("scout counts must be >= 1 and density floor >= 1")

    def proxy_samples(self, n_units: int) -> int:
        return max(2, min(self.samples_per_unit * n_units, self.samples_cap))


@dataclass
class ScoutIteration:
    iteration: int
    level: Level
    units: list[Segment]
    scores: np.ndarray
    kept: list[Segment]
    proxy_samples: int

    @property
    def coverage(self) -> int:
        return sum(s.width for s in self.kept)


@dataclass
class ScoutState:
    iteration: int
    candidates: list[Segment]
    level: Level

    @property
    def coverage(self) -> int:
        return sum(s.width for s in self.candidates)


@dataclass
class ScoutResult:
    focus_mask: np.ndarray
    trace: list[ScoutIteration]
    stop_reason: str
    budget_exhausted: bool = False

    @property
    def n_active(self) -> int:
        return int(self.focus_mask.sum())


@dataclass(frozen=True)
class ExplainConfig:
    scout: ScoutConfig = field(default_factory=ScoutConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    ridge: float = DEFAULT_RIDGE
    seed: int = 0
    parallelism: int = 1
    unlimited_samples: int = 1000
    proxy_explanation_samples: int = 10000
    max_features: int | None = None
    replacement: str | None = None


@dataclass
class Explanation:
    doc_id: str
    method: str
    attribution: Attribution
    focus_mask: np.ndarray
    fit: SurrogateFit
    K_requested: int
    K_used: int
    seed: int
    scout: ScoutResult | None = None
    budget: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def n_active(self) -> int:
        return int(self.focus_mask.sum())

    def to_dict(self, doc: Document) -> dict:
        """JSON-ready record; floats are plain Python floats so output is reproducible."""
        diag = {
            "method": self.method,
            "seed": self.seed,
            "n": doc.n,
            "n_active": self.n_active,
            "K_requested": self.K_requested,
            "K_used": self.K_used,
            "density": self.K_used / self.n_active if self.n_active else None,
            "paragraph_breaks": sorted(doc.paragraph_breaks),
            "fit": {"intercept": float(self.fit.intercept), "ridge": float(self.fit.ridge),
                    "r2": float(self.fit.r2), "K": self.fit.K},
            "budget": dict(self.budget),
            "warnings": list(self.warnings),
            "scout": None,
        }
        if self.scout is not None:
            diag["scout"] = {
                "stop_reason": self.scout.stop_reason,
                "budget_exhausted": self.scout.budget_exhausted,
                "iterations": [
                    {
                        "iteration": it.iteration,
                        "level": it.level.name.lower(),
                        "units": [[s.start, s.stop] for s in it.units],
                        "scores": [float(x) for x in it.scores],
                        "kept": [[s.start, s.stop] for s in it.kept],
                        "coverage": it.coverage,
                        "proxy_samples": it.proxy_samples,
                    }
                    for it in self.scout.trace
                ],
            }
        return {
            "id": doc.id,
            "scores": [float(x) for x in self.attribution.scores],
            "units": [{"start": u.start, "end": u.end, "surface": u.surface} for u in doc.units],
            "focus_mask": [int(b) for b in self.focus_mask],
            "diagnostics": diag,
        }


def _label(model: BlackBoxModel, doc: Document) -> str:
    return model.spec.label_no if doc.answer.strip().lower() == "no" else model.spec.label_yes


def _unit_word_masks(doc: Document, units: list[Segment], unit_masks: np.ndarray) -> np.ndarray:
    word = np.ones((unit_masks.shape[0], doc.n), dtype=np.uint8)
    for j, seg in enumerate(units):
        word[:, seg.start:seg.stop] = unit_masks[:, j:j + 1]
    return word


def proxy_valuation(doc: Document, units: list[Segment], proxy: BlackBoxModel, K_p: int, seed: int,
                    budget: Budget, kernel: KernelConfig = KernelConfig(), lam: float = DEFAULT_RIDGE,
                    parallelism: int = 1, replacement: str | None = None) -> np.ndarray:
    """LIME score per unit, treating each unit as one binary feature.

    Words outside ``units`` stay in place in every sample.
    """
    if not units:
        raise ContractViolation("proxy_valuation needs at least one unit")
    unit_masks = sample_unconstrained(len(units), K_p, seed)
    texts = [apply_mask(m, doc, replacement) for m in _unit_word_masks(doc, units, unit_masks)]
    preds = proxy.batch_query(texts, budget, doc.question, _label(proxy, doc), parallelism)
    y = np.array([p.probability for p in preds])
    focus = np.ones(len(units), dtype=np.uint8)
    w = kernel_weights(unit_masks, focus, kernel)
    return fit(unit_masks, y, w, focus, lam).coefficients


def top_k_filter(units: list[Segment], scores, k: int) -> list[Segment]:
    if k < 1:
        raise ContractViolation("k must be >= 1")
    scores = np.asarray(scores, dtype=np.float64)
    order = np.lexsort((np.arange(len(units)), -scores))[:k]
    return [units[i] for i in sorted(order)]


def _stop_reason(state: ScoutState, K_target: int, cfg: ScoutConfig) -> str | None:
    if state.coverage <= K_target / cfg.density_floor:
        return "density"
    if state.iteration >= cfg.max_iter:
        return "max_iter"
    if state.level <= cfg.deepest_level:
        return "deepest_level"
    return None


def termination_check(state: ScoutState, K_target: int, cfg: ScoutConfig) -> Decision:
    return Decision.STOP if _stop_reason(state, K_target, cfg) else Decision.CONTINUE


def _mask_from(doc: Document, segments: list[Segment]) -> np.ndarray:
    mask = np.zeros(doc.n, dtype=np.uint8)
    for seg in segments:
        mask[seg.start:seg.stop] = 1
    return mask


def scout(doc: Document, proxy: BlackBoxModel, K_target: int, cfg: ScoutConfig, seed: int,
          budget: Budget, kernel: KernelConfig = KernelConfig(), lam: float = DEFAULT_RIDGE,
          parallelism: int = 1, replacement: str | None = None) -> ScoutResult:
    if doc.n == 0:
        raise ContractViolation("cannot scout an empty document")
    state = ScoutState(0, [root_segment(doc)], Level.DOCUMENT)
    trace: list[ScoutIteration] = []
    reason = _stop_reason(state, K_target, cfg)
    exhausted = False
    while reason is None:
        t = state.iteration + 1
        level = Level(state.level - 1)
        units = [u for c in state.candidates for u in decompose(doc, c, level)]
        K_p = cfg.proxy_samples(len(units))
        try:
            scores = proxy_valuation(doc, units, proxy, K_p, derive_seed(seed, _SCOUT_STREAM, t), budget,
                                     kernel, lam, parallelism, replacement)
        except BudgetExhausted:
            logger.warning("%s: proxy budget exhausted in scouting iteration %d", doc.id, t)
            exhausted, reason = True, "budget_exhausted"
            break
        kept = top_k_filter(units, scores, cfg.k_schedule[level])
        trace.append(ScoutIteration(t, level, units, scores, kept, K_p))
        state = ScoutState(t, kept, level)
        reason = _stop_reason(state, K_target, cfg)
    return ScoutResult(_mask_from(doc, state.candidates), trace, reason, exhausted)


def scrutinize(doc: Document, focus_mask, target: BlackBoxModel, K: int, seed: int, budget: Budget,
               kernel: KernelConfig = KernelConfig(), lam: float = DEFAULT_RIDGE, parallelism: int = 1,
               max_features: int | None = None, replacement: str | None = None,
               method: str = "focus") -> Explanation:
    focus = np.asarray(focus_mask, dtype=np.uint8)
    n_active = int(focus.sum())
    if n_active == 0:
        raise DegenerateFocus("focus mask has no active units")
    if K < 2:
        raise ContractViolation("scrutinize needs K >= 2")
    masks = sample_constrained(focus, K, seed)
    texts = [apply_mask(m, doc, replacement) for m in masks]
    warnings: list[str] = []
    try:
        preds = target.batch_query(texts, budget, doc.question, _label(target, doc), parallelism)
    except BudgetExhausted as exc:
        preds = exc.partial or []
        if len(preds) < max(2, n_active + 1):
            raise
        warnings.append(f"budget exhausted after {len(preds)} of {K} samples")
        masks = masks[:len(preds)]
    y = np.array([p.probability for p in preds])
    w = kernel_weights(masks, focus, kernel)
    result = fit(masks, y, w, focus, lam, max_features)
    attribution = to_attribution(result, focus, source=method)
    return Explanation(doc.id, method, attribution, focus.copy(), result, K, len(preds), seed,
                       warnings=warnings)


def explain(doc: Document, target: BlackBoxModel, proxy: BlackBoxModel | None,
            target_budget: Budget, proxy_budget: Budget, cfg: ExplainConfig = ExplainConfig(),
            method: str = "focus") -> Explanation:
    """Explain ``target``'s answer on ``doc`` with one of :data:`METHODS`.

    * ``focus``: proxy scouting, then target scrutinizing inside the focus mask.
    * ``lime`` / ``focus-no-proxy``: target scrutinizing with an all-ones mask.
    * ``proxy-only``: the proxy model explained over the whole document.
    """
    if method not in METHODS:
        raise ContractViolation(f"unknown method {method!r}")
    if doc.n == 0:
        raise ContractViolation(f"{doc.id}: document has no words")
    full = np.ones(doc.n, dtype=np.uint8)
    original = apply_mask(full, doc, cfg.replacement)
    scrut_seed = derive_seed(cfg.seed, _SCRUTINIZE_STREAM)
    kw = dict(kernel=cfg.kernel, lam=cfg.ridge, parallelism=cfg.parallelism,
              max_features=cfg.max_features, replacement=cfg.replacement)

    if method == "proxy-only":
        if proxy is None:
            raise ContractViolation("proxy-only needs a proxy model")
        K = min(k_max(proxy_budget, proxy.prompt_cost(original, doc.question), proxy.spec,
                      ceiling=cfg.proxy_explanation_samples), cfg.proxy_explanation_samples)
        if K < 2:
            raise BudgetExhausted(f"{doc.id}: proxy budget allows only {K} queries")
        before = proxy_budget.spent(proxy.model_id)
        exp = scrutinize(doc, full, proxy, K, scrut_seed, proxy_budget, method=method, **kw)
        exp.budget = {"target_tokens": 0, "proxy_tokens": proxy_budget.spent(proxy.model_id) - before,
                      "target_tokens_phase1": 0, "target_limit": 0, "proxy_limit": proxy_budget.limit}
        return exp

    K = k_max(target_budget, target.prompt_cost(original, doc.question), target.spec,
              ceiling=cfg.unlimited_samples)
    if K < 2:
        raise BudgetExhausted(f"{doc.id}: target budget allows only {K} queries")

    t_before = target_budget.spent(target.model_id)
    p_before = proxy_budget.spent(proxy.model_id) if proxy is not None else 0
    scout_result = None
    warnings: list[str] = []
    if method == "focus":
        if proxy is None:
            raise ContractViolation("focus needs a proxy model")
        scout_result = scout(doc, proxy, K, cfg.scout, cfg.seed, proxy_budget, cfg.kernel, cfg.ridge,
                             cfg.parallelism, cfg.replacement)
        if scout_result.budget_exhausted:
            warnings.append("proxy budget exhausted during scouting; using last completed focus mask")
        focus = scout_result.focus_mask
    else:
        focus = full
    phase1_target = target_budget.spent(target.model_id) - t_before

    exp = scrutinize(doc, focus, target, K, scrut_seed, target_budget, method=method, **kw)
    exp.scout = scout_result
    exp.warnings = warnings + exp.warnings
    exp.budget = {
        "target_tokens": target_budget.spent(target.model_id) - t_before,
        "proxy_tokens": (proxy_budget.spent(proxy.model_id) - p_before) if proxy is not None else 0,
        "target_tokens_phase1": phase1_target,
        "target_limit": target_budget.limit,
        "proxy_limit": proxy_budget.limit,
    }
    return exp
