"""Kernel-weighted ridge regression over mask space.

The fit minimises

    sum_s w_s (p_s - b - a . z_s)^2 / sum_s w_s  +  lam * ||a||^2

over the active coordinates ``z`` only, with the intercept ``b`` left
unpenalised. Weights are normalised to sum to one so that ``lam`` means the
same thing for every sample count and duplicating the sample set is a no-op.
The intercept is eliminated by weighted centering and the remaining normal
equations are solved by Cholesky factorisation, in primal form when there are
at least as many samples as features and in dual (kernel) form otherwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import ContractViolation, InsufficientSamples
from .perturb import as_mask


DEFAULT_RIDGE = 1e-3


@dataclass(frozen=True)
class KernelConfig:
    width: float = 0.25

    def __post_init__(self):
        if not self.width > 0:
            raise ContractViolation("kernel width must be positive")


@dataclass
class SurrogateFit:
    coefficients: np.ndarray
    intercept: float
    ridge: float
    r2: float
    K: int


@dataclass
class Attribution:
    scores: np.ndarray
    focus_mask: np.ndarray
    source: str = "scrutinize"

    @property
    def n(self) -> int:
        return self.scores.shape[0]


def kernel_weight(mask, focus_mask, cfg: KernelConfig = KernelConfig()) -> float:
    """exp(-d^2 / width^2) with d the fraction of active units removed."""
    mask = as_mask(mask)
    focus = as_mask(focus_mask, mask.shape[0])
    if np.any(mask[focus == 0] == 0):
        raise ContractViolation("mask removes a frozen unit")
    n_active = int(focus.sum())
    if n_active == 0:
        raise ContractViolation("focus mask has no active units")
    d = int(np.count_nonzero((focus == 1) & (mask == 0))) / n_active
    return math.exp(-(d * d) / (cfg.width * cfg.width))


def kernel_weights(masks: np.ndarray, focus_mask, cfg: KernelConfig = KernelConfig()) -> np.ndarray:
    """Vectorised :func:`kernel_weight` over the rows of ``masks``."""
    masks = np.asarray(masks, dtype=np.uint8)
    focus = as_mask(focus_mask, masks.shape[1])
    frozen = focus == 0
    if np.any(masks[:, frozen] == 0):
        raise ContractViolation("mask removes a frozen unit")
    n_active = int(focus.sum())
    if n_active == 0:
        raise ContractViolation("focus mask has no active units")
    d = (n_active - masks[:, ~frozen].sum(axis=1)) / n_active
    return np.exp(-(d * d) / (cfg.width * cfg.width))


def _solve_spd(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    return linalg.cho_solve(linalg.cho_factor(A, lower=True, check_finite=False), b, check_finite=False)


def _ridge_centered(Xw: np.ndarray, yw: np.ndarray, lam: float) -> np.ndarray:
    n_samples, n_features = Xw.shape
    if n_features <= n_samples:
        A = Xw.T @ Xw
        A[np.diag_indices_from(A)] += lam
        return _solve_spd(A, Xw.T @ yw)
    G = Xw @ Xw.T
    G[np.diag_indices_from(G)] += lam
    return Xw.T @ _solve_spd(G, yw)


def fit(masks, predictions, weights, focus_mask, lam: float = DEFAULT_RIDGE,
        max_features: int | None = None) -> SurrogateFit:
    """Weighted ridge fit of predictions on the active mask coordinates.

    ``max_features`` switches on greedy forward selection: features are added
    one at a time, each time picking the one that most reduces the weighted
    residual error, and the final model uses only the selected features.
    """
    masks = np.asarray(masks, dtype=np.float64)
    y = np.asarray(predictions, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if masks.ndim != 2 or masks.shape[0] != y.shape[0] or w.shape != y.shape:
        raise ContractViolation("masks, predictions and weights disagree in shape")
    K = y.shape[0]
    if K < 2:
        raise InsufficientSamples(f"need at least 2 samples, got {K}")
    if not np.all(np.isfinite(y)):
        raise ContractViolation("non-finite prediction")
    if not np.all(np.isfinite(w)) or np.any(w < 0) or w.sum() <= 0:
        raise ContractViolation("weights must be finite, non-negative and not all zero")
    if lam < 0:
        raise ContractViolation("ridge penalty must be non-negative")
    focus = as_mask(focus_mask, masks.shape[1])
    active = np.flatnonzero(focus)
    X = masks[:, active]

    w = w / w.sum()
    x_mean = w @ X
    if np.ptp(y) == 0:
        # constant target: the exact fit is the intercept alone
        return SurrogateFit(np.zeros(active.size), float(y[0]), lam, 1.0, K)
    y_mean = float(w @ y)
    sw = np.sqrt(w)
    Xw = (X - x_mean) * sw[:, None]
    yw = (y - y_mean) * sw

    if max_features is not None and max_features < active.size:
        selected = _forward_select(Xw, yw, lam, max_features)
    else:
        selected = np.arange(active.size)

    coef = np.zeros(active.size)
    used_lam = lam
    try:
        coef[selected] = _ridge_centered(Xw[:, selected], yw, lam)
    except linalg.LinAlgError:
        used_lam = max(lam * 10.0, 1e-8)
        warnings.warn(f"normal equations not positive definite; retrying with ridge {used_lam:g}",
                      RuntimeWarning, stacklevel=2)
        coef[selected] = _ridge_centered(Xw[:, selected], yw, used_lam)

    intercept = y_mean - float(x_mean @ coef)
    resid = yw - Xw @ coef
    ss_tot = float(yw @ yw)
    r2 = 1.0 - float(resid @ resid) / ss_tot
    return SurrogateFit(coef, intercept, used_lam, r2, K)


def _forward_select(Xw: np.ndarray, yw: np.ndarray, lam: float, max_features: int) -> np.ndarray:
    chosen: list[int] = []
    remaining = list(range(Xw.shape[1]))
    for _ in range(max_features):
        best, best_err = None, math.inf
        for j in remaining:
            cols = chosen + [j]
            try:
                c = _ridge_centered(Xw[:, cols], yw, max(lam, 1e-12))
            except linalg.LinAlgError:
                continue
            r = yw - Xw[:, cols] @ c
            err = float(r @ r)
            if err < best_err:
                best, best_err = j, err
        if best is None:
            break
        chosen.append(best)
        remaining.remove(best)
    return np.array(sorted(chosen), dtype=np.int64)


def to_attribution(fit_result: SurrogateFit, focus_mask, source: str = "scrutinize") -> Attribution:
    focus = as_mask(focus_mask)
    active = np.flatnonzero(focus)
    if active.size != fit_result.coefficients.size:
        raise ContractViolation("coefficient count does not match the focus mask")
    scores = np.zeros(focus.size)
    scores[active] = fit_result.coefficients
    return Attribution(scores, focus.copy(), source)


def top_k_features(scores, k: int) -> list[int]:
    """Indices of the ``k`` largest scores, ties broken by lower index first."""
    if isinstance(scores, Attribution):
        scores = scores.scores
    scores = np.asarray(scores, dtype=np.float64)
    if k < 0:
        raise ContractViolation("k must be non-negative")
    order = np.lexsort((np.arange(scores.size), -scores))
    return [int(i) for i in order[:k]]
