"""Approximation ratios, global-minimum probabilities and the scaling fit."""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .encoding import ENUMERATION_GUARD, EncodingError, EncodingSpec, feasible_indices
from .hamiltonian import quadratic_cost

SUPPORT_THRESHOLD = 1e-12
PERCENTILES = (5, 20, 100)
SCHEMA_VERSION = 1


class MetricError(ValueError):
    pass


class DegenerateInstanceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class InstanceGroundTruth:
    f_min: float
    f_max: float
    argmin: tuple[int, ...]
    argmax: tuple[int, ...]

    @property
    def span(self) -> float:
        return self.f_max - self.f_min

    @property
    def degenerate(self) -> bool:
        return self.span <= 1e-15 * max(abs(self.f_max), 1.0)


def feasible_costs(spec: EncodingSpec, sigma) -> tuple[np.ndarray, np.ndarray]:
    """Basis indices of the feasible set and their costs."""
    if spec.num_qubits > ENUMERATION_GUARD:
        raise EncodingError(f"{spec.num_qubits} qubits exceeds the enumeration guard")
    idx = feasible_indices(spec)
    lots = np.stack([(idx >> (t * spec.l)) & spec.max_lots for t in range(spec.n)], axis=1)
    return idx, quadratic_cost(spec, sigma, lots)


def _ties(values: np.ndarray, target: float) -> np.ndarray:
    tol = 1e-12 * max(abs(target), np.abs(values).max(initial=0.0), 1e-300)
    return np.flatnonzero(np.abs(values - target) <= tol)


def ground_truth(spec: EncodingSpec, sigma) -> InstanceGroundTruth:
    idx, costs = feasible_costs(spec, sigma)
    lo, hi = float(costs.min()), float(costs.max())
    return InstanceGroundTruth(
        lo, hi,
        tuple(sorted(int(i) for i in idx[_ties(costs, lo)])),
        tuple(sorted(int(i) for i in idx[_ties(costs, hi)])),
    )


def _normalize(value: float, truth: InstanceGroundTruth) -> float:
    if truth.degenerate:
        warnings.warn("f_max equals f_min; ratio defined as 0", DegenerateInstanceWarning, stacklevel=3)
        return 0.0
    return (value - truth.f_min) / truth.span


def alpha_mean(expectation: float, truth: InstanceGroundTruth) -> float:
    return _normalize(float(expectation), truth)


def lower_tail_mean(costs: np.ndarray, weights: np.ndarray, k: float) -> float:
    """Mass-weighted mean cost over the cheapest ``k`` percent of the distribution.

    The state straddling the boundary contributes only the mass needed to
    reach ``k / 100``.
    """
    if not 0 < k <= 100:
        raise MetricError("k must lie in (0, 100]")
    costs = np.asarray(costs, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if total <= 0:
        raise MetricError("distribution has no mass")
    order = np.argsort(costs, kind="stable")
    c, w = costs[order], weights[order] / total
    target = k / 100.0
    before = np.concatenate(([0.0], np.cumsum(w)[:-1]))
    take = np.clip(target - before, 0.0, w)
    return float(take @ c / take.sum())


def alpha_mean_k(costs: np.ndarray, weights: np.ndarray | None, k: float, truth: InstanceGroundTruth) -> float:
    """``weights=None`` treats ``costs`` as equally weighted samples."""
    costs = np.asarray(costs, dtype=float)
    weights = np.ones(len(costs)) if weights is None else weights
    if k == 100:
        return _normalize(float(np.average(costs, weights=weights)), truth)
    return _normalize(lower_tail_mean(costs, weights, k), truth)


def support_min(costs: np.ndarray, probs: np.ndarray | None = None, threshold: float = SUPPORT_THRESHOLD) -> float:
    costs = np.asarray(costs, dtype=float)
    if probs is not None:
        costs = costs[np.asarray(probs) > threshold]
    if costs.size == 0:
        raise MetricError("no samples or support states")
    return float(costs.min())


def alpha_min(costs: np.ndarray, truth: InstanceGroundTruth, probs: np.ndarray | None = None,
              threshold: float = SUPPORT_THRESHOLD) -> float:
    """Sampled mode with ``probs=None``; otherwise exact mode over the support."""
    return _normalize(support_min(costs, probs, threshold), truth)


def p_gm(indices: np.ndarray, probs: np.ndarray, truth: InstanceGroundTruth) -> float:
    """Probability of measuring any global minimiser."""
    return float(np.asarray(probs)[np.isin(indices, truth.argmin)].sum())


def p_min(costs: np.ndarray, probs: np.ndarray, threshold: float = SUPPORT_THRESHOLD) -> float:
    """Probability of the cheapest state the circuit actually reaches."""
    costs = np.asarray(costs, dtype=float)
    probs = np.asarray(probs, dtype=float)
    on = probs > threshold
    if not on.any():
        raise MetricError("empty support")
    lowest = costs[on].min()
    return float(probs[on][_ties(costs[on], lowest)].sum())


def shots_for_success(p_gm_value: float, p_success: float) -> float:
    """Shots needed to see the optimum at least once with probability ``p_success``."""
    if not 0 < p_success < 1:
        raise MetricError("success probability must lie in (0, 1)")
    if not 0 <= p_gm_value <= 1:
        raise MetricError("p_gm must lie in [0, 1]")
    if p_gm_value == 0:
        return math.inf
    if p_gm_value == 1:
        return 1.0
    # never fewer than one shot, however close p_gm is to 1
    return max(1.0, math.log1p(-p_success) / math.log1p(-p_gm_value))


@dataclass(frozen=True)
class PowerLawFit:
    a: float
    b: float
    b_stderr: float
    points: int


def fit_power_law(sizes: Sequence[float], values: Sequence[float]) -> PowerLawFit:
    """Least squares of ``log y = log a + b log B``."""
    x = np.asarray(sizes, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise MetricError("need at least 3 paired points")
    if (x <= 0).any() or (y <= 0).any():
        raise MetricError("power-law fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise MetricError("all sizes identical; slope undefined")
    design = np.column_stack([np.ones_like(lx), lx])
    coef, *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - design @ coef
    dof = x.size - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(design.T @ design)
    return PowerLawFit(float(math.exp(coef[0])), float(coef[1]), float(math.sqrt(max(cov[1, 1], 0.0))), int(x.size))


@dataclass(frozen=True)
class MetricReport:
    alpha_mean: float
    alpha_5: float
    alpha_20: float
    alpha_100: float
    alpha_min: float
    p_min: float
    p_gm: float
    expectation: float
    source: str

    def as_row(self) -> dict:
        return asdict(self)


def exact_report(indices: np.ndarray, probs: np.ndarray, costs: np.ndarray, truth: InstanceGroundTruth) -> MetricReport:
    """Metrics of an exact distribution over basis ``indices`` with ``costs``."""
    probs = np.asarray(probs, dtype=float)
    expectation = float(probs @ costs / probs.sum())
    tails = [alpha_mean_k(costs, probs, k, truth) for k in PERCENTILES]
    return MetricReport(
        alpha_mean(expectation, truth), *tails,
        alpha_min(costs, truth, probs), p_min(costs, probs), p_gm(indices, probs, truth),
        expectation, "exact-statevector",
    )


def sampled_report(sample_indices: np.ndarray, sample_costs: np.ndarray, truth: InstanceGroundTruth) -> MetricReport:
    """Metrics from measured shots; probabilities are empirical frequencies."""
    sample_costs = np.asarray(sample_costs, dtype=float)
    if sample_costs.size == 0:
        raise MetricError("no samples")
    uniq, inverse, counts = np.unique(sample_indices, return_inverse=True, return_counts=True)
    freq = counts / counts.sum()
    ucost = np.zeros(len(uniq))
    ucost[inverse] = sample_costs
    expectation = float(sample_costs.mean())
    tails = [alpha_mean_k(ucost, freq, k, truth) for k in PERCENTILES]
    return MetricReport(
        alpha_mean(expectation, truth), *tails,
        alpha_min(sample_costs, truth), p_min(ucost, freq), p_gm(uniq, freq, truth),
        expectation, f"sampled({sample_costs.size})",
    )
