"""Shot-budgeted objective evaluation and the classical optimizers.

Every optimizer minimises a callable wrapped in :class:`CountedObjective`,
which charges each call to a :class:`ShotBudget` and records a trace.  The
estimation cap is soft: optimizers stop starting new work once it is reached
but may finish the local-search iteration in progress.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln

from .circuits import AnsatzConfig, FeasibleAnsatz
from .simulator import sample_from_probabilities

TWO_PI = 2.0 * math.pi


class BudgetExceeded(RuntimeError):
    pass


@dataclass
class ShotBudget:
    shots_per_estimate: int = 16
    max_estimations: int = 2000
    final_shots: int = 65536
    # hard stop, only reached if an optimizer ignores the soft cap
    overshoot: int = 64
    estimations: int = 0
    function_accesses: int = 0

    def __post_init__(self):
        if self.shots_per_estimate < 1:
            raise ValueError("shots_per_estimate must be at least 1")

    @property
    def exhausted(self) -> bool:
        return self.estimations >= self.max_estimations

    @property
    def remaining(self) -> int:
        return max(self.max_estimations - self.estimations, 0)

    def charge(self, shots: int) -> None:
        if self.estimations >= self.max_estimations + self.overshoot:
            raise BudgetExceeded(f"estimation cap {self.max_estimations} exceeded")
        self.estimations += 1
        self.function_accesses += shots

    def child(self, max_estimations: int) -> "ShotBudget":
        return ShotBudget(self.shots_per_estimate, max_estimations, self.final_shots, self.overshoot)


@dataclass
class TraceRow:
    index: int
    params: tuple[float, ...]
    estimate: float
    function_accesses: int
    stage: int = 0


@dataclass
class OptResult:
    best_params: np.ndarray
    best_estimate: float
    trace: list[TraceRow]
    seed: int | None = None
    estimations: int = 0
    function_accesses: int = 0
    stages: list["OptResult"] = field(default_factory=list)
    message: str = ""

    def trace_csv(self) -> str:
        width = max((len(r.params) for r in self.trace), default=0)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["eval_index", "stage", *(f"param_{i}" for i in range(width)), "estimate", "cumulative_n_f"])
        for r in self.trace:
            pad = [repr(float(x)) for x in r.params] + [""] * (width - len(r.params))
            writer.writerow([r.index, r.stage, *pad, repr(float(r.estimate)), r.function_accesses])
        return buf.getvalue()


class CountedObjective:
    """Wrap ``fn(params) -> float``, charging ``shots`` per call and tracing it."""

    def __init__(self, fn: Callable[[np.ndarray], float], budget: ShotBudget, shots: int | None = None, stage: int = 0):
        self.fn = fn
        self.budget = budget
        self.shots = budget.shots_per_estimate if shots is None else shots
        self.stage = stage
        self.trace: list[TraceRow] = []
        self.best_x: np.ndarray | None = None
        self.best_f = math.inf

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        self.budget.charge(self.shots)
        f = float(self.fn(x))
        self.trace.append(TraceRow(len(self.trace), tuple(x), f, self.budget.function_accesses, self.stage))
        if f < self.best_f:
            self.best_f, self.best_x = f, x.copy()
        return f

    @property
    def exhausted(self) -> bool:
        return self.budget.exhausted

    def result(self, seed=None, message: str = "") -> OptResult:
        return OptResult(
            self.best_x if self.best_x is not None else np.zeros(0),
            self.best_f,
            self.trace,
            seed,
            len(self.trace),
            sum(self.shots for _ in self.trace),
            message=message,
        )


# expectation estimation ---------------------------------------------------

def estimate_expectation(
    probs: np.ndarray, costs: np.ndarray, shots: int, rng: np.random.Generator, budget: ShotBudget | None = None
) -> float:
    """Sample mean of the cost over ``shots`` measurements of ``probs``."""
    if budget is not None:
        if budget.exhausted:
            raise BudgetExceeded("estimation budget exhausted")
        budget.charge(shots)
    idx = sample_from_probabilities(probs, shots, rng)
    return float(costs[idx].mean())


def sampled_objective(
    engine: FeasibleAnsatz,
    template: AnsatzConfig,
    lots: Sequence[int],
    shots: int,
    rng: np.random.Generator,
    embed: Callable[[np.ndarray], np.ndarray] | None = None,
) -> Callable[[np.ndarray], float]:
    """Objective returning an ``shots``-sample estimate of the energy at ``params``."""

    def fn(x: np.ndarray) -> float:
        full = embed(x) if embed is not None else x
        probs = engine.probabilities(template.with_params(full), lots)
        idx = sample_from_probabilities(probs, shots, rng)
        return float(engine.costs[idx].mean())

    return fn


def exact_objective(engine: FeasibleAnsatz, template: AnsatzConfig, lots: Sequence[int]) -> Callable[[np.ndarray], float]:
    def fn(x: np.ndarray) -> float:
        probs = engine.probabilities(template.with_params(x), lots)
        return float(probs @ engine.costs)

    return fn


# local search -------------------------------------------------------------

def _wrap(x: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    return lower + np.mod(x - lower, upper - lower)


def nelder_mead(
    f: Callable[[np.ndarray], float],
    x0: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    max_iter: int,
    should_stop: Callable[[], bool] = lambda: False,
    step: float = 0.25,
    xatol: float = 1e-4,
    fatol: float = 1e-8,
    fx0: float | None = None,
) -> tuple[np.ndarray, float]:
    """Box-clipped simplex descent.

    ``should_stop`` is polled only between iterations, so an iteration that
    has started always completes.
    """
    dim = len(x0)
    clip = lambda x: np.clip(x, lower, upper)
    simplex = [clip(np.asarray(x0, dtype=float))]
    for i in range(dim):
        v = simplex[0].copy()
        v[i] = v[i] + step if v[i] + step <= upper[i] else v[i] - step
        simplex.append(clip(v))
    values = [f(simplex[0]) if fx0 is None else fx0] + [f(v) for v in simplex[1:]]
    for _ in range(max_iter):
        order = np.argsort(values, kind="stable")
        simplex = [simplex[i] for i in order]
        values = [values[i] for i in order]
        spread_x = max(np.max(np.abs(v - simplex[0])) for v in simplex[1:]) if dim else 0.0
        if spread_x <= xatol and max(abs(v - values[0]) for v in values[1:]) <= fatol:
            break
        if spread_x <= xatol * 1e-3 or should_stop():
            break
        centroid = np.mean(simplex[:-1], axis=0)
        xr = clip(centroid + (centroid - simplex[-1]))
        fr = f(xr)
        if fr < values[0]:
            xe = clip(centroid + 2.0 * (centroid - simplex[-1]))
            fe = f(xe)
            simplex[-1], values[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
        else:
            if fr < values[-1]:
                xc = clip(centroid + 0.5 * (xr - centroid))
            else:
                xc = clip(centroid + 0.5 * (simplex[-1] - centroid))
            fc = f(xc)
            if fc < min(fr, values[-1]):
                simplex[-1], values[-1] = xc, fc
            else:
                for i in range(1, dim + 1):
                    simplex[i] = clip(simplex[0] + 0.5 * (simplex[i] - simplex[0]))
                    values[i] = f(simplex[i])
    best = int(np.argmin(values))
    return simplex[best], values[best]


# generalized simulated annealing --------------------------------------------

@dataclass(frozen=True)
class AnnealingHyper:
    visiting: float = 2.62
    accept: float = -5.0
    initial_temp: float = 5230.0
    restart_temp_ratio: float = 2e-5
    max_iter: int = 1000
    local_search: bool = True
    local_step: float = 0.25
    local_xatol: float = 1e-4


class _TsallisVisitor:
    """Heavy-tailed step generator of the generalized annealing scheme."""

    TAIL_LIMIT = 1e8

    def __init__(self, qv: float, rng: np.random.Generator):
        self.qv = qv
        self.rng = rng
        self._f2 = math.exp((4.0 - qv) * math.log(qv - 1.0))
        self._f3 = math.exp((2.0 - qv) * math.log(2.0) / (qv - 1.0))
        self._f4p = math.sqrt(math.pi) * self._f2 / (self._f3 * (3.0 - qv))
        self._f5 = 1.0 / (qv - 1.0) - 0.5
        self._f6 = math.pi * (1.0 - self._f5) / math.sin(math.pi * (1.0 - self._f5)) / math.exp(gammaln(2.0 - self._f5))

    def step(self, temperature: float, size: int) -> np.ndarray:
        qv = self.qv
        f1 = math.exp(math.log(temperature) / (qv - 1.0))
        f4 = self._f4p * f1
        sigma = math.exp(-(qv - 1.0) * math.log(self._f6 / f4) / (3.0 - qv))
        x = sigma * self.rng.normal(size=size)
        y = self.rng.normal(size=size)
        den = np.exp((qv - 1.0) * np.log(np.abs(y)) / (3.0 - qv))
        out = x / den
        return np.clip(out, -self.TAIL_LIMIT, self.TAIL_LIMIT)


def dual_annealing(
    objective: Callable[[np.ndarray], float],
    bounds: Sequence[tuple[float, float]],
    budget: ShotBudget,
    rng: np.random.Generator,
    hyper: AnnealingHyper = AnnealingHyper(),
    x0: Sequence[float] | None = None,
    seed: int | None = None,
) -> OptResult:
    """Generalized simulated annealing with periodic bounds and simplex refinement.

    Candidates visit all coordinates at once and then one coordinate at a
    time; acceptance follows the generalized Metropolis rule with parameter
    ``accept``.  A local simplex search polishes every chain that improves on
    the best point, and the schedule restarts from a random point when the
    temperature falls below ``restart_temp_ratio * initial_temp``.
    """
    obj = objective if isinstance(objective, CountedObjective) else CountedObjective(objective, budget)
    lower = np.array([b[0] for b in bounds], dtype=float)
    upper = np.array([b[1] for b in bounds], dtype=float)
    dim = len(bounds)
    visitor = _TsallisVisitor(hyper.visiting, rng)
    qv, qa = hyper.visiting, hyper.accept
    t1 = math.exp((qv - 1.0) * math.log(2.0)) - 1.0
    ls_iters = min(max(6 * dim, 100), 1000)

    def stop() -> bool:
        return obj.exhausted

    def local(x, fx):
        if not hyper.local_search:
            return x, fx
        return nelder_mead(obj, x, lower, upper, ls_iters, stop, hyper.local_step, hyper.local_xatol, fx0=fx)

    current = np.asarray(x0, dtype=float) if x0 is not None else lower + rng.random(dim) * (upper - lower)
    current = np.clip(current, lower, upper)
    if stop():
        return obj.result(seed, "budget exhausted before start")
    f_current = obj(current)
    best_x, best_f = current.copy(), f_current
    step_count = 0
    message = "schedule finished"
    for it in range(hyper.max_iter):
        if stop():
            message = "budget exhausted"
            break
        s = float(step_count + 2)
        temperature = hyper.initial_temp * t1 / (math.exp((qv - 1.0) * math.log(s)) - 1.0)
        step_count += 1
        if temperature < hyper.restart_temp_ratio * hyper.initial_temp:
            current = lower + rng.random(dim) * (upper - lower)
            f_current = obj(current)
            step_count = 0
            continue
        t_accept = temperature / float(step_count + 1)
        improved = False
        for j in range(2 * dim):
            if stop():
                break
            if j < dim:
                cand = current + visitor.step(temperature, dim)
            else:
                cand = current.copy()
                cand[j - dim] += visitor.step(temperature, 1)[0]
            cand = _wrap(cand, lower, upper)
            f_cand = obj(cand)
            if f_cand < f_current:
                current, f_current = cand, f_cand
                if f_cand < best_f:
                    best_x, best_f, improved = cand.copy(), f_cand, True
            else:
                base = 1.0 - (1.0 - qa) * (f_cand - f_current) / t_accept
                prob = 0.0 if base <= 0 else math.exp(math.log(base) / (1.0 - qa))
                if rng.random() <= prob:
                    current, f_current = cand, f_cand
        if improved and not stop():
            x_ls, f_ls = local(best_x, best_f)
            if f_ls < best_f:
                best_x, best_f = x_ls, f_ls
            current, f_current = x_ls, f_ls
    return obj.result(seed, message)


# linear-surrogate trust region ---------------------------------------------

@dataclass(frozen=True)
class CobylaHyper:
    rhobeg: float = 0.5
    rhoend: float = 1e-6


def cobyla_style(
    objective: Callable[[np.ndarray], float],
    x0: Sequence[float],
    budget: ShotBudget,
    bounds: Sequence[tuple[float, float]] | None = None,
    hyper: CobylaHyper = CobylaHyper(),
    seed: int | None = None,
) -> OptResult:
    obj = objective if isinstance(objective, CountedObjective) else CountedObjective(objective, budget)
    x0 = np.asarray(x0, dtype=float)
    if budget.exhausted:
        return obj.result(seed, "budget exhausted before start")
    constraints = []
    if bounds is not None:
        for i, (lo, hi) in enumerate(bounds):
            constraints.append({"type": "ineq", "fun": lambda x, i=i, lo=lo: x[i] - lo})
            constraints.append({"type": "ineq", "fun": lambda x, i=i, hi=hi: hi - x[i]})
    message = ""
    try:
        res = minimize(
            obj,
            x0,
            method="COBYLA",
            constraints=constraints,
            options={"rhobeg": hyper.rhobeg, "tol": hyper.rhoend, "maxiter": max(budget.remaining, 1)},
        )
        message = str(res.message)
    except BudgetExceeded:
        message = "budget exhausted"
    return obj.result(seed, message)


# layerwise growth -----------------------------------------------------------

Inner = Callable[[CountedObjective, list[tuple[float, float]], np.ndarray, ShotBudget], None]


def make_inner(name: str, rng: np.random.Generator, anneal: AnnealingHyper = AnnealingHyper(), cobyla: CobylaHyper = CobylaHyper()) -> Inner:
    """Adapter so layerwise drivers can call either optimizer uniformly."""

    def run(obj: CountedObjective, bounds, x0, budget) -> None:
        if name == "dual_annealing":
            dual_annealing(obj, bounds, budget, rng, anneal, x0=x0)
        elif name == "cobyla":
            cobyla_style(obj, x0, budget, bounds, cobyla)
        else:
            raise ValueError(f"unknown optimizer {name!r}")

    return run


def layerwise(
    driver: str,
    target_p: int,
    objective_for: Callable[[int], Callable[[np.ndarray], float]],
    inner: Inner,
    per_layer_budget: int,
    shots: int,
    rng: np.random.Generator,
    seed: int | None = None,
) -> OptResult:
    """Grow the ansatz one layer at a time, or optimise it in one go.

    ``objective_for(p)`` returns an objective over the ``2p`` parameters
    ``(gamma_1..gamma_p, beta_1..beta_p)``.  The first layer starts at a
    uniformly random point, every added layer at zero.  ``frozen`` tunes only
    the newest pair; ``unfrozen`` retunes everything; ``fixed`` optimises all
    ``2 * target_p`` parameters with the summed budget.
    """
    if target_p < 1:
        raise ValueError("target_p must be at least 1")
    if driver not in ("fixed", "frozen", "unfrozen"):
        raise ValueError(f"unknown driver {driver!r}")
    bounds1 = [(0.0, TWO_PI)]
    trace: list[TraceRow] = []
    stages: list[OptResult] = []
    total_shots = 0

    def run_stage(p: int, fn, dim: int, x0: np.ndarray, cap: int, stage: int) -> OptResult:
        nonlocal total_shots
        budget = ShotBudget(shots, cap)
        obj = CountedObjective(fn, budget, stage=stage)
        inner(obj, bounds1 * dim, x0, budget)
        res = obj.result(seed)
        for row in obj.trace:
            total_shots += shots
            trace.append(TraceRow(len(trace), row.params, row.estimate, total_shots, stage))
        stages.append(res)
        return res

    if driver == "fixed":
        x0 = rng.random(2 * target_p) * TWO_PI
        res = run_stage(target_p, objective_for(target_p), 2 * target_p, x0, per_layer_budget * target_p, target_p)
        return OptResult(res.best_params, res.best_estimate, trace, seed, len(trace), total_shots, stages)

    params = rng.random(2) * TWO_PI
    res = run_stage(1, objective_for(1), 2, params, per_layer_budget, 1)
    params = res.best_params
    for p in range(2, target_p + 1):
        gam, bet = list(params[: p - 1]), list(params[p - 1 :])
        grown = np.array(gam + [0.0] + bet + [0.0])
        fn = objective_for(p)
        if driver == "unfrozen":
            res = run_stage(p, fn, 2 * p, grown, per_layer_budget, p)
            params = res.best_params
        else:
            def embed(new, gam=gam, bet=bet):
                return np.array(gam + [new[0]] + bet + [new[1]])

            res = run_stage(p, lambda new, fn=fn, embed=embed: fn(embed(new)), 2, np.zeros(2), per_layer_budget, p)
            params = embed(res.best_params)
        stages[-1] = OptResult(params, res.best_estimate, res.trace, seed, res.estimations, res.function_accesses)
    final = stages[-1]
    return OptResult(np.asarray(params), final.best_estimate, trace, seed, len(trace), total_shots, stages)
