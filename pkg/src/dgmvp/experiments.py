"""Seeded experiment presets, tidy CSV output and replay.

Every preset expands its config into a list of work units (grid point x
instance x seed).  Units are independent, so they may run in a process pool
(``DGMVP_WORKERS``); results are written in unit order by one collector, so
the CSV payload depends only on the config and the root seed.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .circuits import AnsatzConfig, FeasibleAnsatz, resolve_initial_lots
from .encoding import EncodingSpec, feasible_count
from .hamiltonian import build_cost_model
from .market import (
    CovarianceMatrix,
    factor_model_covariance,
    load_prices,
    random_instance,
    synthetic_universe,
)
from .metrics import (
    MetricReport,
    exact_report,
    fit_power_law,
    ground_truth,
    sampled_report,
)
from .noise import NoiseParams, noisy_sample, sample_qubit_times
from .optimizers import (
    AnnealingHyper,
    CobylaHyper,
    CountedObjective,
    ShotBudget,
    cobyla_style,
    dual_annealing,
    layerwise,
    make_inner,
    sampled_objective,
)
from .pauli import verify_identities
from .simulator import sample_from_probabilities

SCHEMA_VERSION = 1
TWO_PI = 2.0 * math.pi
PRESETS = (
    "landscape",
    "initial-states",
    "optimizers",
    "hyperparameters",
    "layerwise",
    "scaling",
    "noise",
    "identities",
)
WORKERS_ENV = "DGMVP_WORKERS"


class ExperimentError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    preset: str
    schema_version: int = SCHEMA_VERSION
    instance_source: str = "synthetic"
    tickers: list[str] | None = None
    n: list[int] = field(default_factory=lambda: [3])
    l: list[int] = field(default_factory=lambda: [2])
    p: list[int] = field(default_factory=lambda: [2])
    distance: list[int] = field(default_factory=lambda: [1])
    initial: list[str] = field(default_factory=lambda: ["maxbias"])
    optimizer: list[str] = field(default_factory=lambda: ["dual_annealing"])
    driver: list[str] = field(default_factory=lambda: ["fixed"])
    shots: list[int] = field(default_factory=lambda: [16])
    max_estimations: list[int] = field(default_factory=lambda: [2000])
    final_shots: int = 65536
    instances: int = 1
    seeds: int = 1
    anneal: dict = field(default_factory=dict)
    cobyla: dict = field(default_factory=dict)
    noise: dict = field(default_factory=dict)
    noise_modes: list[str] = field(default_factory=lambda: ["postselected", "unfiltered"])
    scan_parameter: str = "beta"
    scan_layer: int = -1
    scan_resolution: float = math.pi / 500
    scan_fixed: float = math.pi / 4
    write_traces: bool = False

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ExperimentError(f"unknown preset {self.preset!r}; choose from {', '.join(PRESETS)}")
        if self.schema_version != SCHEMA_VERSION:
            raise ExperimentError(f"config schema {self.schema_version} is not supported (expected {SCHEMA_VERSION})")
        grids = ("n", "l", "p", "distance", "initial", "optimizer", "driver", "shots", "max_estimations", "noise_modes")
        for name in grids:
            if not getattr(self, name):
                raise ExperimentError(f"grid {name!r} is empty")
        if self.instances < 1 or self.seeds < 1:
            raise ExperimentError("instances and seeds must be positive")
        if self.preset != "identities":
            for n in self.n:
                for l in self.l:
                    if n * l > 24:
                        raise ExperimentError(f"n={n}, l={l} exceeds the 24-qubit enumeration guard")
        if self.scan_parameter not in ("beta", "gamma"):
            raise ExperimentError("scan_parameter must be 'beta' or 'gamma'")
        if self.instance_source.startswith("prices:") and not Path(self.instance_source[7:]).exists():
            raise ExperimentError(f"price file {self.instance_source[7:]} not found")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ExperimentError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


PRESET_DEFAULTS: dict[str, dict] = {
    "landscape": dict(n=[4], l=[2], p=[5], distance=[1, 2], initial=["maxbias", "equal_weighted", "warm_started"]),
    "initial-states": dict(
        n=[3], l=[2], p=[3], initial=["maxbias", "warm_started", "equal_weighted", "random_weighted"], instances=5, seeds=2
    ),
    "optimizers": dict(n=[3], l=[2], p=[2], optimizer=["dual_annealing", "cobyla"], shots=[16, 256], instances=5, seeds=2),
    "hyperparameters": dict(n=[3], l=[2], p=[2], shots=[8, 16, 64], max_estimations=[500, 1000, 2000], instances=3, seeds=2),
    "layerwise": dict(n=[3], l=[3], p=[5], driver=["fixed", "frozen", "unfrozen"], instances=20, seeds=5),
    "scaling": dict(n=[2, 3, 4], l=[1, 2, 3], p=[3], instances=20),
    "noise": dict(n=[2], l=[2], p=[1, 2, 3, 4], shots=[1024], max_estimations=[300], instances=20, final_shots=16384),
    "identities": dict(),
}


def preset_config(preset: str, **overrides) -> ExperimentConfig:
    if preset not in PRESETS:
        raise ExperimentError(f"unknown preset {preset!r}")
    data = {"preset": preset, **PRESET_DEFAULTS[preset], **overrides}
    return ExperimentConfig.from_dict(data)


def load_config(path: str | Path, preset: str | None = None) -> ExperimentConfig:
    data = json.loads(Path(path).read_text())
    if preset is not None:
        if data.get("preset", preset) != preset:
            raise ExperimentError(f"config is for preset {data['preset']!r}, not {preset!r}")
        data = {**PRESET_DEFAULTS[preset], **data, "preset": preset}
    return ExperimentConfig.from_dict(data)


# instances ----------------------------------------------------------------

def make_instance(config: ExperimentConfig, root_seed: int, n: int, index: int) -> CovarianceMatrix:
    """Covariance for instance ``index`` of size ``n``; depends only on (root, n, index)."""
    rng = np.random.default_rng([root_seed, n, index])
    source = config.instance_source
    if source == "factor":
        return factor_model_covariance(rng, n)
    if source == "synthetic":
        universe = synthetic_universe(np.random.default_rng([root_seed]))
    elif source.startswith("prices:"):
        path = Path(source[7:])
        tickers = config.tickers
        if tickers is None:
            with path.open() as fh:
                tickers = next(csv.reader(fh))[1:]
        universe = load_prices(path, tickers)
    else:
        raise ExperimentError(f"unknown instance source {source!r}")
    return random_instance(rng, universe, n).normalized()


@dataclass(frozen=True)
class Unit:
    index: int
    n: int
    l: int
    instance: int
    seed: int
    p: int = 1
    distance: int = 1
    initial: str = "maxbias"
    optimizer: str = "dual_annealing"
    driver: str = "fixed"
    shots: int = 16
    max_estimations: int = 2000
    noise_mode: str = ""

    def key(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k != "index"}


def plan_units(config: ExperimentConfig) -> list[Unit]:
    if config.preset == "identities":
        return [Unit(0, 0, 0, 0, 0)]
    axes: dict[str, Sequence] = {
        "n": config.n, "l": config.l, "instance": range(config.instances), "seed": range(config.seeds),
    }
    preset = config.preset
    if preset == "landscape":
        axes.update(p=config.p, distance=config.distance, initial=config.initial)
        axes["seed"] = range(1)
    elif preset == "noise":
        axes.update(p=config.p, distance=config.distance, initial=config.initial, shots=config.shots,
                    max_estimations=config.max_estimations, noise_mode=config.noise_modes)
    else:
        axes.update(p=config.p, distance=config.distance, initial=config.initial, optimizer=config.optimizer,
                    driver=config.driver, shots=config.shots, max_estimations=config.max_estimations)
    names = list(axes)
    units = []
    for combo in np.ndindex(*(len(axes[k]) for k in names)):
        values = {k: axes[k][i] for k, i in zip(names, combo)}
        units.append(Unit(len(units), **{k: (v if isinstance(v, str) else int(v)) for k, v in values.items()}))
    return units


# per-unit execution ----------------------------------------------------------

def _rng(root: int, unit: Unit, *tag: int) -> np.random.Generator:
    # methods share streams for the same (instance, seed) so comparisons are paired
    return np.random.default_rng([root, unit.n, unit.l, unit.instance, unit.seed, *tag])


@dataclass
class UnitOutput:
    records: list[dict]
    tables: dict[str, list[dict]] = field(default_factory=dict)
    function_accesses: int = 0


class _Problem:
    def __init__(self, config: ExperimentConfig, root: int, unit: Unit):
        self.spec = EncodingSpec(unit.n, unit.l)
        self.cov = make_instance(config, root, unit.n, unit.instance)
        self.model = build_cost_model(self.spec, self.cov)
        self.truth = ground_truth(self.spec, self.cov)
        self.engine = FeasibleAnsatz(self.spec, self.model, unit.distance)
        lots_rng = _rng(root, unit, 1)
        probe = AnsatzConfig(unit.initial, unit.distance, 0)
        self.lots = resolve_initial_lots(probe, self.spec, self.cov, lots_rng)

    def template(self, unit: Unit, p: int) -> AnsatzConfig:
        return AnsatzConfig(unit.initial, unit.distance, p, [0.0] * (2 * p), initial_lots=self.lots)

    def reports(self, unit: Unit, p: int, params, final_rng, final_shots: int) -> tuple[MetricReport, MetricReport]:
        probs = self.engine.probabilities(self.template(unit, p).with_params(params), self.lots)
        exact = exact_report(self.engine.indices, probs, self.engine.costs, self.truth)
        idx = sample_from_probabilities(probs, final_shots, final_rng)
        sampled = sampled_report(self.engine.indices[idx], self.engine.costs[idx], self.truth)
        return exact, sampled


def _base_row(config_hash: str, root: int, unit: Unit, problem: _Problem | None = None) -> dict:
    row = {"config_hash": config_hash, "root_seed": root, "unit": unit.index, **unit.key()}
    if problem is not None:
        row["feasible_states"] = feasible_count(unit.n, unit.l)
        row["initial_lots"] = "-".join(map(str, problem.lots))
        row["f_min"] = problem.truth.f_min
        row["f_max"] = problem.truth.f_max
        row["start_is_optimal"] = int(problem.engine.position[_lots_index(problem)] in _argmin_positions(problem))
    return row


def _lots_index(problem: _Problem) -> int:
    spec = problem.spec
    return sum(x << (t * spec.l) for t, x in enumerate(problem.lots))


def _argmin_positions(problem: _Problem) -> set[int]:
    return {problem.engine.position[i] for i in problem.truth.argmin}


def _metrics_row(exact: MetricReport, sampled: MetricReport) -> dict:
    row = {}
    for prefix, rep in (("exact", exact), ("sampled", sampled)):
        for k, v in rep.as_row().items():
            if k != "source":
                row[f"{prefix}_{k}"] = v
    return row


def _trace_rows(unit: Unit, trace) -> list[dict]:
    return [
        {"unit": unit.index, "eval_index": r.index, "stage": r.stage, "params": " ".join(repr(float(x)) for x in r.params),
         "estimate": r.estimate, "cumulative_n_f": r.function_accesses}
        for r in trace
    ]


def _run_identities(config: ExperimentConfig, root: int, unit: Unit, chash: str) -> UnitOutput:
    betas = np.random.default_rng([root]).uniform(0.0, TWO_PI, size=10)
    rows = [{"config_hash": chash, "root_seed": root, **r.as_dict()} for r in verify_identities(betas=tuple(betas))]
    return UnitOutput(rows)


def count_valleys(values: np.ndarray) -> int:
    """Strict local minima of a periodic sampled curve (last point duplicates the first)."""
    v = np.asarray(values, dtype=float)
    if np.isclose(v[0], v[-1], rtol=0, atol=1e-12) and len(v) > 2:
        v = v[:-1]
    left, right = np.roll(v, 1), np.roll(v, -1)
    return int(np.sum((v < left) & (v <= right)))


def _run_landscape(config: ExperimentConfig, root: int, unit: Unit, chash: str) -> UnitOutput:
    problem = _Problem(config, root, unit)
    p = unit.p
    layer = unit.p - 1 if config.scan_layer == -1 else config.scan_layer
    if not 0 <= layer < p:
        raise ExperimentError(f"scan layer {layer} outside 0..{p - 1}")
    slot = layer + (p if config.scan_parameter == "beta" else 0)
    count = int(round(TWO_PI / config.scan_resolution)) + 1
    grid = np.linspace(0.0, TWO_PI, count)
    params = np.full(2 * p, config.scan_fixed)
    template = problem.template(unit, p)
    energies = np.empty(count)
    for i, x in enumerate(grid):
        params[slot] = x
        probs = problem.engine.probabilities(template.with_params(params), problem.lots)
        energies[i] = probs @ problem.engine.costs
    alpha = (energies - problem.truth.f_min) / problem.truth.span
    grad = np.gradient(alpha, grid)
    base = _base_row(chash, root, unit, problem)
    record = {
        **base,
        "scan_slot": slot,
        "points": count,
        "valleys": count_valleys(alpha),
        "alpha_min_scan": float(alpha.min()),
        "alpha_max_scan": float(alpha.max()),
        "depth": float(alpha.max() - alpha.min()),
        "grad_abs_mean": float(np.mean(np.abs(grad))),
        "grad_abs_max": float(np.max(np.abs(grad))),
        "argmin_x": float(grid[int(np.argmin(alpha))]),
    }
    curve = [{"unit": unit.index, "initial": unit.initial, "distance": unit.distance, "x": float(x), "energy": float(e),
              "alpha": float(a)} for x, e, a in zip(grid, energies, alpha)]
    return UnitOutput([record], {"curve": curve})


def _anneal(config: ExperimentConfig) -> AnnealingHyper:
    return AnnealingHyper(**config.anneal)


def _cobyla(config: ExperimentConfig) -> CobylaHyper:
    return CobylaHyper(**config.cobyla)


def _optimize_fixed(config, unit, fn, dim, budget, rng):
    x0 = rng.random(dim) * TWO_PI
    obj = CountedObjective(fn, budget, stage=unit.p)
    bounds = [(0.0, TWO_PI)] * dim
    if unit.optimizer == "dual_annealing":
        return dual_annealing(obj, bounds, budget, rng, _anneal(config), x0=x0)
    if unit.optimizer == "cobyla":
        return cobyla_style(obj, x0, budget, bounds, _cobyla(config))
    raise ExperimentError(f"unknown optimizer {unit.optimizer!r}")


def _run_optimization(config: ExperimentConfig, root: int, unit: Unit, chash: str) -> UnitOutput:
    problem = _Problem(config, root, unit)
    rng = _rng(root, unit, 0)
    base = _base_row(chash, root, unit, problem)

    def objective_for(p: int):
        return sampled_objective(problem.engine, problem.template(unit, p), problem.lots, unit.shots, rng)

    if config.preset == "layerwise":
        inner = make_inner(unit.optimizer, rng, _anneal(config), _cobyla(config))
        result = layerwise(unit.driver, unit.p, objective_for, inner, unit.max_estimations, unit.shots, rng)
        stages = [(r.best_params, r, len(r.best_params) // 2) for r in result.stages]
        if unit.driver == "fixed":
            stages = stages[-1:]
    else:
        if unit.driver != "fixed":
            raise ExperimentError("layerwise drivers belong to the layerwise preset")
        budget = ShotBudget(unit.shots, unit.max_estimations, config.final_shots)
        result = _optimize_fixed(config, unit, objective_for(unit.p), 2 * unit.p, budget, rng)
        stages = [(result.best_params, result, unit.p)]

    records = []
    for params, res, p in stages:
        exact, sampled = problem.reports(unit, p, params, _rng(root, unit, 2, p), config.final_shots)
        records.append({
            **base,
            "stage_p": p,
            "best_estimate": res.best_estimate,
            "estimations": res.estimations,
            "n_f": res.function_accesses,
            "params": " ".join(repr(float(x)) for x in params),
            **_metrics_row(exact, sampled),
        })
    tables = {"trace": _trace_rows(unit, result.trace)} if config.write_traces else {}
    return UnitOutput(records, tables, result.function_accesses)


def _run_noise(config: ExperimentConfig, root: int, unit: Unit, chash: str) -> UnitOutput:
    problem = _Problem(config, root, unit)
    params = NoiseParams.from_dict(config.noise)
    # one simulated device per (instance, seed), shared by both filter modes
    times = sample_qubit_times(params, problem.spec.num_qubits, _rng(root, unit, 3))
    rng = _rng(root, unit, 0)
    table = problem.model.cost_table
    template = problem.template(unit, unit.p)
    kept_fraction: list[float] = []

    def estimate(x, shots, gen):
        out = noisy_sample(template.with_params(x), problem.model, problem.spec, problem.lots, shots, params, gen, times)
        kept_fraction.append(float(out.feasible.mean()))
        if unit.noise_mode == "unfiltered":
            return float(table[out.indices].mean())
        if not out.feasible.any():
            # nothing survived: score as the worst feasible portfolio
            return problem.truth.f_max
        return float(table[out.indices[out.feasible]].mean())

    budget = ShotBudget(unit.shots, unit.max_estimations, config.final_shots)
    result = _optimize_fixed(config, unit, lambda x: estimate(x, unit.shots, rng), 2 * unit.p, budget, rng)
    best = result.best_params
    exact, sampled = problem.reports(unit, unit.p, best, _rng(root, unit, 2, unit.p), config.final_shots)

    final = noisy_sample(template.with_params(best), problem.model, problem.spec, problem.lots, config.final_shots,
                         params, _rng(root, unit, 4, unit.p), times)
    noisy_all = float(table[final.indices].mean())
    kept = final.indices[final.feasible]
    noisy_ps = float(table[kept].mean()) if kept.size else math.nan
    span = problem.truth.span
    record = {
        **_base_row(chash, root, unit, problem),
        "best_estimate": result.best_estimate,
        "estimations": result.estimations,
        "n_f": result.function_accesses,
        "params": " ".join(repr(float(x)) for x in best),
        "pps_final": float(final.feasible.mean()),
        "pps_mean_during_opt": float(np.mean(kept_fraction[: result.estimations])) if kept_fraction else math.nan,
        "noisy_alpha_mean_unfiltered": (noisy_all - problem.truth.f_min) / span,
        "noisy_alpha_mean_postselected": (noisy_ps - problem.truth.f_min) / span,
        **_metrics_row(exact, sampled),
    }
    tables = {"trace": _trace_rows(unit, result.trace)} if config.write_traces else {}
    return UnitOutput([record], tables, result.function_accesses)


_RUNNERS: dict[str, Callable[[ExperimentConfig, int, Unit, str], UnitOutput]] = {
    "identities": _run_identities,
    "landscape": _run_landscape,
    "noise": _run_noise,
}


def run_unit(config: ExperimentConfig, root: int, unit: Unit) -> UnitOutput:
    runner = _RUNNERS.get(config.preset, _run_optimization)
    return runner(config, root, unit, config.config_hash())


def _pool_entry(args) -> UnitOutput:
    config_dict, root, unit = args
    return run_unit(ExperimentConfig.from_dict(config_dict), root, unit)


# output ---------------------------------------------------------------------

def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


class _TableWriter:
    """Appends rows to a CSV, fixing the header from the first row."""

    def __init__(self, path: Path, header: Sequence[str] | None = None):
        self.path = path
        self.header = list(header) if header else None
        self.fh = path.open("w", newline="")
        self.writer = csv.writer(self.fh, lineterminator="\n")
        if self.header:
            self.writer.writerow(self.header)

    def write(self, rows: Iterable[dict]) -> None:
        for row in rows:
            if self.header is None:
                self.header = list(row)
                self.writer.writerow(self.header)
            if list(row) != self.header:
                raise ExperimentError(f"row keys differ from header in {self.path.name}")
            self.writer.writerow([_cell(row[k]) for k in self.header])
        self.fh.flush()

    def close(self) -> None:
        self.fh.close()


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ExperimentError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc


@dataclass
class RunResult:
    out_dir: Path
    records: list[dict]
    tables: dict[str, list[dict]]
    summary: dict

    @property
    def ok(self) -> bool:
        return self.summary.get("ok", True)


def run_preset(config: ExperimentConfig, root_seed: int, out_dir: str | Path, workers: int | None = None) -> RunResult:
    """Run every unit of ``config`` and write ``records.csv`` plus side tables and ``summary.json``.

    Rows already produced are on disk if a later unit raises.
    """
    if root_seed < 0 or root_seed >= 2**64:
        raise ExperimentError("root seed must be an unsigned 64-bit integer")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    units = plan_units(config)
    workers = worker_count() if workers is None else workers
    started = time.perf_counter()
    writers: dict[str, _TableWriter] = {"records": _TableWriter(out / "records.csv")}
    records: list[dict] = []
    tables: dict[str, list[dict]] = {}
    total_nf = 0
    try:
        if workers > 1 and len(units) > 1:
            pool = ProcessPoolExecutor(max_workers=workers)
            outputs = pool.map(_pool_entry, [(config.to_dict(), root_seed, u) for u in units])
        else:
            pool = None
            outputs = (run_unit(config, root_seed, u) for u in units)
        for output in outputs:
            writers["records"].write(output.records)
            records.extend(output.records)
            total_nf += output.function_accesses
            for name, rows in output.tables.items():
                if name not in writers:
                    writers[name] = _TableWriter(out / f"{name}.csv")
                writers[name].write(rows)
                tables.setdefault(name, []).extend(rows)
        if pool is not None:
            pool.shutdown()
    finally:
        for w in writers.values():
            w.close()

    summary = {
        "preset": config.preset,
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "root_seed": root_seed,
        "units": len(units),
        "total_function_accesses": total_nf,
        "wall_time_s": time.perf_counter() - started,
        "files": sorted(f"{name}.csv" for name in writers),
        **summarize(config, records),
    }
    for figure in FIGURES_BY_PRESET.get(config.preset, ()):
        rows = emit_plot_data(records if PLOT_SPECS[figure].table == "records" else tables.get("curve", []), figure)
        write_rows(out / f"plot_{figure}.csv", rows, plot_columns(figure))
        summary["files"].append(f"plot_{figure}.csv")
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True))
    return RunResult(out, records, tables, summary)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(float(obj)) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_rows(path: str | Path, rows: Sequence[dict], header: Sequence[str] | None = None) -> None:
    writer = _TableWriter(Path(path), header if header is not None else (list(rows[0]) if rows else None))
    try:
        writer.write(rows)
    finally:
        writer.close()


def read_rows(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


# aggregation ------------------------------------------------------------------

def _column(rows: Sequence[dict], key: str) -> np.ndarray:
    return np.array([float(r[key]) for r in rows], dtype=float)


def group_rows(rows: Sequence[dict], keys: Sequence[str]) -> dict[tuple, list[dict]]:
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    return dict(sorted(groups.items(), key=lambda kv: tuple(_sort_key(v) for v in kv[0])))


def _sort_key(v):
    try:
        return (0, float(v), "")
    except (TypeError, ValueError):
        return (1, 0.0, str(v))


def _finite(values: np.ndarray) -> np.ndarray:
    return values[np.isfinite(values)]


def _median(values: np.ndarray) -> float:
    v = _finite(values)
    return float(np.median(v)) if v.size else math.nan


def _pct(values: np.ndarray, q: float) -> float:
    v = _finite(values)
    return float(np.percentile(v, q)) if v.size else math.nan


def scaling_points(records: Sequence[dict], initial: str = "maxbias") -> list[dict]:
    """Mean P_gm per (n, l) and its inverse, for one initial state."""
    rows = [r for r in records if r["initial"] == initial]
    points = []
    for (n, l), group in group_rows(rows, ("n", "l")).items():
        pgm = _column(group, "exact_p_gm")
        mean = float(pgm.mean())
        points.append({"n": int(n), "l": int(l), "B": feasible_count(int(n), int(l)), "p_gm_mean": mean,
                       "inv_mean_p_gm": 1.0 / mean if mean > 0 else math.inf, "count": len(group)})
    return points


def _series_fit(points: list[dict]) -> dict | None:
    pts = [p for p in points if math.isfinite(p["inv_mean_p_gm"])]
    if len(pts) < 3 or len({p["B"] for p in pts}) < 2:
        return None
    fit = fit_power_law([p["B"] for p in pts], [p["inv_mean_p_gm"] for p in pts])
    return {"a": fit.a, "b": fit.b, "b_stderr": fit.b_stderr, "points": fit.points}


def summarize(config: ExperimentConfig, records: Sequence[dict]) -> dict:
    preset = config.preset
    if preset == "identities":
        failed = [r["name"] for r in records if not r["pass"]]
        return {"ok": not failed, "checks": len(records), "failed": failed}
    if not records:
        return {}
    if preset == "landscape":
        return {"landscape": [
            {k: r[k] for k in ("n", "l", "p", "distance", "initial", "valleys", "depth", "grad_abs_mean", "alpha_min_scan")}
            for r in records
        ]}
    if preset == "scaling":
        out = {}
        for initial in config.initial:
            pts = scaling_points(records, initial)
            fits = {"all": _series_fit(pts)}
            for n in config.n:
                fits[f"n={n}"] = _series_fit([p for p in pts if p["n"] == n])
            for l in config.l:
                fits[f"l={l}"] = _series_fit([p for p in pts if p["l"] == l])
            out[initial] = {"points": pts, "fits": fits}
        return {"scaling": out}
    if preset == "noise":
        groups = group_rows(records, ("p", "noise_mode"))
        return {"noise": [
            {"p": int(k[0]), "mode": k[1], "pps_median": _median(_column(g, "pps_final")),
             "exact_alpha_mean_median": _median(_column(g, "exact_alpha_mean"))}
            for k, g in groups.items()
        ]}
    keys = ("optimizer", "driver", "initial", "shots", "max_estimations", "stage_p")
    return {"groups": [
        {**dict(zip(keys, k)), "runs": len(g),
         "exact_alpha_mean_median": _median(_column(g, "exact_alpha_mean")),
         "sampled_alpha_min_median": _median(_column(g, "sampled_alpha_min")),
         "found_fraction": float(np.mean(_column(g, "sampled_alpha_min") <= 1e-12)),
         "exact_expectation_median": _median(_column(g, "exact_expectation"))}
        for k, g in group_rows(records, keys).items()
    ]}


# plot data ----------------------------------------------------------------------

@dataclass(frozen=True)
class PlotSpec:
    table: str
    keys: tuple[str, ...]
    columns: tuple[str, ...]
    build: Callable[[tuple, list[dict]], dict]


def _band(values: np.ndarray) -> dict:
    return {"p20": _pct(values, 20), "p80": _pct(values, 80)}


PLOT_SPECS: dict[str, PlotSpec] = {
    "landscape": PlotSpec(
        "curve", ("unit", "x"), ("x", "y", "group"),
        lambda k, g: {"x": float(g[0]["x"]), "y": float(g[0]["alpha"]),
                      "group": f"{g[0]['initial']}|L={g[0]['distance']}"},
    ),
    "layerwise": PlotSpec(
        "records", ("stage_p", "driver"), ("p", "method", "alpha_mean_mean", "alpha_min_median", "p20", "p80"),
        lambda k, g: {"p": int(k[0]), "method": k[1],
                      "alpha_mean_mean": float(np.mean(_column(g, "exact_alpha_mean"))),
                      "alpha_min_median": _median(_column(g, "sampled_alpha_min")),
                      **_band(_column(g, "exact_alpha_mean"))},
    ),
    "optimizers": PlotSpec(
        "records", ("optimizer", "shots", "max_estimations"),
        ("method", "shots", "budget", "alpha_mean_mean", "alpha_min_median", "p20", "p80"),
        lambda k, g: {"method": k[0], "shots": int(k[1]), "budget": int(k[2]),
                      "alpha_mean_mean": float(np.mean(_column(g, "exact_alpha_mean"))),
                      "alpha_min_median": _median(_column(g, "sampled_alpha_min")),
                      **_band(_column(g, "exact_alpha_mean"))},
    ),
    "initial-states": PlotSpec(
        "records", ("initial",), ("initial", "alpha_mean_mean", "alpha_min_median", "p_gm_mean", "p20", "p80"),
        lambda k, g: {"initial": k[0], "alpha_mean_mean": float(np.mean(_column(g, "exact_alpha_mean"))),
                      "alpha_min_median": _median(_column(g, "sampled_alpha_min")),
                      "p_gm_mean": float(np.mean(_column(g, "exact_p_gm"))),
                      **_band(_column(g, "exact_alpha_mean"))},
    ),
    "scaling": PlotSpec(
        "records", ("initial", "n", "l"), ("B", "y", "group", "n", "l", "p_gm_mean", "p20", "p80"),
        lambda k, g: {"B": feasible_count(int(k[1]), int(k[2])),
                      "y": (1.0 / m if (m := float(np.mean(_column(g, "exact_p_gm")))) > 0 else math.inf),
                      "group": k[0], "n": int(k[1]), "l": int(k[2]), "p_gm_mean": m,
                      **_band(_column(g, "exact_p_gm"))},
    ),
    "noise": PlotSpec(
        "records", ("p", "noise_mode"), ("p", "mode", "pps_median", "alpha_mean_median", "p20", "p80"),
        lambda k, g: {"p": int(k[0]), "mode": k[1], "pps_median": _median(_column(g, "pps_final")),
                      "alpha_mean_median": _median(_column(g, "exact_alpha_mean")),
                      **_band(_column(g, "exact_alpha_mean"))},
    ),
}

FIGURES_BY_PRESET = {
    "landscape": ("landscape",),
    "layerwise": ("layerwise",),
    "optimizers": ("optimizers",),
    "hyperparameters": ("optimizers",),
    "initial-states": ("initial-states",),
    "scaling": ("scaling",),
    "noise": ("noise",),
}


def plot_columns(figure: str) -> tuple[str, ...]:
    if figure not in PLOT_SPECS:
        raise ExperimentError(f"unknown figure id {figure!r}; choose from {', '.join(PLOT_SPECS)}")
    return PLOT_SPECS[figure].columns


def emit_plot_data(rows: Sequence[dict], figure: str) -> list[dict]:
    """Long-format rows for ``figure``; an empty input gives no rows."""
    spec = PLOT_SPECS.get(figure)
    if spec is None:
        raise ExperimentError(f"unknown figure id {figure!r}; choose from {', '.join(PLOT_SPECS)}")
    if figure == "landscape":
        return [spec.build((), [r]) for r in rows]
    return [spec.build(k, g) for k, g in group_rows(rows, spec.keys).items()]


# replay ---------------------------------------------------------------------------

_UNIT_FIELDS = [f.name for f in fields(Unit)]


def unit_from_record(record: dict) -> Unit:
    values = {}
    for name in _UNIT_FIELDS:
        raw = record["unit"] if name == "index" else record[name]
        values[name] = raw if name in ("initial", "optimizer", "driver", "noise_mode") else int(raw)
    return Unit(**values)


def replay(record: dict, config: ExperimentConfig) -> list[dict]:
    """Re-run the unit behind ``record`` and return its freshly computed rows.

    Rows read back from CSV compare equal after formatting with the same
    cell rule used for writing.
    """
    if str(record["config_hash"]) != config.config_hash():
        raise ExperimentError("record was produced by a different config")
    unit = unit_from_record(record)
    return run_unit(config, int(record["root_seed"]), unit).records


def formatted(row: dict) -> dict:
    return {k: _cell(v) for k, v in row.items()}
