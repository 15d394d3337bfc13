"""Config-driven runner: train, shrink, evaluate and write reports.

Usage::

    lagrangian-games run   --config cfg.yaml --out results/
    lagrangian-games sweep --config cfg.yaml --out results/ --grid 0.25,0.5,1,2,4
    lagrangian-games shrink --config cfg.yaml --trace results/trace.npz --out reshrunk/
    lagrangian-games eval  --config cfg.yaml --mixture results/mixture.npz --out evaluated/

Exit codes: 0 on success, 1 when the requested shrink tolerance is
infeasible, 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from .evaluation import (
    MixtureSolution,
    best_model_heuristic,
    check_bounds,
    expected_metrics,
    external_regret_lagrangian,
    importance_weighted_mixture,
    swap_regret,
    uniform_mixture,
)
from .games import StepSchedule, step_sizes, theoretical_epsilons
from .instances import Instance, RateSpec, build_instance, fairness_instance
from .problem import ConstrainedProblem, Dataset
from .shrinking import ShrinkInfeasible, shrink
from .solvers import (
    IterateTrace,
    OracleSpec,
    StochasticGradientSource,
    oracle_lagrangian,
    oracle_proxy_lagrangian,
    stochastic_lagrangian,
    stochastic_proxy_lagrangian,
)

__all__ = [
    "ConfigError",
    "CsvSchema",
    "RunConfig",
    "RunReport",
    "SweepResult",
    "ingest_csv",
    "train_validation_split",
    "load_config",
    "run",
    "sweep",
    "main",
]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"config field {field_name!r}: {message}")
        self.field = field_name


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CsvSchema:
    """Column roles of a pre-binarized CSV file.

    ``features="rest"`` takes every column that is neither the label nor a
    group. ``bias`` appends a constant-one feature.
    """

    label: str
    groups: tuple[str, ...]
    features: tuple[str, ...] | str = "rest"
    bias: bool = True


_TRUE = {"1", "1.0", "true", "yes", "t", "y"}
_FALSE = {"0", "0.0", "false", "no", "f", "n"}


def _parse_labels(raw: list[str]) -> np.ndarray:
    try:
        values = np.array([float(v) for v in raw])
    except ValueError as exc:
        raise ValueError(f"non-binary labels: {exc}") from None
    seen = set(np.unique(values).tolist())
    if seen <= {0.0, 1.0}:
        return np.where(values > 0, 1.0, -1.0)
    if seen <= {-1.0, 1.0}:
        return values
    raise ValueError(f"non-binary labels: found values {sorted(seen)[:5]}")


def _parse_group(name: str, raw: list[str]) -> np.ndarray:
    out = np.empty(len(raw), dtype=bool)
    for k, v in enumerate(raw):
        key = v.strip().lower()
        if key in _TRUE:
            out[k] = True
        elif key in _FALSE:
            out[k] = False
        else:
            raise ValueError(f"group column {name!r} has non-boolean value {v!r} in row {k}")
    if not out.any():
        raise ValueError(f"empty group {name!r}")
    return out


def ingest_csv(path, schema: CsvSchema) -> Dataset:
    """Read a CSV with a header row into a :class:`Dataset`.

    Labels may be 0/1 or -1/+1; groups must be boolean-valued columns.
    """
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        rows = list(reader)
    if isinstance(schema.features, str):
        if schema.features != "rest":
            raise ValueError("features must be a list of columns or 'rest'")
        features = [c for c in header if c != schema.label and c not in schema.groups]
    else:
        features = list(schema.features)
    missing = [c for c in [schema.label, *schema.groups, *features] if c not in header]
    if missing:
        raise ValueError(f"missing columns: {missing}")
    if not rows:
        raise ValueError("CSV file has no data rows")
    labels = _parse_labels([r[schema.label] for r in rows])
    groups = {g: _parse_group(g, [r[g] for r in rows]) for g in schema.groups}
    try:
        X = np.array([[float(r[c]) for c in features] for r in rows], dtype=float).reshape(
            len(rows), len(features)
        )
    except ValueError as exc:
        raise ValueError(f"non-numeric feature value: {exc}") from None
    if schema.bias:
        X = np.column_stack([X, np.ones(len(rows))])
    return Dataset(X, labels, groups)


def train_validation_split(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset | None]:
    """Seeded shuffle, then hold out ``round(fraction * n)`` rows."""
    if not 0 <= fraction < 1:
        raise ValueError("validation fraction must lie in [0, 1)")
    n = dataset.n_rows
    n_valid = int(round(fraction * n))
    if n_valid == 0:
        return dataset, None
    order = np.random.default_rng(seed).permutation(n)
    return dataset.subset(np.sort(order[n_valid:])), dataset.subset(np.sort(order[:n_valid]))


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


_FORMULATION = {
    ("lagrangian", "oracle"): "lagrangian_oracle",
    ("lagrangian", "stochastic"): "lagrangian_stochastic",
    ("proxy", "stochastic"): "proxy_stochastic",
    ("proxy", "oracle"): "proxy_oracle",
}

_DEFAULTS: dict[str, Any] = {
    "formulation": "proxy",
    "solver": "stochastic",
    "T": 1000,
    "eta_theta": "paper",
    "eta_lambda": "paper",
    "step_multiplier": 1.0,
    "radius": None,
    "delta": 0.05,
    "minibatch_size": None,
    "oracle": None,
    "seed": 0,
    "shrink": "bisect",
    "max_candidates": 1000,
    "sweep": None,
}


@dataclass
class RunConfig:
    """Validated run settings.

    ``problem`` holds either ``{"instance": name, "options": {...}}`` or a CSV
    description (``csv``, ``label``, ``groups``, ``constraints`` and
    optional ``features``, ``bias``, ``validation_fraction``, ``test_csv``,
    ``box``). ``radius=None`` means an unbounded multiplier ball.
    """

    problem: dict
    formulation: str = "proxy"
    solver: str = "stochastic"
    T: int = 1000
    eta_theta: float | str = "paper"
    eta_lambda: float | str = "paper"
    step_multiplier: float = 1.0
    radius: float | None = None
    delta: float | None = 0.05
    minibatch_size: int | None = None
    oracle: dict | None = None
    seed: int = 0
    shrink: float | str = "bisect"
    max_candidates: int = 1000
    sweep: list | None = None

    @property
    def algorithm(self) -> str:
        return _FORMULATION[(self.formulation, self.solver)]

    @property
    def R(self) -> float:
        return math.inf if self.radius is None else float(self.radius)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "configuration must be a mapping")
        unknown = set(raw) - set(_DEFAULTS) - {"problem"}
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field")
        if "problem" not in raw:
            raise ConfigError("problem", "missing")
        values = {**_DEFAULTS, **raw}
        cfg = cls(**values)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        p = self.problem
        if not isinstance(p, dict) or (("instance" in p) == ("csv" in p)):
            raise ConfigError("problem", "give exactly one of 'instance' or 'csv'")
        if "csv" in p:
            for key in ("label", "groups", "constraints"):
                if key not in p:
                    raise ConfigError(f"problem.{key}", "missing")
        if (self.formulation, self.solver) not in _FORMULATION:
            raise ConfigError(
                "formulation" if self.formulation not in ("lagrangian", "proxy") else "solver",
                "formulation must be lagrangian|proxy and solver oracle|stochastic",
            )
        if not isinstance(self.T, int) or self.T < 1:
            raise ConfigError("T", "must be a positive integer")
        for name in ("eta_theta", "eta_lambda"):
            value = getattr(self, name)
            if value != "paper" and not (isinstance(value, (int, float)) and value > 0):
                raise ConfigError(name, "must be 'paper' or a positive number")
        if not self.step_multiplier > 0:
            raise ConfigError("step_multiplier", "must be positive")
        if self.radius is not None and not (isinstance(self.radius, (int, float)) and self.radius > 0):
            raise ConfigError("radius", "must be positive or null for an unbounded ball")
        if self.algorithm == "lagrangian_oracle" and self.radius is None:
            raise ConfigError("radius", "the oracle Lagrangian loop needs a finite radius")
        if self.formulation == "lagrangian" and self.radius is None and self.eta_lambda == "paper":
            raise ConfigError("eta_lambda", "the paper step size needs a finite radius")
        if self.delta is not None and not 0 < self.delta < 1:
            raise ConfigError("delta", "must lie in (0, 1)")
        if self.minibatch_size is not None and not (
            isinstance(self.minibatch_size, int) and self.minibatch_size >= 1
        ):
            raise ConfigError("minibatch_size", "must be a positive integer or null")
        if self.solver == "oracle" and self.oracle is None:
            raise ConfigError("oracle", "required by the oracle solver")
        if self.oracle is not None:
            try:
                self.oracle_spec()
            except (TypeError, ValueError) as exc:
                raise ConfigError("oracle", str(exc)) from None
        if not isinstance(self.seed, int):
            raise ConfigError("seed", "must be an integer")
        if self.shrink not in ("bisect", "theoretical") and not isinstance(self.shrink, (int, float)):
            raise ConfigError("shrink", "must be 'bisect', 'theoretical' or a number")
        if not isinstance(self.max_candidates, int) or self.max_candidates < 1:
            raise ConfigError("max_candidates", "must be a positive integer")
        if self.sweep is not None and (
            not isinstance(self.sweep, list) or not all(isinstance(v, (int, float)) and v > 0 for v in self.sweep)
        ):
            raise ConfigError("sweep", "must be a list of positive multipliers")

    def oracle_spec(self, lipschitz: float | None = None) -> OracleSpec:
        options = dict(self.oracle or {"kind": "multistart_descent"})
        if options.get("lipschitz", "auto") == "auto":
            options["lipschitz"] = lipschitz
        options.setdefault("seed", self.seed)
        return OracleSpec(**options)

    def to_dict(self) -> dict:
        return {
            "problem": copy.deepcopy(self.problem),
            "formulation": self.formulation,
            "solver": self.solver,
            "T": self.T,
            "eta_theta": self.eta_theta,
            "eta_lambda": self.eta_lambda,
            "step_multiplier": self.step_multiplier,
            "radius": self.radius,
            "delta": self.delta,
            "minibatch_size": self.minibatch_size,
            "oracle": copy.deepcopy(self.oracle),
            "seed": self.seed,
            "shrink": self.shrink,
            "max_candidates": self.max_candidates,
            "sweep": self.sweep,
        }


def load_config(path, seed: int | None = None) -> RunConfig:
    try:
        with open(path) as handle:
            raw = yaml.safe_load(handle)
    except OSError as exc:
        raise ConfigError("--config", str(exc)) from None
    except yaml.YAMLError as exc:
        raise ConfigError("--config", f"invalid YAML: {exc}") from None
    if seed is not None and isinstance(raw, dict):
        raw["seed"] = seed
    return RunConfig.from_dict(raw)


def build_problem(config: RunConfig) -> tuple[Instance, dict[str, Dataset]]:
    """The configured instance plus the datasets backing it, by split name."""
    p = config.problem
    if "instance" in p:
        try:
            inst = build_instance(p["instance"], **(p.get("options") or {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError("problem.instance", str(exc)) from None
        return inst, dict(inst.data or {})
    try:
        schema = CsvSchema(
            p["label"], tuple(p["groups"]), p.get("features", "rest"), p.get("bias", True)
        )
        full = ingest_csv(p["csv"], schema)
        train, valid = train_validation_split(full, p.get("validation_fraction", 0.2), config.seed)
        rates = [RateSpec(c["group"], c["factor"], c.get("kind", "equal_opportunity")) for c in p["constraints"]]
        inst = fairness_instance(train, rates, p.get("box", 2.0), valid, name=Path(p["csv"]).stem)
        data = dict(inst.data)
        if p.get("test_csv"):
            data["test"] = ingest_csv(p["test_csv"], schema)
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError("problem", str(exc)) from None
    return inst, data


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def _plain(value):
    """Convert numpy scalars and arrays (recursively) into JSON-ready values."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return None if not math.isfinite(value) else value
    return value


@dataclass
class RunReport:
    """Everything a run produced, in a stable field order.

    Wall-clock timings are kept out of :attr:`data` so that reports of
    identical runs are byte-identical; they are written to a separate file.
    """

    data: dict
    timings: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.data[key]

    @property
    def status(self) -> str:
        return self.data["status"]

    def to_json(self) -> str:
        return json.dumps(_plain(self.data), indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls(json.loads(text))

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json())
        (out / "timings.json").write_text(json.dumps(self.timings, indent=2) + "\n")


def _metrics_dict(problem: ConstrainedProblem, mixture: MixtureSolution) -> dict:
    m = expected_metrics(problem, mixture)
    return {"objective": m.objective, "constraints": m.constraints, "max_violation": m.max_violation}


def _error_rate(data: Dataset, mixture: MixtureSolution) -> float:
    margins = data.features @ mixture.support.T
    wrong = (np.where(margins > 0, 1.0, -1.0) != data.labels[:, None]).mean(axis=0)
    return float(mixture.weights @ wrong)


def _rate_ratios(data: Dataset, rates: Sequence[RateSpec], mixture: MixtureSolution) -> list:
    """Expected group rate over expected overall rate, per rate constraint."""
    positive_pred = (data.features @ mixture.support.T > 0) @ mixture.weights
    out = []
    for spec in rates:
        member = data.groups[spec.group]
        if spec.kind == "equal_opportunity":
            base = data.labels > 0
        else:
            base = np.ones(data.n_rows, dtype=bool)
        overall = positive_pred[base].mean()
        group = positive_pred[base & member].mean()
        out.append(float(group / overall) if overall > 0 else None)
    return out


def _dataset_metrics(inst, data, name, problem, mixture):
    out = {}
    if problem is not None:
        out.update(_metrics_dict(problem, mixture))
    if name in data:
        out["error_rate"] = _error_rate(data[name], mixture)
        if inst.rates:
            out["rate_ratios"] = _rate_ratios(data[name], inst.rates, mixture)
    return out


def _write_iterates(out_dir: Path, trace: IterateTrace, g0: np.ndarray, g: np.ndarray) -> None:
    m = g.shape[1]
    k = trace.lambdas.shape[1]
    header = ["t", "g0"] + [f"g_{i + 1}" for i in range(m)] + [f"lambda_{i + 1}" for i in range(k)]
    table = np.column_stack([np.arange(1, trace.T + 1), g0, g, trace.lambdas])
    np.savetxt(out_dir / "iterates.csv", table, delimiter=",", header=",".join(header),
               comments="", fmt="%.17g")


def _save_mixture(path: Path, mixture: MixtureSolution) -> None:
    np.savez(path, support=mixture.support, weights=mixture.weights,
             indices=np.array([]) if mixture.indices is None else mixture.indices)


def _load_mixture(path) -> MixtureSolution:
    with np.load(path) as data:
        indices = data["indices"] if data["indices"].size else None
        return MixtureSolution(data["support"], data["weights"], indices)


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


def _schedule(config: RunConfig, inst: Instance, full_batch: bool):
    """Step sizes actually used, and the schedule when it follows the formulas."""
    algorithm = config.algorithm
    m = inst.problem.m
    bounds = inst.bounds(algorithm, config.R)
    paper = None
    try:
        paper = step_sizes(bounds, config.T, algorithm, m,
                           radius=config.radius, delta=None if full_batch else config.delta)
    except ValueError:
        if "paper" in (config.eta_lambda, config.eta_theta if config.solver == "stochastic" else None):
            raise
    eta_theta = paper.eta_theta if config.eta_theta == "paper" and paper else config.eta_theta
    eta_lambda = paper.eta_lambda if config.eta_lambda == "paper" and paper else config.eta_lambda
    if config.solver == "oracle":
        eta_theta = None
    mult = config.step_multiplier
    eta_theta = None if eta_theta is None else float(eta_theta) * mult
    eta_lambda = float(eta_lambda) * mult
    follows_formulas = (
        paper is not None and mult == 1.0 and config.eta_lambda == "paper"
        and (config.solver == "oracle" or config.eta_theta == "paper")
    )
    schedule = StepSchedule(
        eta_theta, eta_lambda, config.T, bounds, m, config.radius,
        None if full_batch else config.delta,
    )
    return schedule, follows_formulas


def _train(config: RunConfig, inst: Instance, schedule: StepSchedule, problem, lipschitz):
    algorithm = config.algorithm
    source = StochasticGradientSource(config.minibatch_size or 2**62, config.seed)
    if algorithm == "lagrangian_oracle":
        oracle = config.oracle_spec(lipschitz)
        return oracle_lagrangian(problem, oracle, config.R, config.T, schedule.eta_lambda, schedule), oracle
    if algorithm == "proxy_oracle":
        oracle = config.oracle_spec(lipschitz)
        return oracle_proxy_lagrangian(problem, oracle, config.T, schedule.eta_lambda, schedule), oracle
    if algorithm == "lagrangian_stochastic":
        trace = stochastic_lagrangian(problem, source, config.R, config.T,
                                      schedule.eta_theta, schedule.eta_lambda, schedule)
    else:
        trace = stochastic_proxy_lagrangian(problem, source, config.T,
                                            schedule.eta_theta, schedule.eta_lambda, schedule)
    oracle = config.oracle_spec(lipschitz) if config.oracle is not None else None
    return trace, oracle


def _evaluate_all(problem: ConstrainedProblem, thetas: np.ndarray):
    evals = [problem.evaluate(theta) for theta in thetas]
    g0 = np.array([e[0] for e in evals])
    g = np.array([e[1] for e in evals]).reshape(len(thetas), problem.m)
    return g0, g


def _shrink_section(config, original, trace, bound_report, use_cached):
    mode = config.shrink
    if mode == "bisect":
        epsilon = "auto"
    elif mode == "theoretical":
        epsilon = bound_report.feasibility_bound if bound_report else None
        if epsilon is None:
            warnings.warn("theoretical shrink tolerance is unavailable; bisecting instead")
            epsilon = "auto"
    else:
        epsilon = float(mode)
    cached = trace if use_cached else _without_cache(trace)
    try:
        mixture, solution, eps = shrink(original, cached, epsilon, config.max_candidates)
    except ShrinkInfeasible as exc:
        return None, {"mode": mode, "status": "infeasible", "epsilon": exc.epsilon,
                      "epsilon_min_hint": exc.epsilon_min}
    section = {
        "mode": mode,
        "status": "optimal",
        "epsilon": eps,
        "support_size": mixture.size,
        "active_constraints": solution.active,
        "lp_objective": solution.objective,
    }
    return mixture, section


def _without_cache(trace: IterateTrace) -> IterateTrace:
    return IterateTrace(trace.thetas, trace.lambdas, trace.formulation, seed=trace.seed,
                        schedule=trace.schedule, radius=trace.radius, rho=trace.rho)


def run(config: RunConfig, out_dir=None) -> RunReport:
    """Train, shrink and evaluate one configuration; optionally write artifacts.

    Lagrangian formulations train on the proxy constraints when the problem
    has them (both players see the same functions); mixtures are always
    evaluated on the original constraints.
    """
    timings = {}
    start = time.perf_counter()
    inst, data = build_problem(config)
    original = inst.problem
    algorithm = config.algorithm
    lagrangian = algorithm.startswith("lagrangian")
    trained = original.relaxed() if lagrangian else original
    full_batch = config.minibatch_size is None or (
        original.num_examples is None or config.minibatch_size >= original.num_examples
    )
    try:
        schedule, follows = _schedule(config, inst, full_batch)
    except ValueError as exc:
        raise ConfigError("eta_lambda", str(exc)) from None
    lipschitz = inst.lipschitz(algorithm, config.R) if (not lagrangian or config.radius) else None
    timings["setup"] = time.perf_counter() - start

    start = time.perf_counter()
    trace, oracle = _train(config, inst, schedule, trained, lipschitz)
    timings["train"] = time.perf_counter() - start

    start = time.perf_counter()
    rho = trace.rho
    epsilons = None
    if follows:
        epsilons = theoretical_epsilons(schedule, algorithm, rho=rho, exact_gradients=full_batch)
    bound_report = None
    if epsilons is not None:
        bound_report = check_bounds(trained, trace, epsilons, inst.margin, inst.reference_objective)
    averaged = importance_weighted_mixture(trace) if not lagrangian else uniform_mixture(trace)
    g0_all, g_all = _evaluate_all(original, trace.thetas)

    regret = {}
    if lagrangian:
        if math.isfinite(config.R):
            regret_oracle = oracle or config.oracle_spec(lipschitz)
            try:
                ext = external_regret_lagrangian(trained, trace, config.R, regret_oracle)
                regret = {"lambda_regret": ext.lambda_regret, "theta_regret": ext.theta_regret,
                          "total": ext.total, "oracle_rho": ext.rho}
            except ValueError as exc:
                regret = {"skipped": str(exc)}
    else:
        payoffs = np.column_stack([np.zeros(trace.T), g_all])
        regret = {"swap_regret": swap_regret(trace.lambdas, payoffs)}
    timings["evaluate"] = time.perf_counter() - start

    start = time.perf_counter()
    mixture, shrink_info = _shrink_section(config, original, trace, bound_report, use_cached=not lagrangian)
    timings["shrink"] = time.perf_counter() - start

    report = {
        "status": "ok" if mixture is not None else "infeasible",
        "config": config.to_dict(),
        "algorithm": algorithm,
        "problem": {"name": inst.name, "m": original.m, "dim": original.dim},
        "schedule": {
            "eta_theta": schedule.eta_theta,
            "eta_lambda": schedule.eta_lambda,
            "T": config.T,
            "follows_formulas": follows,
            "full_batch": full_batch,
            "bounds": {
                "theta_norm": schedule.bounds.theta_norm,
                "grad_norm": schedule.bounds.grad_norm,
                "lambda_grad_norm": schedule.bounds.lambda_grad_norm,
                "objective_range": schedule.bounds.objective_range,
            },
        },
        "trace": {
            "T": trace.T,
            "final_lambda": trace.lambdas[-1],
            "lambda_bar": trace.lambda_bar(),
            "oracle_rho": rho,
        },
        "epsilons": (
            None if epsilons is None
            else {"epsilon": epsilons} if lagrangian
            else {"epsilon_theta": epsilons[0], "epsilon_lambda": epsilons[1]}
        ),
        "bounds": None if bound_report is None else bound_report.to_dict(),
        "regret": regret,
        "averaged": _dataset_metrics(inst, data, "train", original, averaged),
        "shrink": shrink_info,
        "mixture": None,
        "metrics": {},
    }
    if mixture is not None:
        report["mixture"] = {"indices": mixture.indices, "weights": mixture.weights,
                             "support": mixture.support}
        metrics = {"train": _dataset_metrics(inst, data, "train", original, mixture)}
        if inst.validation is not None:
            metrics["validation"] = _dataset_metrics(inst, data, "validation", inst.validation, mixture)
        if "test" in data:
            metrics["test"] = _dataset_metrics(inst, data, "test", None, mixture)
        report["metrics"] = metrics

    result = RunReport(_plain(report), timings)
    if out_dir is not None:
        out = Path(out_dir)
        result.write(out)
        trace.save(out / "trace.npz")
        _write_iterates(out, trace, g0_all, g_all)
        if mixture is not None:
            _save_mixture(out / "mixture.npz", mixture)
    return result


@dataclass
class SweepResult:
    best_index: int
    multipliers: list
    reports: list
    on_boundary: bool

    def to_dict(self) -> dict:
        return {
            "best_index": self.best_index,
            "best_multiplier": self.multipliers[self.best_index],
            "on_boundary": self.on_boundary,
            "multipliers": list(self.multipliers),
            "runs": [r.data for r in self.reports],
        }


def sweep(config: RunConfig, multipliers: Sequence[float], out_dir=None) -> SweepResult:
    """Run each step-size multiplier and pick the best run on validation data.

    Selection uses :func:`best_model_heuristic` on the shrunk mixtures'
    validation objective and constraint violations. A warning is issued
    when the winner sits at either end of a grid with several points.
    """
    multipliers = list(multipliers)
    if not multipliers:
        raise ConfigError("sweep", "empty grid")
    inst, _ = build_problem(config)
    if inst.validation is None:
        raise ConfigError("problem", "sweep needs a validation split")
    reports, scores = [], []
    for k, mult in enumerate(multipliers):
        cfg = copy.deepcopy(config)
        cfg.step_multiplier = float(mult)
        report = run(cfg, None if out_dir is None else Path(out_dir) / f"run_{k}")
        reports.append(report)
        valid = report["metrics"].get("validation")
        if valid is None:
            scores.append((math.inf, [math.inf] * inst.problem.m))
        else:
            scores.append((valid["objective"], [max(0.0, v) for v in valid["constraints"]]))
    best = best_model_heuristic(scores)
    on_boundary = len(multipliers) > 1 and best in (0, len(multipliers) - 1)
    if on_boundary:
        warnings.warn(
            f"best step-size multiplier {multipliers[best]} is on the grid boundary; widen the grid"
        )
    result = SweepResult(best, multipliers, reports, on_boundary)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "sweep.json").write_text(
            json.dumps(_plain(result.to_dict()), indent=2, allow_nan=False) + "\n"
        )
    return result


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------


def _cmd_run(args) -> int:
    config = load_config(args.config, args.seed)
    report = run(config, args.out)
    print(f"status={report.status} support={report['shrink'].get('support_size')}")
    return 0 if report.status == "ok" else 1


def _cmd_sweep(args) -> int:
    config = load_config(args.config, args.seed)
    if args.grid:
        try:
            grid = [float(v) for v in args.grid.split(",")]
        except ValueError:
            raise ConfigError("--grid", "must be comma-separated numbers") from None
    elif config.sweep:
        grid = config.sweep
    else:
        grid = [2.0**k for k in range(-6, 3)]
    result = sweep(config, grid, args.out)
    print(f"best_index={result.best_index} multiplier={grid[result.best_index]} "
          f"on_boundary={result.on_boundary}")
    return 0


def _cmd_shrink(args) -> int:
    config = load_config(args.config, args.seed)
    if args.epsilon is not None:
        config.shrink = args.epsilon if args.epsilon in ("bisect", "theoretical") else float(args.epsilon)
    if config.shrink == "theoretical":
        raise ConfigError("shrink", "re-shrinking a saved trace supports 'bisect' or a number")
    inst, _ = build_problem(config)
    try:
        trace = IterateTrace.load(args.trace)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError("--trace", str(exc)) from None
    mixture, info = _shrink_section(config, inst.problem, trace, None, use_cached=False)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    body = {"status": info["status"], "shrink": info}
    if mixture is not None:
        body["mixture"] = {"indices": mixture.indices, "weights": mixture.weights,
                           "support": mixture.support}
        body["metrics"] = {"train": _metrics_dict(inst.problem, mixture)}
        _save_mixture(out / "mixture.npz", mixture)
    (out / "report.json").write_text(RunReport(_plain(body)).to_json())
    print(f"status={info['status']} epsilon={info['epsilon']}")
    return 0 if mixture is not None else 1


def _cmd_eval(args) -> int:
    config = load_config(args.config, args.seed)
    inst, data = build_problem(config)
    try:
        mixture = _load_mixture(args.mixture)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError("--mixture", str(exc)) from None
    if mixture.support.shape[1] != inst.problem.dim:
        raise ConfigError("--mixture", "support dimension does not match the problem")
    metrics = {"train": _dataset_metrics(inst, data, "train", inst.problem, mixture)}
    if inst.validation is not None:
        metrics["validation"] = _dataset_metrics(inst, data, "validation", inst.validation, mixture)
    if "test" in data:
        metrics["test"] = _dataset_metrics(inst, data, "test", None, mixture)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(RunReport(_plain({"status": "ok", "metrics": metrics})).to_json())
    print(json.dumps(_plain(metrics["train"])))
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lagrangian-games", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", required=True, help="output directory")
        return p

    common(sub.add_parser("run", help="train, shrink and evaluate"))
    p = common(sub.add_parser("sweep", help="step-size grid search with validation selection"))
    p.add_argument("--grid", default=None, help="comma-separated step-size multipliers")
    p = common(sub.add_parser("shrink", help="re-shrink a saved trace"))
    p.add_argument("--trace", required=True, help="trace.npz written by run")
    p.add_argument("--epsilon", default=None, help="tolerance, or 'bisect'")
    p = common(sub.add_parser("eval", help="re-evaluate a saved mixture"))
    p.add_argument("--mixture", required=True, help="mixture.npz written by run or shrink")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    handlers = {"run": _cmd_run, "sweep": _cmd_sweep, "shrink": _cmd_shrink, "eval": _cmd_eval}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
