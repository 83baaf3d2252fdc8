"""Correlated-Gaussian benchmarks with closed-form mutual information.

Pairs are built coordinate-wise as e = rho*x + sqrt(1-rho^2)*z with x, z
standard normal, so I(X;E) = -(d/2)*ln(1-rho^2) exactly; inverting for a
target value gives rho = sqrt(1 - exp(-2*I/d)). Estimators are validated
by squared error against that ground truth, and a seeded uniform random
search stands in for adaptive hyperparameter tuning.
"""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from explinfo import mi_estimators
from explinfo.mi_estimators import TrainConfig


class SyntheticError(ValueError):
    pass


class SearchError(RuntimeError):
    pass


@dataclass(frozen=True)
class GaussianScenario:
    target_mi: float
    dim: int
    n_samples: int = 10_000
    n_validation: int = 2_000
    seed: int = 0

    def __post_init__(self):
        if self.target_mi < 0:
            raise SyntheticError("target mutual information must be nonnegative")
        if self.dim < 1:
            raise SyntheticError("dimension must be positive")

    @property
    def rho(self) -> float:
        return math.sqrt(1.0 - math.exp(-2.0 * self.target_mi / self.dim))

    @property
    def analytic_mi(self) -> float:
        rho = self.rho
        if rho == 0.0:
            return 0.0
        return -(self.dim / 2.0) * math.log1p(-(rho * rho))


def sample_scenario(scenario: GaussianScenario, n: int | None = None, seed: int | None = None):
    """Draw n aligned pairs (xs, es); deterministic under the seed."""
    n = scenario.n_samples if n is None else n
    rng = np.random.default_rng(scenario.seed if seed is None else seed)
    rho = scenario.rho
    xs = rng.standard_normal((n, scenario.dim))
    zs = rng.standard_normal((n, scenario.dim))
    es = rho * xs + math.sqrt(1.0 - rho * rho) * zs
    return xs, es


@dataclass
class ScenarioResult:
    scenario: GaussianScenario
    estimates: list
    n_failed: int = 0

    @property
    def squared_errors(self) -> list:
        truth = self.scenario.analytic_mi
        return [(est - truth) ** 2 for est in self.estimates]

    @property
    def mse(self) -> float:
        errs = self.squared_errors
        return float(np.mean(errs)) if errs else float("nan")

    @property
    def variance(self) -> float:
        if len(self.estimates) < 2:
            return 0.0
        return float(np.var(self.estimates, ddof=1))


@dataclass
class ValidationReport:
    results: list = field(default_factory=list)

    @property
    def mean_mse(self) -> float:
        values = [r.mse for r in self.results if r.estimates]
        return float(np.mean(values)) if values else float("nan")


def validate_estimator(estimator, scenarios, trials: int, seed: int = 0) -> ValidationReport:
    """Run each scenario ``trials`` times with per-trial derived seeds.

    ``estimator`` is a callable (train_xs, train_es, val_xs, val_es,
    seed) -> nats. A trial that raises is counted as a failure, warned
    about, and excluded from the squared-error aggregation.
    """
    scenarios = list(scenarios)
    if not scenarios:
        raise SyntheticError("at least one scenario required")
    if trials < 1:
        raise SyntheticError("at least one trial required")
    root = np.random.SeedSequence(seed)
    report = ValidationReport()
    for scenario, scn_seq in zip(scenarios, root.spawn(len(scenarios))):
        result = ScenarioResult(scenario=scenario, estimates=[])
        for trial_seq in scn_seq.spawn(trials):
            trial_seed = int(trial_seq.generate_state(1)[0])
            xs, es = sample_scenario(scenario, n=scenario.n_samples + scenario.n_validation, seed=trial_seed)
            split = scenario.n_samples
            try:
                value = estimator(xs[:split], es[:split], xs[split:], es[split:], trial_seed)
            except Exception as exc:
                warnings.warn(
                    f"trial failed on target {scenario.target_mi} (dim {scenario.dim}): {exc}",
                    stacklevel=2,
                )
                result.n_failed += 1
                continue
            result.estimates.append(float(value))
        report.results.append(result)
    return report


def make_infonce_estimator(config: TrainConfig, eval_batch_size: int | None = None):
    """Estimator callable for ``validate_estimator``: train the bilinear
    critic on the train split, report the estimate on the validation
    split at ``eval_batch_size`` (training batch size by default)."""

    def estimate(train_xs, train_es, val_xs, val_es, seed):
        critic, history = mi_estimators.train_infonce(train_xs, train_es, val_xs, val_es, config, seed)
        bs = config.batch_size if eval_batch_size is None else eval_batch_size
        batches = mi_estimators.make_batches(val_xs, val_es, batch_size=bs)
        return mi_estimators.infonce_estimate(batches, critic, history=history).dataset_nats

    return estimate


def write_validation_csv(report: ValidationReport, path):
    """One row per scenario: target, dim, trial counts, mean estimate,
    MSE, cross-trial variance."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target_mi_nats", "dim", "n_trials", "n_failed", "mean_estimate_nats", "mse", "variance"])
        for r in report.results:
            n_ok = len(r.estimates)
            mean_est = float(np.mean(r.estimates)) if r.estimates else float("nan")
            writer.writerow(
                [
                    repr(float(r.scenario.target_mi)),
                    r.scenario.dim,
                    n_ok + r.n_failed,
                    r.n_failed,
                    repr(mean_est),
                    repr(r.mse),
                    repr(r.variance),
                ]
            )


def format_validation_summary(report: ValidationReport) -> str:
    lines = ["target_mi  dim   mean_est      mse  variance  trials(failed)"]
    for r in report.results:
        mean_est = float(np.mean(r.estimates)) if r.estimates else float("nan")
        lines.append(
            f"{r.scenario.target_mi:9.3f}  {r.scenario.dim:4d}  {mean_est:9.4f}  {r.mse:7.4f}  {r.variance:8.5f}"
            f"  {len(r.estimates) + r.n_failed}({r.n_failed})"
        )
    lines.append(f"mean MSE over scenarios: {report.mean_mse:.4f}")
    return "\n".join(lines)


@dataclass
class SearchTraceEntry:
    config: dict
    value: float | None
    error: str | None = None


def _grid_axes(space: dict):
    """Split the space into discrete axes (lists/tuples of choices) and
    continuous axes declared as ("log_uniform", low, high)."""
    discrete, continuous = {}, {}
    for name, values in space.items():
        if isinstance(values, tuple) and len(values) == 3 and values[0] == "log_uniform":
            lo, hi = float(values[1]), float(values[2])
            if not (0 < lo < hi):
                raise SyntheticError(f"bad log-uniform bounds for {name!r}")
            continuous[name] = (lo, hi)
        else:
            choices = list(values)
            if not choices:
                raise SyntheticError(f"empty choice list for {name!r}")
            discrete[name] = choices
    return discrete, continuous


def random_search(space: dict, budget: int, objective, seed: int = 0):
    """Uniformly sample ``budget`` configurations and return the argmin.

    Purely discrete spaces are enumerated in seeded shuffled order (so a
    budget equal to the grid size visits every configuration exactly
    once); continuous dimensions are drawn log-uniformly per candidate.
    Returns (best config, trace); raises if every evaluation failed.
    """
    if budget < 1:
        raise SyntheticError("budget must be at least 1")
    if not space:
        raise SyntheticError("empty search space")
    discrete, continuous = _grid_axes(space)
    rng = np.random.default_rng(seed)
    names = list(discrete)
    grid = list(itertools.product(*(discrete[n] for n in names))) if names else [()]

    def draw_config(round_grid, i):
        cfg = dict(zip(names, round_grid[i % len(round_grid)]))
        for cname, (lo, hi) in continuous.items():
            cfg[cname] = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        return cfg

    trace = []
    best = None
    best_value = math.inf
    order = [grid[i] for i in rng.permutation(len(grid))]
    for i in range(budget):
        if i > 0 and i % len(grid) == 0:
            order = [grid[j] for j in rng.permutation(len(grid))]
        config = draw_config(order, i)
        try:
            value = float(objective(config))
        except Exception as exc:
            trace.append(SearchTraceEntry(config=config, value=None, error=str(exc)))
            continue
        trace.append(SearchTraceEntry(config=config, value=value))
        if value < best_value:
            best_value = value
            best = config
    if best is None:
        raise SearchError("every configuration failed to evaluate")
    return best, trace


INFONCE_SEARCH_SPACE = {
    "learning_rate": [1e-3, 3e-4, 1e-4, 3e-5, 1e-5],
    "batch_size": [8, 16, 32, 64],
}

PREDICTOR_SEARCH_SPACE = {
    "batch_size": [4, 8, 16],
    "learning_rate": ("log_uniform", 1e-6, 1e-2),
}
