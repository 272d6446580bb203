"""Train, tune and evaluate in one pass, as used by the CLI and the benchmarks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cde import DEFAULT_TAUS, CdeReport, cde_report
from .data import Dataset
from .metrics import MetricsReport, coverage_width, crossing_audit, pmse, quantile_pmse
from .model import FittedModel
from .rng import substream
from .selection import SelectionResult, select_lambda
from .trainer import TrainConfig, TrainReport, train


@dataclass
class Evaluation:
    metrics: MetricsReport
    reports: list[CdeReport] = field(default_factory=list)
    y: np.ndarray | None = None


@dataclass
class RunResult:
    model: FittedModel
    train_report: TrainReport
    selection: SelectionResult
    evaluation: Evaluation | None = None

    @property
    def lambda_star(self) -> float:
        return self.selection.lambda_star


def tune(model: FittedModel, val: Dataset, m: int, seed: int) -> SelectionResult:
    return select_lambda(model, val.x, val.y, model.lambda_grid, m, substream(seed, "pit"))


def describe(model: FittedModel, xs, lambda_star: float, b: int, seed: int,
             taus=DEFAULT_TAUS, level: float = 0.95) -> list[CdeReport]:
    """Per-point conditional summaries; point ``i`` uses its own xi substream."""
    return [cde_report(model, x, lambda_star, b, substream(seed, "xi", i), taus, level)
            for i, x in enumerate(np.atleast_2d(xs))]


def evaluate(model: FittedModel, lambda_star: float, test: Dataset, oracle=None, b: int = 1000,
             seed: int = 0, taus=DEFAULT_TAUS, level: float = 0.95) -> Evaluation:
    reports = describe(model, test.x, lambda_star, b, seed, taus, level)
    intervals = [r.interval[:2] for r in reports]
    cov, width = coverage_width(intervals, test.y)
    curves = np.array([r.quantiles for r in reports])
    metrics = MetricsReport(np.nan, np.nan, cov, width, crossing_audit(curves))
    if oracle is not None:
        metrics.pmse_mean = pmse([r.mean for r in reports], [oracle.mean(x) for x in test.x])
        metrics.pmse_sd = pmse([r.sd for r in reports], [oracle.sd(x) for x in test.x])
        metrics.quantile_pmse = quantile_pmse(curves, oracle, test.x, taus)
    return Evaluation(metrics, reports, test.y)


def fit(train_set: Dataset, val: Dataset, config: TrainConfig, m: int = 1000) -> RunResult:
    model, report = train(train_set, config)
    return RunResult(model, report, tune(model, val, m, config.seed))
