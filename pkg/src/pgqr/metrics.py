"""Accuracy, coverage and crossing checks for conditional estimates."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CROSSING_TOL = 1e-9


@dataclass
class MetricsReport:
    pmse_mean: float
    pmse_sd: float
    coverage: float
    avg_width: float
    crossing_violations: int = 0
    quantile_pmse: dict[float, float] = field(default_factory=dict)


def pmse(estimates, truths) -> float:
    """Mean squared difference between estimated and true functionals."""
    est = np.asarray(estimates, dtype=np.float64).reshape(-1)
    tru = np.asarray(truths, dtype=np.float64).reshape(-1)
    if est.size != tru.size:
        raise ValueError(f"length mismatch: {est.size} estimates vs {tru.size} truths")
    if est.size == 0:
        raise ValueError("pmse of empty lists")
    return float(np.mean((est - tru) ** 2))


def coverage_width(intervals, y_test) -> tuple[float, float]:
    """Share of responses inside their closed interval, and mean interval width."""
    iv = np.asarray(intervals, dtype=np.float64).reshape(-1, 2)
    y = np.asarray(y_test, dtype=np.float64).reshape(-1)
    if iv.shape[0] != y.size:
        raise ValueError(f"{iv.shape[0]} intervals for {y.size} responses")
    if np.any(iv[:, 0] > iv[:, 1]):
        bad = int(np.argmax(iv[:, 0] > iv[:, 1]))
        raise ValueError(f"interval {bad} has lo > hi: {tuple(iv[bad])}")
    covered = (y >= iv[:, 0]) & (y <= iv[:, 1])
    return float(covered.mean()), float(np.mean(iv[:, 1] - iv[:, 0]))


def quantile_pmse(curves, oracle, xs, taus) -> dict[float, float]:
    """Per-level PMSE of estimated quantile curves against ``oracle.quantile``.

    ``curves`` has one row per test point in ``xs`` and one column per tau.
    """
    curves = np.atleast_2d(np.asarray(curves, dtype=np.float64))
    taus = np.asarray(taus, dtype=np.float64).reshape(-1)
    if np.any((taus <= 0) | (taus >= 1)):
        raise ValueError("quantile levels must lie in (0, 1)")
    truth = np.array([np.asarray(oracle.quantile(x, taus)).reshape(-1) for x in xs])
    return {float(t): pmse(curves[:, j], truth[:, j]) for j, t in enumerate(taus)}


def crossing_audit(curves, tol: float = CROSSING_TOL) -> int:
    """Count adjacent levels where a curve drops by more than ``tol``."""
    curves = np.atleast_2d(np.asarray(curves, dtype=np.float64))
    return int(np.sum(curves[:, 1:] < curves[:, :-1] - tol))


def aggregate(reports: list[MetricsReport]) -> MetricsReport:
    """Plain mean over replicates, field by field."""
    if not reports:
        raise ValueError("no replicate reports")
    taus = reports[0].quantile_pmse.keys()
    return MetricsReport(
        pmse_mean=float(np.mean([r.pmse_mean for r in reports])),
        pmse_sd=float(np.mean([r.pmse_sd for r in reports])),
        coverage=float(np.mean([r.coverage for r in reports])),
        avg_width=float(np.mean([r.avg_width for r in reports])),
        crossing_violations=int(sum(r.crossing_violations for r in reports)),
        quantile_pmse={t: float(np.mean([r.quantile_pmse[t] for r in reports])) for t in taus},
    )


TABLE_COLUMNS = ["method", "sim", "pmse_mean", "pmse_sd", "coverage", "width"]


def write_table(path, rows: list[tuple[str, str, MetricsReport]]) -> None:
    """Write rows shaped like the benchmark summary table."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for method, sim, r in rows:
            w.writerow([method, sim, f"{r.pmse_mean:.10g}", f"{r.pmse_sd:.10g}",
                        f"{r.coverage:.10g}", f"{r.avg_width:.10g}"])
