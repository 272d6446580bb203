"""Conditional samples, quantile curves, densities and intervals at a chosen lambda."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from .model import FittedModel
from .selection import draw_levels


class PointMassError(ValueError):
    """Generated samples have zero spread; there is no density to smooth."""

    def __init__(self, location: float):
        super().__init__(f"all samples equal {location!r}: point mass, not a density")
        self.location = location


@dataclass
class GeneratedSamples:
    x: np.ndarray
    lambda_star: float
    xi: np.ndarray
    values: np.ndarray


@dataclass
class DensityGrid:
    y: np.ndarray
    density: np.ndarray
    bandwidth: float


@dataclass
class CdeReport:
    x: np.ndarray
    density: DensityGrid | None
    point_mass: float | None
    taus: np.ndarray
    quantiles: np.ndarray
    interval: tuple[float, float, float]
    mean: float
    sd: float


def generate(model: FittedModel, x, lambda_star: float, b: int, rng: np.random.Generator) -> GeneratedSamples:
    """Draw ``b`` responses G(x, xi_k, lambda*) with xi_k ~ Uniform(0, 1)."""
    if b < 1:
        raise ValueError(f"need b >= 1 samples, got {b}")
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    xi = draw_levels(b, rng)
    return GeneratedSamples(x[0].copy(), float(lambda_star), xi, model.quantiles(x, xi, lambda_star))


def quantile_curve(model: FittedModel, x, taus, lambda_star: float) -> np.ndarray:
    taus = np.asarray(taus, dtype=np.float64).reshape(-1)
    if np.any(np.diff(taus) < 0):
        raise ValueError("quantile levels must be ascending")
    return model.quantiles(np.asarray(x, dtype=np.float64).reshape(1, -1), taus, lambda_star)


def silverman_bandwidth(values: np.ndarray) -> float:
    sd = values.std(ddof=1)
    q75, q25 = np.percentile(values, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if spread <= 0:
        spread = sd
    return 0.9 * spread * values.size ** (-0.2)


def kde(samples: GeneratedSamples | np.ndarray, grid_size: int = 512) -> DensityGrid:
    """Gaussian KDE with Silverman's bandwidth on an equispaced grid.

    The grid spans three bandwidths past the sample range on each side.
    """
    values = np.asarray(getattr(samples, "values", samples), dtype=np.float64).reshape(-1)
    if values.size < 2:
        raise ValueError("kde needs at least two samples")
    if np.ptp(values) == 0:
        raise PointMassError(float(values[0]))
    bw = silverman_bandwidth(values)
    y = np.linspace(values.min() - 3 * bw, values.max() + 3 * bw, grid_size)
    z = (y[:, None] - values[None, :]) / bw
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (values.size * bw * np.sqrt(2 * np.pi))
    return DensityGrid(y, dens, bw)


def modes(grid: DensityGrid, min_rel_prominence: float = 0.1) -> np.ndarray:
    """Grid locations of density peaks that stand out from their surroundings.

    A peak counts when its topographic prominence is at least
    ``min_rel_prominence`` times the highest density value. Unlike raw local
    maxima this ignores the small ripples a KDE of a few thousand draws shows
    near the top of a smooth unimodal density.
    """
    peaks, _ = find_peaks(grid.density, prominence=min_rel_prominence * grid.density.max())
    return grid.y[peaks]


def prediction_interval(samples: GeneratedSamples | np.ndarray, level: float = 0.95) -> tuple[float, float]:
    """Central interval from linearly interpolated empirical quantiles."""
    if not 0 < level < 1:
        raise ValueError(f"level must be in (0, 1), got {level}")
    values = np.asarray(getattr(samples, "values", samples), dtype=np.float64).reshape(-1)
    lo, hi = np.quantile(values, [(1 - level) / 2, 1 - (1 - level) / 2], method="linear")
    return float(lo), float(hi)


def moments(samples: GeneratedSamples | np.ndarray) -> tuple[float, float]:
    values = np.asarray(getattr(samples, "values", samples), dtype=np.float64).reshape(-1)
    if values.size < 2:
        raise ValueError("moments need at least two samples")
    return float(values.mean()), float(values.std(ddof=1))


DEFAULT_TAUS = np.round(np.arange(1, 10) / 10, 10)


def cde_report(model: FittedModel, x, lambda_star: float, b: int, rng: np.random.Generator,
               taus=DEFAULT_TAUS, level: float = 0.95, grid_size: int = 256) -> CdeReport:
    samples = generate(model, x, lambda_star, b, rng)
    try:
        dens, mass = kde(samples, grid_size), None
    except PointMassError as exc:
        dens, mass = None, exc.location
    lo, hi = prediction_interval(samples, level)
    mean, sd = moments(samples) if b > 1 else (float(samples.values[0]), 0.0)
    return CdeReport(samples.x, dens, mass, np.asarray(taus, dtype=np.float64),
                     quantile_curve(model, x, taus, lambda_star), (lo, hi, level), mean, sd)


def write_report_csv(path, report: CdeReport) -> None:
    """One long-format CSV: ``kind, key, value`` rows for every payload piece."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "key", "value"])
        for j, v in enumerate(report.x):
            w.writerow(["x", f"x{j + 1}", repr(float(v))])
        w.writerow(["moment", "mean", repr(report.mean)])
        w.writerow(["moment", "sd", repr(report.sd)])
        lo, hi, level = report.interval
        w.writerow(["interval", "level", repr(level)])
        w.writerow(["interval", "lo", repr(lo)])
        w.writerow(["interval", "hi", repr(hi)])
        for t, q in zip(report.taus, report.quantiles):
            w.writerow(["quantile", repr(float(t)), repr(float(q))])
        if report.density is not None:
            for y, f in zip(report.density.y, report.density.density):
                w.writerow(["density", repr(float(y)), repr(float(f))])
        else:
            w.writerow(["point_mass", "location", repr(report.point_mass)])
