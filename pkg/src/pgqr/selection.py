"""Choosing the penalty weight from validation PIT values."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import FittedModel
from .pmnn import data_features, join, quantile_features

# rows of the (n_val, M, width) activation block evaluated at once
_CHUNK_ELEMENTS = 4_000_000


@dataclass
class PitVector:
    lam: float
    p_hat: np.ndarray


@dataclass
class SelectionResult:
    lambda_star: float
    table: list[dict] = field(default_factory=list)
    pits: list[PitVector] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lambda", "cvm", "cond_sd", "coverage"])
            for row in self.table:
                w.writerow([repr(row["lambda"]), repr(row["cvm"]), repr(row["cond_sd"]), repr(row["coverage"])])


def draw_levels(m: int, rng: np.random.Generator) -> np.ndarray:
    if m < 1:
        raise ValueError(f"need at least one draw, got M={m}")
    taus = rng.random(m)
    return np.where(taus == 0.0, np.nextafter(0.0, 1.0), taus)


def generated_matrix(model: FittedModel, x, lam: float, taus: np.ndarray) -> np.ndarray:
    """G(x_i, tau_k, lam) on the response scale, shape (rows of x, len(taus))."""
    params = model.params
    zc = quantile_features(params, taus)
    lam_in = lam if params.config.lambda_as_input else None
    zu = data_features(params, model.scaler.x(x), lam_in)
    rows = max(1, _CHUNK_ELEMENTS // (zc.size or 1))
    out = np.empty((zu.shape[0], zc.shape[0]))
    for lo in range(0, zu.shape[0], rows):
        block = zu[lo:lo + rows, None, :]
        out[lo:lo + rows] = join(params, zc[None, :, :], block)
    return model.scaler.y_back(out)


def pit_from_samples(samples: np.ndarray, y) -> np.ndarray:
    """Fraction of each row's generated values strictly below the response."""
    samples = np.atleast_2d(samples)
    y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
    return np.mean(samples < y, axis=1)


def pit_estimate(model: FittedModel, x_val, y_val, lam: float, m: int, rng: np.random.Generator):
    """Monte Carlo estimate of P(G(x, tau, lam) < y) with ``m`` uniform levels.

    Accepts one validation point or a batch; returns a float or an array.
    """
    taus = draw_levels(m, rng)
    x_val = np.atleast_2d(np.asarray(x_val, dtype=np.float64))
    p = pit_from_samples(generated_matrix(model, x_val, lam, taus), y_val)
    return float(p[0]) if np.ndim(y_val) == 0 else p


def cvm_distance(p_hat) -> float:
    """Cramér-von Mises-type distance of PIT values to Uniform(0, 1).

    Sorts the values, then returns ``sum_i (i/n - p_(i) - 2/n)^2 / n``. The
    target ``i/n - 2/n`` is formed as the single quotient ``(i - 2)/n``, which
    is one rounding instead of three and makes the distance exactly zero when
    the sorted values are those quotients.
    """
    p = np.sort(np.asarray(p_hat, dtype=np.float64).reshape(-1))
    n = p.size
    if n == 0:
        raise ValueError("cvm_distance of an empty sample")
    i = np.arange(1, n + 1)
    return float(np.sum(((i - 2) / n - p) ** 2) / n)


def _sorted_outputs(model: FittedModel, zc: np.ndarray, zu: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Standardised G at sorted level index ``k[i]`` for data row ``i``."""
    return join(model.params, zc[k], zu)


def pit_by_bisection(model: FittedModel, zc_sorted: np.ndarray, zu: np.ndarray, y_std: np.ndarray) -> np.ndarray:
    """Count of sorted levels with G below ``y`` per row, found by bisection.

    Valid because G is nondecreasing in tau, so the levels with G < y form a
    prefix of the sorted levels. Matches :func:`pit_from_samples` on the full
    sample matrix.
    """
    m = zc_sorted.shape[0]
    lo = np.zeros(y_std.size, dtype=np.int64)
    hi = np.full(y_std.size, m, dtype=np.int64)
    while True:
        active = lo < hi
        if not active.any():
            break
        mid = (lo + hi) // 2
        idx = np.nonzero(active)[0]
        below = _sorted_outputs(model, zc_sorted, zu[idx], mid[idx]) < y_std[idx]
        lo[idx[below]] = mid[idx[below]] + 1
        hi[idx[~below]] = mid[idx[~below]]
    return lo


def select_lambda(model: FittedModel, x_val, y_val, grid, m: int, rng: np.random.Generator,
                  level: float = 0.95, diagnostic_levels: int = 64) -> SelectionResult:
    """Pick the grid value whose validation PIT values are closest to uniform.

    One set of ``m`` quantile levels is shared by every grid value. Ties go to
    the smallest lambda. The table also carries, per lambda, the average
    generated conditional sd (from ``diagnostic_levels`` evenly thinned sorted
    levels) and the coverage of central ``level`` intervals built from the
    order statistics of all ``m`` draws.
    """
    grid = np.asarray(getattr(grid, "values", grid), dtype=np.float64)
    y_val = np.asarray(y_val, dtype=np.float64).reshape(-1)
    x_val = np.atleast_2d(np.asarray(x_val, dtype=np.float64))
    if y_val.size == 0:
        raise ValueError("empty validation set")
    params, scaler = model.params, model.scaler
    taus = np.sort(draw_levels(m, rng))
    zc = quantile_features(params, taus)
    x_std = scaler.x(x_val)
    y_std = scaler.y(y_val)
    thin = np.unique(np.linspace(0, m - 1, min(m, diagnostic_levels)).round().astype(np.int64))
    # np.quantile(method="linear") positions on the sorted sample
    pos = (m - 1) * np.array([(1 - level) / 2, 1 - (1 - level) / 2])
    below, frac = np.floor(pos).astype(np.int64), pos - np.floor(pos)
    above = np.minimum(below + 1, m - 1)
    n = y_val.size
    result = SelectionResult(lambda_star=float(grid[0]))
    best = np.inf
    for lam in grid:
        zu = data_features(params, x_std, float(lam) if params.config.lambda_as_input else None)
        p_hat = pit_by_bisection(model, zc, zu, y_std) / m
        d = cvm_distance(p_hat)
        ends = []
        for b_i, a_i, f in zip(below, above, frac):
            g_lo = join(params, zc[b_i], zu)
            g_hi = join(params, zc[a_i], zu)
            ends.append(scaler.y_back(g_lo + f * (g_hi - g_lo)))
        cover = float(np.mean((y_val >= ends[0]) & (y_val <= ends[1])))
        sub = scaler.y_back(join(params, zc[thin][None, :, :], zu[:, None, :]))
        sd = sub.std(axis=1, ddof=1) if thin.size > 1 else np.zeros(n)
        result.pits.append(PitVector(float(lam), p_hat))
        result.table.append({"lambda": float(lam), "cvm": d, "cond_sd": float(sd.mean()), "coverage": cover})
        if d < best:
            best = d
            result.lambda_star = float(lam)
    return result
