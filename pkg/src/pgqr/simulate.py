"""Data-generating processes for the benchmark simulations and their oracles.

Every process draws ``X ~ N(0, I_p)`` and ``Y = g(X) + eps``:

========  ==  ==============================================================
kind      p   response
========  ==  ==============================================================
linear    20  ``X'beta + N(0, 1)``, beta equispaced on [-2, 2]
1         1   ``b X + N(0, 0.25 |X|)``, b uniform on {-1, 0, 1}
2         5   ``X'beta + eps``, eps = ncx2(1, 1) if X1 >= 0.5 else log ncx2(1, 1)
3         5   ``b1 X1 + sum_j>1 beta_j X_j + N(0, 1)``, b1 uniform on {-2, 2}
4         5   ``0.5 log(10 - X1^2) + 0.75 exp(X2 X3 / 5) - 0.25 |X4 / 2| + N(0, 1)``
5         1   ``X + N(0, 0.01)``
========  ==  ==============================================================

Variances are written in the ``N(mean, variance)`` convention. In process 4,
``X1`` is redrawn whenever ``X1^2 >= 10`` so that the logarithm is defined.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .data import Dataset

KINDS = ("linear", "1", "2", "3", "4", "5")
DIMENSIONS = {"linear": 20, "1": 1, "2": 5, "3": 5, "4": 5, "5": 1}
MC_DRAWS = 1_000_000

_BETA_LINEAR = np.linspace(-2, 2, 20)
_BETA_SIM2 = np.linspace(-2, 2, 5)
_BETA_SIM3_REST = np.linspace(-2, 2, 4)
_SIM4_X1_LIMIT = np.sqrt(10.0)


def normalize_kind(kind) -> str:
    k = str(kind).lower().removeprefix("sim")
    if k in ("linearexample", "lin"):
        k = "linear"
    if k not in KINDS:
        raise ValueError(f"unknown simulation kind {kind!r}; expected one of {KINDS}")
    return k


@dataclass(frozen=True)
class SimSpec:
    kind: str
    n: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", normalize_kind(self.kind))
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")

    @property
    def p(self) -> int:
        return DIMENSIONS[self.kind]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "seed": self.seed}


def _sim4_mean(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    return (0.5 * np.log(10.0 - x[:, 0] ** 2) + 0.75 * np.exp(x[:, 1] * x[:, 2] / 5.0)
            - 0.25 * np.abs(x[:, 3] / 2.0))


def _ncx2(rng: np.random.Generator, size) -> np.ndarray:
    return rng.noncentral_chisquare(1.0, 1.0, size=size)


def generate_data(spec: SimSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    n, p = spec.n, spec.p
    x = rng.standard_normal((n, p))
    k = spec.kind
    if k == "linear":
        y = x @ _BETA_LINEAR + rng.standard_normal(n)
    elif k == "1":
        b = rng.choice([-1.0, 0.0, 1.0], size=n)
        y = b * x[:, 0] + np.sqrt(0.25 * np.abs(x[:, 0])) * rng.standard_normal(n)
    elif k == "2":
        chi = _ncx2(rng, n)
        eps = np.where(x[:, 0] >= 0.5, chi, np.log(chi))
        y = x @ _BETA_SIM2 + eps
    elif k == "3":
        b1 = rng.choice([-2.0, 2.0], size=n)
        y = b1 * x[:, 0] + x[:, 1:] @ _BETA_SIM3_REST + rng.standard_normal(n)
    elif k == "4":
        bad = x[:, 0] ** 2 >= 10.0
        while np.any(bad):
            x[bad, 0] = rng.standard_normal(int(bad.sum()))
            bad = x[:, 0] ** 2 >= 10.0
        y = _sim4_mean(x) + rng.standard_normal(n)
    else:
        y = x[:, 0] + 0.1 * rng.standard_normal(n)
    return Dataset(x, y)


def write_sidecar(path, spec: SimSpec) -> None:
    Path(path).write_text(json.dumps({"format": "pgqr-sim/1", **spec.to_dict()}, indent=2, sort_keys=True) + "\n")


class Oracle:
    """True conditional functionals of a simulation at a covariate vector."""

    kind: str
    closed_form: bool = True
    draws: int = 0

    def mean(self, x) -> float:
        raise NotImplementedError

    def sd(self, x) -> float:
        raise NotImplementedError

    def quantile(self, x, tau) -> np.ndarray:
        raise NotImplementedError


class GaussianOracle(Oracle):
    def __init__(self, kind: str, loc, scale: float):
        self.kind = kind
        self._loc = loc
        self._scale = scale

    def mean(self, x) -> float:
        return float(self._loc(np.asarray(x, dtype=np.float64)))

    def sd(self, x) -> float:
        return self._scale

    def quantile(self, x, tau):
        return self.mean(x) + self._scale * stats.norm.ppf(tau)

    def cdf(self, x, y):
        return stats.norm.cdf((np.asarray(y) - self.mean(x)) / self._scale)


class Sim3Oracle(Oracle):
    """Equal-weight mixture of N(m + 2 x1, 1) and N(m - 2 x1, 1)."""

    kind = "3"

    def _parts(self, x):
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        return float(x[1:] @ _BETA_SIM3_REST), 2.0 * float(x[0])

    def mean(self, x) -> float:
        return self._parts(x)[0]

    def sd(self, x) -> float:
        return float(np.sqrt(1.0 + self._parts(x)[1] ** 2))

    def cdf(self, x, y):
        m, s = self._parts(x)
        y = np.asarray(y, dtype=np.float64)
        return 0.5 * (stats.norm.cdf(y - m - s) + stats.norm.cdf(y - m + s))

    def quantile(self, x, tau):
        """Bisection on the mixture CDF, to machine precision."""
        m, s = self._parts(x)
        tau = np.asarray(tau, dtype=np.float64)
        z = stats.norm.ppf(tau)
        # mixture quantile lies between the component quantiles
        lo = m - abs(s) + z - 1e-12
        hi = m + abs(s) + z + 1e-12
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = self.cdf(x, mid) < tau
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 1e-13 * np.maximum(1.0, np.abs(mid))):
                break
        return 0.5 * (lo + hi)


class MonteCarloOracle(Oracle):
    """Functionals estimated from a fixed bank of residual draws."""

    closed_form = False

    def __init__(self, kind: str, draws: int = MC_DRAWS, seed: int = 0):
        self.kind = kind
        self.draws = draws
        self.seed = seed
        rng = np.random.default_rng(seed)
        if kind == "1":
            self._slope = rng.choice([-1.0, 0.0, 1.0], size=draws)
            self._z = rng.standard_normal(draws)
        elif kind == "2":
            chi = _ncx2(rng, draws)
            self._branches = {True: np.sort(chi), False: np.sort(np.log(chi))}
        elif kind == "4":
            self._z = np.sort(rng.standard_normal(draws))
        else:
            raise ValueError(f"no Monte Carlo oracle for kind {kind!r}")
        self._cache: dict[bytes, np.ndarray] = {}

    def samples(self, x) -> np.ndarray:
        """Sorted conditional draws of Y at ``x``."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        key = x.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if self.kind == "1":
            out = np.sort(self._slope * x[0] + np.sqrt(0.25 * abs(x[0])) * self._z)
        elif self.kind == "2":
            out = float(x @ _BETA_SIM2) + self._branches[bool(x[0] >= 0.5)]
        else:
            out = float(_sim4_mean(x)[0]) + self._z
        if len(self._cache) > 64:
            self._cache.clear()
        self._cache[key] = out
        return out

    def mean(self, x) -> float:
        return float(self.samples(x).mean())

    def sd(self, x) -> float:
        return float(self.samples(x).std(ddof=1))

    def quantile(self, x, tau):
        return np.quantile(self.samples(x), tau)


def oracle_for(spec: SimSpec | str, draws: int = MC_DRAWS, seed: int = 0) -> Oracle:
    """Closed-form oracle where one exists, otherwise a ``draws``-sample Monte Carlo one."""
    kind = spec.kind if isinstance(spec, SimSpec) else normalize_kind(spec)
    if kind == "linear":
        return GaussianOracle("linear", lambda x: x.reshape(-1) @ _BETA_LINEAR, 1.0)
    if kind == "5":
        return GaussianOracle("5", lambda x: x.reshape(-1)[0], 0.1)
    if kind == "3":
        return Sim3Oracle()
    return MonteCarloOracle(kind, draws, seed)
