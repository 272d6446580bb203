"""A trained network bundled with what is needed to use it on raw data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Standardizer
from .pmnn import PMNNParams, load_checkpoint, predict, save_checkpoint


@dataclass
class FittedModel:
    params: PMNNParams
    scaler: Standardizer
    lambda_grid: np.ndarray
    seed: int = 0
    columns: list[str] = field(default_factory=list)
    target: str = "y"

    @property
    def p(self) -> int:
        return self.params.p

    def quantiles(self, x, tau, lam) -> np.ndarray:
        """G(x_i, tau_i, lam) on the original response scale.

        ``x`` is raw (unstandardised); a single row is broadcast over ``tau``.
        """
        lam_in = lam if self.params.config.lambda_as_input else None
        z = predict(self.params, self.scaler.x(x), tau, lam_in)
        return self.scaler.y_back(z)

    def save(self, path) -> None:
        extra = {"scaler": self.scaler.to_dict(), "lambda_grid": [float(v) for v in self.lambda_grid],
                 "columns": list(self.columns), "target": self.target}
        save_checkpoint(path, self.params, self.seed, extra)

    @classmethod
    def load(cls, path) -> "FittedModel":
        params, seed, extra = load_checkpoint(path)
        scaler = Standardizer.from_dict(extra["scaler"]) if "scaler" in extra else Standardizer.identity(params.p)
        grid = np.asarray(extra.get("lambda_grid", [0.0]), dtype=np.float64)
        columns = list(extra.get("columns") or [f"x{j + 1}" for j in range(params.p)])
        return cls(params, scaler, grid, seed, columns, extra.get("target", "y"))
