"""Minibatch optimisation of the penalised generative quantile objective."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .autodiff import Tape
from .data import Dataset, Standardizer
from .loss import pgqr_batch_loss
from .model import FittedModel
from .pmnn import PMNNConfig, PMNNParams, TapedParams, init_params, positivity_transform
from .rng import substream

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class LambdaGrid:
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("lambda grid is empty")
        arr = np.asarray(vals)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("lambda grid values must be finite and non-negative")
        if np.any(np.diff(arr) <= 0):
            raise ValueError("lambda grid must be strictly ascending")
        object.__setattr__(self, "values", vals)

    @classmethod
    def equispaced(cls, lo: float = 0.0, hi: float = 1.0, count: int = 100) -> "LambdaGrid":
        if count == 1:
            return cls((lo,))
        return cls(tuple(np.linspace(lo, hi, count)))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    learning_rate: float = 2e-3
    # "constant", or "cosine": anneal the rate to zero over the run
    lr_schedule: str = "cosine"
    batch_size: int = 256
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # decoupled decay on the data branch's covariate input weights
    weight_decay: float = 10.0
    alpha: float = 1.0
    lambda_grid: LambdaGrid = field(default_factory=LambdaGrid.equispaced)
    seed: int = 0
    # "response": check loss and penalty in original units; "standardized": in z-units
    loss_scale: str = "response"
    pmnn: PMNNConfig = field(default_factory=PMNNConfig)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.weight_decay >= 0:
            raise ValueError("weight_decay must be non-negative")
        if self.learning_rate * self.weight_decay >= 1:
            raise ValueError("learning_rate * weight_decay must be below 1 (per-step shrink factor)")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.loss_scale not in ("response", "standardized"):
            raise ValueError(f"unknown loss_scale {self.loss_scale!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda_grid"] = list(self.lambda_grid.values)
        d["pmnn"] = self.pmnn.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "lambda_grid" in d:
            g = d["lambda_grid"]
            if isinstance(g, dict):
                d["lambda_grid"] = LambdaGrid.equispaced(g.get("lo", 0.0), g.get("hi", 1.0), g.get("count", 100))
            else:
                d["lambda_grid"] = LambdaGrid(tuple(g))
        if "pmnn" in d:
            d["pmnn"] = PMNNConfig.from_dict(d["pmnn"])
        return cls(**d)


@dataclass
class TrainReport:
    epoch_loss: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    steps: int = 0
    checksum: str = ""

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "mean_loss", "seconds"])
            for i, (loss, sec) in enumerate(zip(self.epoch_loss, self.epoch_seconds), start=1):
                w.writerow([i, repr(loss), f"{sec:.6f}"])


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, arrays: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.m is None:
            self.m = [np.zeros_like(a) for a in arrays]
            self.v = [np.zeros_like(a) for a in arrays]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            a -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, lr=1e-3):
        self.lr = lr

    def step(self, arrays, grads) -> None:
        for a, g in zip(arrays, grads):
            a -= self.lr * g


def make_optimizer(config: TrainConfig):
    if config.optimizer == "adam":
        return Adam(config.learning_rate, config.beta1, config.beta2, config.eps)
    return SGD(config.learning_rate)


def sample_noise(n: int, grid: LambdaGrid, rng: np.random.Generator) -> np.ndarray:
    """Per-example ``(tau, tau', lambda)`` rows for one minibatch.

    ``tau`` and ``tau'`` are independent Uniform(0, 1); ``lambda`` is uniform
    over the grid values.
    """
    if n < 1:
        raise ValueError(f"need n >= 1 draws, got {n}")
    taus = rng.random((n, 2))
    # Generator.random is on [0, 1); the network needs the open interval
    taus = np.where(taus == 0.0, np.nextafter(0.0, 1.0), taus)
    lam = grid.array[rng.integers(0, len(grid), size=n)]
    return np.column_stack([taus, lam])


def loss_and_grads(params: PMNNParams, x, y, draws, alpha: float, response_scale: float = 1.0):
    tape = Tape()
    tp = TapedParams.attach(params, tape)
    root = pgqr_batch_loss(tp, x, y, draws, alpha, tape, response_scale)
    grads = tape.backward(root)
    return float(root.value[0, 0]), [grads[leaf] for leaf in tp.leaves]


def _decay_weights(params: PMNNParams, factor: float) -> None:
    """Shrink the data branch's covariate input weights in place.

    Only the first layer's covariate rows are decayed. The penalty-weight row
    and the hidden layers carry the generator's dependence on lambda, which
    is a weak signal that decay would erase.
    """
    params.guc_weights[0][:params.p] *= factor


def train(train_set: Dataset, config: TrainConfig, *, log_every: int = 0) -> tuple[FittedModel, TrainReport]:
    """Fit the network on ``train_set``; returns the fitted model and a loss log.

    Covariates and response are standardised with training statistics. Every
    epoch reshuffles the rows and every step draws fresh ``(tau, tau', lambda)``
    per example. All randomness derives from ``config.seed``.
    """
    n = train_set.n
    if n < 1:
        raise ValueError("empty training set")
    if config.batch_size > n:
        raise ValueError(f"batch_size {config.batch_size} exceeds training size {n}")
    scaler = Standardizer.fit(train_set.x, train_set.y)
    x = scaler.x(train_set.x)
    y = scaler.y(train_set.y)
    grid = config.lambda_grid
    pmnn_cfg = replace(config.pmnn, lambda_range=(grid.values[0], grid.values[-1]))
    params = init_params(pmnn_cfg, train_set.p, int(substream(config.seed, "init").integers(2**63)))
    shuffle_rng = substream(config.seed, "shuffle")
    noise_rng = substream(config.seed, "noise")
    response_scale = scaler.y_sd if config.loss_scale == "response" else 1.0
    opt = make_optimizer(config)
    decay = 1.0 - config.learning_rate * config.weight_decay if config.weight_decay else 0.0
    arrays = params.arrays()
    report = TrainReport()
    for epoch in range(config.epochs):
        start = time.perf_counter()
        if config.lr_schedule == "cosine":
            opt.lr = 0.5 * config.learning_rate * (1.0 + math.cos(math.pi * epoch / config.epochs))
            if decay:
                decay = 1.0 - opt.lr * config.weight_decay
        order = shuffle_rng.permutation(n)
        total, count = 0.0, 0
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            draws = sample_noise(idx.size, grid, noise_rng)
            try:
                loss, grads = loss_and_grads(params, x[idx], y[idx], draws, config.alpha, response_scale)
            except FloatingPointError as exc:
                raise TrainingError(f"non-finite value at step {report.steps}: {exc}") from exc
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at step {report.steps}")
            opt.step(arrays, grads)
            if decay:
                _decay_weights(params, decay)
            report.steps += 1
            total += loss * idx.size
            count += idx.size
        report.epoch_loss.append(total / count)
        report.epoch_seconds.append(time.perf_counter() - start)
        if log_every and (epoch + 1) % log_every == 0:
            log.info("epoch %d/%d loss %.5f", epoch + 1, config.epochs, report.epoch_loss[-1])
    for w in params.gc_raw_weights + [params.f_raw_weights]:
        if not np.all(positivity_transform(w) > 0):
            raise TrainingError("a constrained weight lost positivity")
    report.checksum = params.checksum()
    model = FittedModel(params, scaler, grid.array.copy(), config.seed, list(train_set.columns), train_set.target)
    return model, report
