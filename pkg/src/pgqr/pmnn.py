"""Partial monotonic network mapping (x, tau[, lambda]) to a conditional quantile.

The network has two branches. The quantile branch sees only ``tau`` and uses
weights passed through softplus, so every weight it applies is positive. The
data branch sees the covariates (and the scaled penalty weight) with ordinary
weights. The last pre-activations of both branches are summed, activated, and
mapped to a scalar through a positive-weight output layer::

    G(x, tau, lam) = softplus(Wf) . act(zc(tau) + zu(x, lam)) + bf

With monotone nondecreasing activations every path from ``tau`` to the output
carries a positive weight, so ``G`` is nondecreasing in ``tau`` for every
parameter value. Quantile curves produced this way cannot cross.
"""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import special

from . import autodiff as ad
from .autodiff import Tape, Tensor, stable_softplus

CHECKPOINT_FORMAT = "pgqr-checkpoint/1"

# softplus(raw) == 0.05 at this raw value
_SMALL_POSITIVE_RAW = float(np.log(np.expm1(0.05)))

_NP_ACTIVATIONS = {
    "tanh": np.tanh,
    "relu": lambda v: np.maximum(v, 0.0),
}

# strictly increasing, so monotonicity in tau is unaffected
_TAU_INPUTS = {
    "identity": lambda t: t,
    "logit": lambda t: np.log(t) - np.log1p(-t),
    "probit": lambda t: special.ndtri(t),
    "centered": lambda t: 2.0 * t - 1.0,
}


@dataclass(frozen=True)
class PMNNConfig:
    k1: int = 3
    k2: int = 3
    width: int = 256
    activation: str = "tanh"
    data_activation: str = "relu"
    join_activation: str = "tanh"
    lambda_as_input: bool = True
    lambda_range: tuple[float, float] = (0.0, 1.0)
    # fixed increasing map applied to tau before the quantile branch
    tau_input: str = "centered"

    def __post_init__(self):
        if self.k1 < 1 or self.k2 < 1 or self.width < 1:
            raise ValueError(f"k1, k2 and width must be >= 1, got {self.k1}, {self.k2}, {self.width}")
        for name in (self.activation, self.data_activation, self.join_activation):
            if name not in _NP_ACTIVATIONS:
                raise ValueError(f"unknown activation {name!r}; expected tanh or relu")
        if self.tau_input not in _TAU_INPUTS:
            raise ValueError(f"unknown tau_input {self.tau_input!r}; expected one of {sorted(_TAU_INPUTS)}")
        lo, hi = self.lambda_range
        if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
            raise ValueError(f"bad lambda_range {self.lambda_range}")
        object.__setattr__(self, "lambda_range", (float(lo), float(hi)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda_range"] = list(self.lambda_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PMNNConfig":
        d = dict(d)
        if "lambda_range" in d:
            d["lambda_range"] = tuple(d["lambda_range"])
        return cls(**d)


@dataclass
class PMNNParams:
    """Raw parameters. Constrained weights are stored before softplus."""

    config: PMNNConfig
    p: int
    gc_raw_weights: list[np.ndarray]
    gc_biases: list[np.ndarray]
    guc_weights: list[np.ndarray]
    guc_biases: list[np.ndarray]
    f_raw_weights: np.ndarray
    f_bias: np.ndarray = field(default_factory=lambda: np.zeros((1, 1)))

    @property
    def input_dim(self) -> int:
        return self.p + (1 if self.config.lambda_as_input else 0)

    def arrays(self) -> list[np.ndarray]:
        """All parameter arrays in a fixed canonical order."""
        return [*self.gc_raw_weights, *self.gc_biases, *self.guc_weights,
                *self.guc_biases, self.f_raw_weights, self.f_bias]

    def names(self) -> list[str]:
        k1, k2 = self.config.k1, self.config.k2
        return ([f"gc_raw_w{i}" for i in range(k1)] + [f"gc_b{i}" for i in range(k1)]
                + [f"guc_w{i}" for i in range(k2)] + [f"guc_b{i}" for i in range(k2)]
                + ["f_raw_w", "f_b"])

    def with_arrays(self, arrays) -> "PMNNParams":
        arrays = list(arrays)
        k1, k2 = self.config.k1, self.config.k2
        cuts = np.cumsum([k1, k1, k2, k2, 1, 1])
        if len(arrays) != cuts[-1]:
            raise ValueError(f"expected {cuts[-1]} arrays, got {len(arrays)}")
        return PMNNParams(
            config=self.config,
            p=self.p,
            gc_raw_weights=arrays[0:cuts[0]],
            gc_biases=arrays[cuts[0]:cuts[1]],
            guc_weights=arrays[cuts[1]:cuts[2]],
            guc_biases=arrays[cuts[2]:cuts[3]],
            f_raw_weights=arrays[cuts[3]],
            f_bias=arrays[cuts[4]],
        )

    def copy(self) -> "PMNNParams":
        return self.with_arrays([a.copy() for a in self.arrays()])

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for a in self.arrays():
            h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return h.hexdigest()


def positivity_transform(raw):
    """Map raw weights to strictly positive weights via softplus."""
    return stable_softplus(np.asarray(raw, dtype=np.float64))


def init_params(config: PMNNConfig, p: int, seed: int) -> PMNNParams:
    if p < 1:
        raise ValueError(f"need at least one covariate, got p={p}")
    rng = np.random.default_rng(seed)
    h = config.width
    in_dim = p + (1 if config.lambda_as_input else 0)

    def constrained(rows, cols):
        return _SMALL_POSITIVE_RAW + 0.5 * rng.standard_normal((rows, cols))

    gc_w = [constrained(1 if i == 0 else h, h) for i in range(config.k1)]
    guc_w = []
    for i in range(config.k2):
        fan_in = in_dim if i == 0 else h
        guc_w.append(rng.standard_normal((fan_in, h)) * np.sqrt(2.0 / fan_in))
    gc_b = [np.zeros((1, h)) for _ in range(config.k1)]
    f_w, f_b = constrained(h, 1), np.zeros((1, 1))
    _centre_quantile_branch(config, gc_w, gc_b, f_w, f_b)
    return PMNNParams(
        config=config,
        p=p,
        gc_raw_weights=gc_w,
        gc_biases=gc_b,
        guc_weights=guc_w,
        guc_biases=[np.zeros((1, h)) for _ in range(config.k2)],
        f_raw_weights=f_w,
        f_bias=f_b,
    )


# midpoints of a uniform grid on (0, 1), standing in for tau ~ Uniform(0, 1)
_INIT_TAUS = (np.arange(256) + 0.5) / 256


def _centre_quantile_branch(config: PMNNConfig, raw_weights, biases, f_raw, f_bias) -> None:
    """Rescale and shift the positive layers in place at initialisation.

    With all weights positive and every unit increasing in tau, pre-activations
    add up coherently and would start deep in saturation. Each quantile-branch
    layer is adjusted so every unit's pre-activation has mean 0 and sd 1 over
    tau uniform on (0, 1); the output layer so that, with the data branch at
    zero, the output has mean 0 and sd 1. Positive rescaling keeps weights
    positive, so the monotone structure is untouched.
    """
    act = _NP_ACTIVATIONS[config.activation]
    join_act = _NP_ACTIVATIONS[config.join_activation]

    def calibrate(inputs, raw):
        pos = stable_softplus(raw)
        pre = inputs @ pos
        sd = pre.std(axis=0)
        sd[sd == 0] = 1.0
        pos = pos / sd
        raw[...] = pos + np.log(-np.expm1(-pos))  # inverse softplus
        return pos, -(inputs @ pos).mean(axis=0, keepdims=True)

    hidden = _TAU_INPUTS[config.tau_input](_INIT_TAUS).reshape(-1, 1)
    last = len(raw_weights) - 1
    for i, raw in enumerate(raw_weights):
        pos, biases[i][...] = calibrate(hidden, raw)
        # the last branch layer is affine and feeds the joint activation
        hidden = (join_act if i == last else act)(hidden @ pos + biases[i])
    _, f_bias[...] = calibrate(hidden, f_raw)


def scale_lambda(config: PMNNConfig, lam) -> np.ndarray:
    """Min-max scale penalty weights to [0, 1] over the training grid."""
    lo, hi = config.lambda_range
    lam = np.asarray(lam, dtype=np.float64)
    if hi == lo:
        return np.zeros_like(lam)
    return (lam - lo) / (hi - lo)


def _check_tau(tau: np.ndarray) -> None:
    if not np.all((tau > 0.0) & (tau < 1.0)):
        raise ValueError("quantile levels must lie strictly inside (0, 1)")


def _data_input(params: PMNNParams, x, lam) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != params.p:
        raise ValueError(f"expected {params.p} covariates, got {x.shape[1]}")
    if not params.config.lambda_as_input:
        return x
    if lam is None:
        raise ValueError("this network takes lambda as an input")
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64).reshape(-1), (x.shape[0],))
    return np.hstack([x, scale_lambda(params.config, lam)[:, None]])


# -- numpy evaluation (no tape) ----------------------------------------------

def quantile_features(params: PMNNParams, tau) -> np.ndarray:
    """Last pre-activation of the quantile branch, one row per tau."""
    tau = np.asarray(tau, dtype=np.float64).reshape(-1, 1)
    _check_tau(tau)
    act = _NP_ACTIVATIONS[params.config.activation]
    hidden = _TAU_INPUTS[params.config.tau_input](tau)
    last = len(params.gc_raw_weights) - 1
    for i, (w, b) in enumerate(zip(params.gc_raw_weights, params.gc_biases)):
        hidden = hidden @ stable_softplus(w) + b
        if i < last:
            hidden = act(hidden)
    return hidden


def data_features(params: PMNNParams, x, lam=None) -> np.ndarray:
    """Last pre-activation of the data branch, one row per covariate row."""
    act = _NP_ACTIVATIONS[params.config.data_activation]
    hidden = _data_input(params, x, lam)
    last = len(params.guc_weights) - 1
    for i, (w, b) in enumerate(zip(params.guc_weights, params.guc_biases)):
        hidden = hidden @ w + b
        if i < last:
            hidden = act(hidden)
    return hidden


def join(params: PMNNParams, zc: np.ndarray, zu: np.ndarray) -> np.ndarray:
    """Output for every pairing allowed by broadcasting ``zc + zu`` on the last axis."""
    act = _NP_ACTIVATIONS[params.config.join_activation]
    w = stable_softplus(params.f_raw_weights)[:, 0]
    return act(zc + zu) @ w + params.f_bias[0, 0]


def predict(params: PMNNParams, x, tau, lam=None) -> np.ndarray:
    """Row-wise G(x_i, tau_i, lam_i) as a 1-D array."""
    zc = quantile_features(params, tau)
    zu = data_features(params, x, lam)
    if zu.shape[0] == 1 and zc.shape[0] > 1:
        zu = np.broadcast_to(zu, zc.shape)
    if zc.shape[0] != zu.shape[0]:
        raise ValueError(f"{zc.shape[0]} quantile levels for {zu.shape[0]} covariate rows")
    return join(params, zc, zu)


# -- taped evaluation ----------------------------------------------------------

@dataclass
class TapedParams:
    """Parameter leaves recorded on one tape, mirroring :class:`PMNNParams`."""

    params: PMNNParams
    leaves: list[Tensor]

    @classmethod
    def attach(cls, params: PMNNParams, tape: Tape) -> "TapedParams":
        return cls(params, [tape.leaf(a) for a in params.arrays()])

    def split(self):
        k1, k2 = self.params.config.k1, self.params.config.k2
        lv = self.leaves
        gc_w, gc_b = lv[:k1], lv[k1:2 * k1]
        guc_w, guc_b = lv[2 * k1:2 * k1 + k2], lv[2 * k1 + k2:2 * k1 + 2 * k2]
        return gc_w, gc_b, guc_w, guc_b, lv[-2], lv[-1]


def taped_quantile_features(tp: TapedParams, tape: Tape, tau) -> Tensor:
    tau = np.asarray(tau, dtype=np.float64).reshape(-1, 1)
    _check_tau(tau)
    act = ad.ACTIVATIONS[tp.params.config.activation]
    gc_w, gc_b, *_ = tp.split()
    hidden = tape.constant(_TAU_INPUTS[tp.params.config.tau_input](tau))
    for i, (w, b) in enumerate(zip(gc_w, gc_b)):
        hidden = ad.add(ad.matmul(hidden, ad.softplus(w)), b)
        if i < len(gc_w) - 1:
            hidden = act(hidden)
    return hidden


def taped_data_features(tp: TapedParams, tape: Tape, x, lam=None) -> Tensor:
    act = ad.ACTIVATIONS[tp.params.config.data_activation]
    _, _, guc_w, guc_b, _, _ = tp.split()
    hidden = tape.constant(_data_input(tp.params, x, lam))
    for i, (w, b) in enumerate(zip(guc_w, guc_b)):
        hidden = ad.add(ad.matmul(hidden, w), b)
        if i < len(guc_w) - 1:
            hidden = act(hidden)
    return hidden


def taped_join(tp: TapedParams, zc: Tensor, zu: Tensor) -> Tensor:
    act = ad.ACTIVATIONS[tp.params.config.join_activation]
    *_, f_w, f_b = tp.split()
    return ad.add(ad.matmul(act(ad.add(zc, zu)), ad.softplus(f_w)), f_b)


def forward(params: PMNNParams | TapedParams, x, tau, lam, tape: Tape) -> Tensor:
    """Record G(x_i, tau_i, lam_i) for a batch on ``tape``; returns an (n, 1) tensor."""
    tp = params if isinstance(params, TapedParams) else TapedParams.attach(params, tape)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    zc = taped_quantile_features(tp, tape, tau)
    zu = taped_data_features(tp, tape, x, lam)
    if zc.shape[0] != zu.shape[0]:
        raise ValueError(f"{zc.shape[0]} quantile levels for {zu.shape[0]} covariate rows")
    return taped_join(tp, zc, zu)


# -- checkpoints --------------------------------------------------------------

def save_checkpoint(path, params: PMNNParams, seed: int, extra: dict | None = None) -> None:
    """Write params, config and seed to an ``.npz`` archive.

    ``extra`` must be JSON-serialisable; it rides along in the metadata block.
    """
    meta = {
        "format": CHECKPOINT_FORMAT,
        "config": params.config.to_dict(),
        "p": params.p,
        "seed": int(seed),
        "names": params.names(),
        "extra": extra or {},
    }
    payload = {name: a for name, a in zip(params.names(), params.arrays())}
    payload["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **payload)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> tuple[PMNNParams, int, dict]:
    with np.load(path, allow_pickle=False) as archive:
        meta = json.loads(archive["__meta__"].tobytes().decode())
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {meta.get('format')!r}")
        arrays = [archive[name].copy() for name in meta["names"]]
    config = PMNNConfig.from_dict(meta["config"])
    skeleton = PMNNParams(config, meta["p"], [], [], [], [], np.zeros((1, 1)))
    return skeleton.with_arrays(arrays), meta["seed"], meta["extra"]


def with_lambda_range(params: PMNNParams, lo: float, hi: float) -> PMNNParams:
    out = params.copy()
    out.config = replace(params.config, lambda_range=(lo, hi))
    return out
