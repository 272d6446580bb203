"""Check loss, variability penalty and the penalised batch objective."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .pmnn import PMNNParams, TapedParams, taped_data_features, taped_join, taped_quantile_features


@dataclass(frozen=True)
class PenaltyConfig:
    alpha: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


def check_loss(u, tau):
    """Pinball loss ``u * (tau - 1{u < 0})``; works on scalars and arrays."""
    u = np.asarray(u, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    if np.any((tau <= 0) | (tau >= 1)):
        raise ValueError("tau must lie strictly inside (0, 1)")
    out = np.where(u >= 0, u * tau, u * (tau - 1.0))
    return out.item() if out.ndim == 0 else out


def variability_penalty(g1, g2, lam, alpha: float):
    """``-lam * log(|g1 - g2| + 1/alpha)``.

    Largest, at ``lam * log(alpha)``, when the two outputs coincide.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    gap = np.abs(np.asarray(g1, dtype=np.float64) - np.asarray(g2, dtype=np.float64))
    out = -np.asarray(lam, dtype=np.float64) * np.log(gap + 1.0 / alpha)
    return out.item() if out.ndim == 0 else out


def taped_penalty(g1: Tensor, g2: Tensor, lam: Tensor, alpha: float) -> Tensor:
    gap = ad.absolute(ad.sub(g1, g2))
    return ad.scale(ad.mul(lam, ad.log(gap + 1.0 / alpha)), -1.0)


def pgqr_terms(g: Tensor, g_prime: Tensor, y: np.ndarray, tau: np.ndarray,
               lam: np.ndarray, alpha: float, tape: Tape) -> Tensor:
    """Mean over the batch of check loss at ``g`` plus penalty on ``(g, g_prime)``.

    ``g`` and ``g_prime`` are (n, 1) tensors of generator outputs at ``tau``
    and ``tau'``; the arrays are per-example values.
    """
    n = g.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    y_t = tape.constant(np.asarray(y, dtype=np.float64).reshape(n, 1))
    tau_t = tape.constant(np.asarray(tau, dtype=np.float64).reshape(n, 1))
    fit = ad.check_loss(ad.sub(y_t, g), tau_t)
    lam = np.asarray(lam, dtype=np.float64).reshape(n, 1)
    if np.any(lam != 0):
        pen = taped_penalty(g, g_prime, tape.constant(lam), alpha)
        fit = ad.add(fit, pen)
    return ad.mean(fit)


def pgqr_batch_loss(params: PMNNParams | TapedParams, x, y, draws, alpha: float,
                    tape: Tape, response_scale: float = 1.0) -> Tensor:
    """Record the penalised objective for one minibatch.

    ``draws`` is an (n, 3) array of per-example ``(tau, tau', lam)``. The data
    branch is evaluated once and shared by both quantile levels.

    When the network is fitted to a standardised response, ``response_scale``
    is the response sd: outputs and ``y`` are multiplied by it so that both
    the check loss and the penalty gap are measured in original units.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    draws = np.asarray(draws, dtype=np.float64).reshape(-1, 3)
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if draws.shape[0] != n or np.asarray(y).size != n:
        raise ValueError(f"batch of {n} rows needs {n} responses and {n} draws")
    tp = params if isinstance(params, TapedParams) else TapedParams.attach(params, tape)
    tau, tau_prime, lam = draws[:, 0], draws[:, 1], draws[:, 2]
    zu = taped_data_features(tp, tape, x, lam if tp.params.config.lambda_as_input else None)
    g = taped_join(tp, taped_quantile_features(tp, tape, tau), zu)
    if np.any(lam != 0):
        g_prime = taped_join(tp, taped_quantile_features(tp, tape, tau_prime), zu)
    else:
        g_prime = g
    if response_scale != 1.0:
        g = ad.scale(g, response_scale)
        g_prime = g if g_prime is g else ad.scale(g_prime, response_scale)
        y = np.asarray(y, dtype=np.float64) * response_scale
    return pgqr_terms(g, g_prime, y, tau, lam, alpha, tape)


def memorization_loss(lam, alpha: float) -> float:
    """Objective value of a generator that reproduces every training response."""
    return float(np.mean(np.asarray(lam, dtype=np.float64))) * math.log(alpha)
