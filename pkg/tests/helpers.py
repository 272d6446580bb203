"""Shared test utilities: a central finite-difference gradient oracle."""

import numpy as np

FD_STEP = 1e-5
REL_TOL = 1e-4
ABS_FLOOR = 1e-7


def central_differences(f, arrays, step=FD_STEP):
    """Gradient of scalar ``f()`` w.r.t. every entry of ``arrays`` (mutated in place, restored)."""
    out = []
    for a in arrays:
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            orig = a[idx]
            a[idx] = orig + step
            up = f()
            a[idx] = orig - step
            down = f()
            a[idx] = orig
            g[idx] = (up - down) / (2 * step)
        out.append(g)
    return out


def gradient_mismatches(analytic, numeric, rel=REL_TOL, floor=ABS_FLOOR):
    """Number of coordinates failing ``|a - b| <= floor or |a - b| / max(|a|, |b|) < rel``."""
    bad = 0
    for a, b in zip(analytic, numeric):
        diff = np.abs(a - b)
        scale = np.maximum(np.abs(a), np.abs(b))
        ok = (diff <= floor) | (diff < rel * scale)
        bad += int(np.sum(~ok))
    return bad


def tiny_model(p=2, seed=0, width=8, k=2, grid=(0.0, 0.5, 1.0), **config):
    """An untrained FittedModel with identity scaling, for exercising downstream code."""
    from pgqr.data import Standardizer
    from pgqr.model import FittedModel
    from pgqr.pmnn import PMNNConfig, init_params

    cfg = PMNNConfig(width=width, k1=k, k2=k, lambda_range=(min(grid), max(grid)), **config)
    return FittedModel(init_params(cfg, p, seed), Standardizer.identity(p), np.asarray(grid, dtype=np.float64), seed)


def tiny_run_config(path, **overrides):
    """Write a seconds-scale run configuration to ``path`` and return the path."""
    import json

    payload = {
        "train": {"epochs": 2, "batch_size": 16, "lambda_grid": {"lo": 0.0, "hi": 1.0, "count": 4},
                  "pmnn": {"width": 8, "k1": 2, "k2": 2}},
        "pit_draws": 50, "samples": 50, "n": 80, "sims": ["5"], "replicates": 1, "oracle_draws": 2000,
    }
    payload.update(overrides)
    path.write_text(json.dumps(payload))
    return path
