"""Central finite-difference gradient checks."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numerical_grad(f: Callable[[], Tensor], x: Tensor, h: float = 1e-5, idx=None) -> np.ndarray:
    """Central differences of the scalar ``f()`` w.r.t. entries of ``x.data``.

    ``idx`` restricts the probe to a subset of flat indices; other entries are 0.
    """
    flat = x.data.reshape(-1)
    out = np.zeros_like(flat, dtype=np.float64)
    probe = range(flat.size) if idx is None else idx
    for i in probe:
        orig = flat[i]
        flat[i] = orig + h
        fp = f().item()
        flat[i] = orig - h
        fm = f().item()
        flat[i] = orig
        out[i] = (fp - fm) / (2 * h)
    return out.reshape(x.shape)


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> float:
    """max |a - n| scaled by the larger of the two gradients' max magnitudes.

    The scale never drops below ``floor``: a gradient that vanishes by
    construction (e.g. a bias followed by instance normalization) would
    otherwise compare finite-difference round-off against zero.
    """
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def check_gradients(
    f: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-5,
    max_probes: int | None = 64,
    rng: np.random.Generator | None = None,
) -> float:
    """Worst relative error between backward() and finite differences over ``inputs``.

    Inputs must be float64 leaves with ``requires_grad``. At most ``max_probes``
    random entries per input are probed.
    """
    rng = rng or np.random.default_rng(0)
    for x in inputs:
        x.grad = None
    f().backward()
    worst = 0.0
    for x in inputs:
        analytic = np.zeros(x.shape) if x.grad is None else x.grad.astype(np.float64)
        if max_probes is None or x.size <= max_probes:
            idx = np.arange(x.size)
        else:
            idx = np.sort(rng.choice(x.size, size=max_probes, replace=False))
        numeric = numerical_grad(f, x, h=h, idx=idx)
        a = analytic.reshape(-1)[idx]
        n = numeric.reshape(-1)[idx]
        worst = max(worst, max_relative_error(a, n))
    return worst
