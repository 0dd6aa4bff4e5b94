"""Spectral weight normalization by persistent power iteration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, ops


@dataclass
class SpectralState:
    u: np.ndarray
    v: np.ndarray | None = None
    n_power_iterations: int = 1

    @classmethod
    def init(cls, n_rows: int, rng: np.random.Generator, n_power_iterations: int = 1) -> "SpectralState":
        u = rng.standard_normal(n_rows)
        return cls(u=u / np.linalg.norm(u), n_power_iterations=n_power_iterations)


def _normalize(x: np.ndarray) -> np.ndarray:
    return x / max(np.linalg.norm(x), 1e-12)


def power_iterate(w2: np.ndarray, state: SpectralState, n: int | None = None) -> bool:
    """Advance the singular-vector estimates in place. Returns False for a zero matrix."""
    w2 = w2.astype(np.float64)
    if not np.any(w2):
        return False
    u = state.u
    v = state.v
    for _ in range(state.n_power_iterations if n is None else n):
        v = _normalize(w2.T @ u)
        u = _normalize(w2 @ v)
    state.u, state.v = u, v
    return True


def sigma_estimate(w2: np.ndarray, state: SpectralState) -> float:
    return float(state.u @ (w2.astype(np.float64) @ state.v))


def spectral_norm_apply(
    weight: Tensor, state: SpectralState, update: bool = True, n_iter: int | None = None
) -> tuple[Tensor, SpectralState]:
    """Divide ``weight`` by its estimated largest singular value.

    The weight is viewed as (out-channels, rest). With ``update`` the state
    takes ``n_iter`` (default ``state.n_power_iterations``) power-iteration
    steps first. u and v are constants for differentiation; the gradient
    flows through sigma = u^T W v. A zero weight is returned unchanged.
    """
    rows = weight.shape[0]
    w2 = weight.data.reshape(rows, -1)
    if not np.any(w2):
        return weight, state
    if update or state.v is None:
        power_iterate(w2, state, n_iter if update else 1)
    v = Tensor(state.v.reshape(-1, 1), dtype=weight.dtype)
    u = Tensor(state.u.reshape(-1, 1), dtype=weight.dtype)
    sigma = ops.sum(ops.mul(ops.matmul(ops.reshape(weight, (rows, -1)), v), u))
    return ops.mul(weight, ops.reciprocal(sigma)), state
