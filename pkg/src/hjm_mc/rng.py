"""Keyed, counter-based Wiener increments.

Each path draws from its own Philox stream keyed by ``(seed, path_id)``, so
the increments of a path do not depend on which worker produces them or in
which order.  Normals come from the inverse normal CDF of 53-bit uniforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .grid import Grid

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True, eq=False)
class WienerIncrements:
    dW: np.ndarray  # (N, J), or (P, N, J) for a batch of paths
    seed: int
    path_id: int | np.ndarray
    antithetic: bool = False


def _uniforms(seed: int, path_id: int, count: int) -> np.ndarray:
    bg = np.random.Philox(key=np.array([seed & _MASK64, path_id & _MASK64], dtype=np.uint64))
    raw = bg.random_raw(count)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def standard_normals(seed: int, path_id: int, N: int, J: int) -> np.ndarray:
    """``N x J`` standard normals for one path, row-major in ``(n, j)``."""
    return ndtri(_uniforms(seed, path_id, N * J)).reshape(N, J)


def stream(seed: int, path_id: int, grid: Grid, J: int) -> WienerIncrements:
    if J < 1:
        raise ValueError("J must be at least 1")
    z = standard_normals(seed, path_id, grid.N, J)
    return WienerIncrements(z * np.sqrt(grid.dt)[:, None], seed, path_id)


def stream_batch(seed: int, start: int, count: int, grid: Grid, J: int) -> WienerIncrements:
    """Increments for paths ``start .. start+count-1``, shape ``(count, N, J)``.

    Row ``p`` equals ``stream(seed, start + p, grid, J).dW`` bit for bit.
    """
    if J < 1:
        raise ValueError("J must be at least 1")
    N = grid.N
    u = np.empty((count, N * J))
    for p in range(count):
        u[p] = _uniforms(seed, start + p, N * J)
    z = ndtri(u).reshape(count, N, J)
    return WienerIncrements(z * np.sqrt(grid.dt)[None, :, None], seed, np.arange(start, start + count))


def antithetic(incs: WienerIncrements) -> WienerIncrements:
    return WienerIncrements(-incs.dW, incs.seed, incs.path_id, not incs.antithetic)


def derived_seed(seed: int, salt: int) -> int:
    """Independent seed for an auxiliary sample (e.g. the dual sample)."""
    return (seed + salt) & _MASK64


DUAL_SALT = 0x9E3779B97F4A7C15
