"""Time and maturity partitions with the nesting conditions the schemes rely on.

A grid couples a time partition ``0 = t_0 < ... < t_N = t_max`` with a
maturity partition ``0 = tau_0 < ... < tau_L = tau_max``.  Every maturity
node inside ``[0, t_max]`` must also be a time node, and both ``t_max`` and
the payoff window start ``tau_a`` must be maturity nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

NODE_TOL = 1e-12

# 5-point Gauss-Legendre on [0, 1]; exact for degree <= 9.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)
GL_NODES = 0.5 * (_GL_X + 1.0)
GL_WEIGHTS = 0.5 * _GL_W


class NestingViolation(ValueError):
    """Raised when a partition pair breaks one of the nesting conditions."""

    def __init__(self, violations):
        self.violations = list(violations)
        msg = "; ".join(str(v) for v in self.violations)
        super().__init__(f"grid violates nesting conditions: {msg}")


class Violation(NamedTuple):
    condition: str  # "tau_node_not_t_node" | "t_max_not_tau_node" | "tau_a_not_tau_node" | "ordering"
    node: float

    def __str__(self):
        return f"{self.condition} at {self.node:.15g}"


@dataclass(frozen=True, eq=False)
class Grid:
    t_nodes: np.ndarray
    tau_nodes: np.ndarray
    tau_a: float
    ell_a: int  # -1 when tau_a is not a node
    ell_star: int  # -1 when t_max is not a node
    ell_of_n: np.ndarray
    rho: dict = field(repr=False)

    @property
    def N(self) -> int:
        return len(self.t_nodes) - 1

    @property
    def L(self) -> int:
        return len(self.tau_nodes) - 1

    @property
    def t_max(self) -> float:
        return float(self.t_nodes[-1])

    @property
    def tau_max(self) -> float:
        return float(self.tau_nodes[-1])

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.t_nodes)

    @property
    def dtau(self) -> np.ndarray:
        return np.diff(self.tau_nodes)

    @classmethod
    def from_nodes(cls, t_nodes, tau_nodes, tau_a: float, check: bool = True) -> "Grid":
        """Assemble a grid from explicit node arrays.

        With ``check=True`` (the default) a :class:`NestingViolation` is raised
        unless all nesting conditions hold.
        """
        t = np.array(t_nodes, dtype=float)
        tau = np.array(tau_nodes, dtype=float)
        t.setflags(write=False)
        tau.setflags(write=False)
        ell_a = _find_node(tau, tau_a)
        ell_star = _find_node(tau, t[-1])
        ell_of_n = np.array(
            [int(np.searchsorted(tau, tn + NODE_TOL, side="right")) - 1 for tn in t],
            dtype=int,
        )
        ell_of_n = np.clip(ell_of_n, 0, len(tau) - 1)
        ell_of_n.setflags(write=False)
        rho = {}
        for ell, x in enumerate(tau):
            if x <= t[-1] + NODE_TOL:
                n = _find_node(t, x)
                if n >= 0:
                    rho[ell] = n
        grid = cls(t, tau, float(tau_a), ell_a, ell_star, ell_of_n, rho)
        if check:
            violations = validate_nesting(grid)
            if violations:
                raise NestingViolation(violations)
        return grid


def _find_node(nodes: np.ndarray, x: float) -> int:
    i = int(np.argmin(np.abs(nodes - x)))
    return i if abs(nodes[i] - x) <= NODE_TOL else -1


def validate_nesting(grid: Grid) -> list[Violation]:
    """Return every violated nesting condition; an empty list means the grid is valid."""
    t, tau = grid.t_nodes, grid.tau_nodes
    out: list[Violation] = []
    for name, arr in (("t", t), ("tau", tau)):
        if len(arr) < 2 or arr[0] != 0.0 or np.any(np.diff(arr) <= 0.0):
            out.append(Violation(f"ordering_{name}", float(arr[0])))
    if not (0.0 < grid.t_max <= grid.tau_a < grid.tau_max):
        out.append(Violation("ordering_tau_a", grid.tau_a))
    for ell, x in enumerate(tau):
        if x <= grid.t_max + NODE_TOL and ell not in grid.rho:
            out.append(Violation("tau_node_not_t_node", float(x)))
    if grid.ell_star < 0:
        out.append(Violation("t_max_not_tau_node", grid.t_max))
    if grid.ell_a < 0:
        out.append(Violation("tau_a_not_tau_node", grid.tau_a))
    return out


def _near_int(x: float) -> int | None:
    k = round(x)
    return int(k) if abs(x - k) <= 1e-9 * max(1.0, abs(x)) else None


def build_uniform_grid(N: int, L: int, t_max: float, tau_max: float, tau_a: float) -> Grid:
    """Uniform partitions, ``dt = t_max / N`` and ``dtau = tau_max / L``.

    Raises :class:`NestingViolation` when the spacings are incompatible.
    """
    if N < 1 or L < 1:
        raise ValueError("N and L must be positive")
    t = t_max * np.arange(N + 1) / N
    tau = tau_max * np.arange(L + 1) / L
    t[-1] = t_max
    tau[-1] = tau_max
    # snap coincident nodes onto the exact time node values
    for ell in range(L + 1):
        n = _near_int(ell * (tau_max / L) * N / t_max)
        if n is not None and n <= N:
            tau[ell] = t[n]
    k_a = _near_int(tau_a * L / tau_max)
    if k_a is not None and 0 < k_a < L:
        tau[k_a] = tau_a
    return Grid.from_nodes(t, tau, tau_a)


def build_nested_grid(N: int, L: int, t_max: float, tau_max: float, tau_a: float) -> Grid:
    """Grid with ``N`` time steps and ``L`` maturity cells that always nests.

    Returns the uniform grid when it is valid.  Otherwise the maturity axis is
    split into ``[0, t_max]``, ``[t_max, tau_a]`` and ``[tau_a, tau_max]``;
    the first piece receives cells in proportion to its length, with nodes
    chosen among the time nodes, and the others are uniform.
    """
    try:
        return build_uniform_grid(N, L, t_max, tau_max, tau_a)
    except NestingViolation:
        pass
    t = t_max * np.arange(N + 1) / N
    t[-1] = t_max
    rest = [(a, b) for a, b in ((t_max, tau_a), (tau_a, tau_max)) if b - a > NODE_TOL]
    if L < 1 + len(rest):
        raise NestingViolation([Violation("too_few_cells", float(L))])
    share = int(np.floor(L * t_max / tau_max + 0.5))
    L1 = max(1, min(share, N, L - len(rest)))
    idx = np.floor(np.arange(L1 + 1) * N / L1 + 0.5).astype(int)
    tau = list(t[idx])
    remaining = L - L1
    lengths = np.array([b - a for a, b in rest])
    counts = np.maximum(1, np.floor(remaining * lengths / lengths.sum() + 0.5).astype(int))
    counts[-1] = remaining - counts[:-1].sum()
    if counts[-1] < 1:
        counts[:] = 1
        counts[0] = remaining - (len(rest) - 1)
    for (a, b), c in zip(rest, counts):
        seg = a + (b - a) * np.arange(1, c + 1) / c
        seg[-1] = b
        tau.extend(seg)
    return Grid.from_nodes(t, tau, tau_a)


def ell_index(grid: Grid, n: int) -> int:
    """Largest maturity index with ``tau_ell <= t_n``."""
    if not 0 <= n <= grid.N:
        raise IndexError(n)
    return int(grid.ell_of_n[n])


def l2_project(v: Callable[[np.ndarray], np.ndarray], grid: Grid) -> np.ndarray:
    """Cell averages of ``v`` over ``[tau_ell, tau_ell+1)``, ``ell = 0..L-1``.

    ``v`` must accept an array of maturities.  Trailing output dimensions
    (e.g. a factor axis) are preserved, giving shape ``(L, ...)``.
    """
    left = grid.tau_nodes[:-1]
    h = grid.dtau
    pts = left[:, None] + h[:, None] * GL_NODES[None, :]
    vals = np.asarray(v(pts), dtype=float)
    return np.tensordot(GL_WEIGHTS, np.moveaxis(vals, 1, 0), axes=(0, 0))
