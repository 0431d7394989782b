"""Euler finite-difference (EFD) and finite-element (EFE) forward recursions.

State columns ``0..L-1`` hold the forward-curve correction ``g = f - f0`` at
the maturity nodes (EFD) or cell averages (EFE); column ``L`` accumulates
``Y = int r`` and column ``L+1`` accumulates ``Z = int F(Y) U(r)``.
All routines accept a batch of paths along a leading axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid import Grid, l2_project
from .models import HjmModel
from .payoff import PayoffSpec
from .rng import WienerIncrements

SCHEMES = ("efd", "efe")


class ShapeMismatch(ValueError):
    pass


class NonFiniteState(FloatingPointError):
    pass


@dataclass(frozen=True, eq=False)
class SchemeCoefficients:
    """Path-independent coefficients for one (model, grid, scheme).

    ``lt_nodes``/``lam_nodes`` are nodal values at every ``(t_n, tau_ell)``
    with ``ell = 0..L``; ``drift``/``vol`` are what the scheme actually uses
    on ``ell = 0..L-1``.
    """

    scheme: str
    f0_t: np.ndarray  # (N+1,)
    lt_nodes: np.ndarray  # (N+1, L+1)
    lam_nodes: np.ndarray  # (N+1, L+1, J)
    drift: np.ndarray  # (N, L)
    vol: np.ndarray  # (N, L, J)


def project_coefficients(model: HjmModel, grid: Grid):
    """Cell averages of ``lambda_tilde(t_n, .)`` and ``lambda(t_n, .)``.

    Returns arrays of shape ``(N+1, L)`` and ``(N+1, L, J)``.
    """
    lt = np.empty((grid.N + 1, grid.L))
    lam = np.empty((grid.N + 1, grid.L, model.J))
    for n, t in enumerate(grid.t_nodes):
        lt[n] = l2_project(lambda tau: model.lambda_tilde(t, tau), grid)
        lam[n] = l2_project(lambda tau: model.lam(t, tau), grid)
    return lt, lam


@lru_cache(maxsize=64)
def scheme_coefficients(model: HjmModel, grid: Grid, scheme: str = "efd") -> SchemeCoefficients:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    t = grid.t_nodes[:, None]
    tau = grid.tau_nodes[None, :]
    lt_nodes = np.asarray(model.lambda_tilde(t, tau), dtype=float)
    lam_nodes = np.asarray(model.lam(t, tau), dtype=float)
    if scheme == "efd":
        drift, vol = lt_nodes[:-1, :-1], lam_nodes[:-1, :-1]
    else:
        lt_p, lam_p = project_coefficients(model, grid)
        drift, vol = lt_p[:-1], lam_p[:-1]
    arrs = [np.ascontiguousarray(a) for a in (model.f0(grid.t_nodes), lt_nodes, lam_nodes, drift, vol)]
    for a in arrs:
        a.setflags(write=False)
    return SchemeCoefficients(scheme, *arrs)


@dataclass(frozen=True, eq=False)
class PathState:
    gbar: np.ndarray  # (..., N+1, L+2)
    rbar: np.ndarray  # (..., N+1)
    scheme: str
    incs: WienerIncrements | None = None


def step(g, n: int, coef: SchemeCoefficients, model: HjmModel, grid: Grid, dW, payoff: PayoffSpec | None):
    """One Euler step from row ``g`` (shape ``(P, L+2)``) at level ``n``.

    Returns ``(next_row, rbar_n)``.
    """
    L = grid.L
    dt = grid.dt[n]
    r = g[:, grid.ell_of_n[n]] + coef.f0_t[n]
    out = np.empty_like(g)
    noise = dW @ coef.vol[n].T  # (P, L)
    out[:, :L] = g[:, :L] + (dt * model.xi_sq(r))[:, None] * coef.drift[n] + model.xi(r)[:, None] * noise
    out[:, L] = g[:, L] + dt * r
    if payoff is None:
        out[:, L + 1] = g[:, L + 1]
    else:
        out[:, L + 1] = g[:, L + 1] + dt * payoff.F(g[:, L]) * payoff.U(r)
    return out, r


def simulate(model: HjmModel, grid: Grid, incs, scheme: str = "efd", payoff: PayoffSpec | None = None,
             start_level: int = 0, start_row: np.ndarray | None = None,
             coef: SchemeCoefficients | None = None) -> PathState:
    """Run the forward recursion for one path or a batch of paths.

    ``incs`` is a :class:`WienerIncrements` or a raw array ``(N, J)`` /
    ``(P, N, J)``.  With ``payoff=None`` the ``Z`` column stays zero.
    ``start_level``/``start_row`` restart the recursion from a given state;
    rows before ``start_level`` are then left as zeros.
    """
    dW = np.asarray(getattr(incs, "dW", incs), dtype=float)
    single = dW.ndim == 2
    if single:
        dW = dW[None]
    if dW.ndim != 3 or dW.shape[1] != grid.N or dW.shape[2] != model.J:
        raise ShapeMismatch(f"increments of shape {dW.shape} do not fit N={grid.N}, J={model.J}")
    if coef is None:
        coef = scheme_coefficients(model, grid, scheme)
    P, N, L = dW.shape[0], grid.N, grid.L
    g = np.zeros((P, N + 1, L + 2))
    rbar = np.zeros((P, N + 1))
    if start_row is not None:
        g[:, start_level] = start_row
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(start_level, N):
            g[:, n + 1], rbar[:, n] = step(g[:, n], n, coef, model, grid, dW[:, n], payoff)
        rbar[:, N] = g[:, N, grid.ell_of_n[N]] + coef.f0_t[N]
    if not np.all(np.isfinite(g[:, start_level:])):
        raise NonFiniteState("non-finite value in forward state")
    if single:
        g, rbar = g[0], rbar[0]
    return PathState(g, rbar, scheme, incs if isinstance(incs, WienerIncrements) else None)
