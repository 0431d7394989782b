"""Payoff functionals and the composite maturity quadrature.

A payoff is ``F(Y) * G(Lambda) + Z`` where ``Y = int_0^T r``,
``Lambda = int_{tau_a}^{tau_max} Psi(f(T, tau)) dtau`` and
``Z = int_0^T F(Y_s) U(r_s) ds``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import Grid

Fn = Callable[[np.ndarray], np.ndarray]


def _zero(x):
    return np.zeros(np.shape(x))


def _one(x):
    return np.ones(np.shape(x))


def _ident(x):
    return np.asarray(x, dtype=float)


@dataclass(frozen=True, eq=False)
class PayoffSpec:
    name: str
    tau_a: float
    F: Fn
    F1: Fn
    F2: Fn
    G: Fn
    G1: Fn
    G2: Fn
    Psi: Fn = _ident
    Psi1: Fn = _one
    Psi2: Fn = _zero
    U: Fn = _zero
    U1: Fn = _zero
    U2: Fn = _zero


class UnsupportedPayoff(ValueError):
    pass


def linear_payoff(tau_a: float) -> PayoffSpec:
    """``(1 - Y) * Lambda`` with ``Psi = id``."""
    return PayoffSpec("linear", tau_a,
                      F=lambda x: 1.0 - np.asarray(x, dtype=float), F1=lambda x: -_one(x), F2=_zero,
                      G=_ident, G1=_one, G2=_zero)


def _exp_neg(x):
    return np.exp(-np.asarray(x, dtype=float))


def call_payoff(tau_a: float, K0: float = 0.5) -> PayoffSpec:
    """Discounted call on a bond, ``exp(-Y) * max(exp(-Lambda) - K0, 0)``.

    At the kink ``Lambda = -ln K0`` the right-sided derivative (zero) is used
    and the second derivative is taken as zero.
    """
    if K0 <= 0:
        raise ValueError("K0 must be positive")

    def G(x):
        return np.maximum(_exp_neg(x) - K0, 0.0)

    def G1(x):
        e = _exp_neg(x)
        return np.where(e > K0, -e, 0.0)

    def G2(x):
        e = _exp_neg(x)
        return np.where(e > K0, e, 0.0)

    return PayoffSpec("call", tau_a, F=_exp_neg, F1=lambda x: -_exp_neg(x), F2=_exp_neg,
                      G=G, G1=G1, G2=G2)


def cap_payoff(tau_a: float, r_c: float = 0.05) -> PayoffSpec:
    """Running caplet stream ``int_0^T exp(-Y_s) (r_s - r_c)^+ ds``."""

    def U(x):
        return np.maximum(np.asarray(x, dtype=float) - r_c, 0.0)

    def U1(x):
        return np.where(np.asarray(x) > r_c, 1.0, 0.0)

    return PayoffSpec("cap", tau_a, F=_exp_neg, F1=lambda x: -_exp_neg(x), F2=_exp_neg,
                      G=_zero, G1=_zero, G2=_zero, U=U, U1=U1, U2=_zero)


def zcb_payoff(tau_a: float) -> PayoffSpec:
    """``exp(-Y) * exp(-Lambda)``: a zero-coupon bond maturing at ``tau_max``
    when ``tau_a = t_max``."""
    return PayoffSpec("zcb", tau_a, F=_exp_neg, F1=lambda x: -_exp_neg(x), F2=_exp_neg,
                      G=_exp_neg, G1=lambda x: -_exp_neg(x), G2=_exp_neg)


def make_payoff(kind: str, tau_a: float, **kw) -> PayoffSpec:
    makers = {"linear": linear_payoff, "call": call_payoff, "cap": cap_payoff, "zcb": zcb_payoff}
    if kind not in makers:
        raise UnsupportedPayoff(kind)
    return makers[kind](tau_a, **kw)


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    order: int
    name: str = ""


def builtin_rule(kind: str = "simpson") -> QuadratureRule:
    if kind == "simpson":
        return QuadratureRule(np.array([0.0, 0.5, 1.0]), np.array([1 / 6, 2 / 3, 1 / 6]), 4, "simpson")
    if kind == "gauss2":
        h = 0.5 / np.sqrt(3.0)
        return QuadratureRule(np.array([0.5 - h, 0.5 + h]), np.array([0.5, 0.5]), 4, "gauss2")
    raise ValueError(f"unknown quadrature rule {kind!r}")


def quad_f0(model, grid: Grid, rule: QuadratureRule) -> np.ndarray:
    """``f0`` at the quadrature points of cells ``ell_a..L-1``, shape ``(L - ell_a, n_q)``."""
    left = grid.tau_nodes[grid.ell_a:-1]
    h = grid.dtau[grid.ell_a:]
    return model.f0(left[:, None] + h[:, None] * rule.nodes[None, :])


def composite_lambda(terminal_g, model, grid: Grid, rule: QuadratureRule, payoff: PayoffSpec,
                     f0q: np.ndarray | None = None):
    """Composite quadrature of ``Psi(g + f0)`` over ``[tau_a, tau_max]``.

    ``terminal_g`` holds cell values ``ell_a..L-1`` in its last axis; leading
    axes are treated as a batch.
    """
    if f0q is None:
        f0q = quad_f0(model, grid, rule)
    g = np.asarray(terminal_g, dtype=float)
    vals = payoff.Psi(g[..., None] + f0q) @ rule.weights
    return vals @ grid.dtau[grid.ell_a:]


def composite_lambda_derivs(terminal_g, model, grid: Grid, rule: QuadratureRule, payoff: PayoffSpec,
                            f0q: np.ndarray | None = None):
    """Per-cell ``(dLambda/dg_ell, d2Lambda/dg_ell^2)`` for cells ``ell_a..L-1``."""
    if f0q is None:
        f0q = quad_f0(model, grid, rule)
    g = np.asarray(terminal_g, dtype=float)[..., None] + f0q
    h = grid.dtau[grid.ell_a:]
    d1 = (payoff.Psi1(g) @ rule.weights) * h
    d2 = (payoff.Psi2(g) @ rule.weights) * h
    return d1, d2


def payoff_value(gbar, model, grid: Grid, rule: QuadratureRule, payoff: PayoffSpec,
                 f0q: np.ndarray | None = None):
    """``F(Y_N) G(Lambda) + Z_N`` for a path state or a raw terminal row.

    ``gbar`` may be a :class:`PathState`, a full trajectory ``(..., N+1, L+2)``
    or just the terminal row ``(..., L+2)``.
    """
    g = getattr(gbar, "gbar", gbar)
    g = np.asarray(g)
    L = grid.L
    if g.ndim >= 2 and g.shape[-2] == grid.N + 1:
        g = g[..., -1, :]
    lam = composite_lambda(g[..., grid.ell_a:L], model, grid, rule, payoff, f0q)
    return payoff.F(g[..., L]) * payoff.G(lam) + g[..., L + 1]
