"""Exact reference values for the Gaussian models and a self-convergence
reference for CIR.

For constant ``xi`` and stationary ``lambda = lambda0(tau - t)`` the pair
``Y = int_0^T r`` and ``X = int_{tau_a}^{tau_max} f(T, tau) dtau`` is jointly
Gaussian, and so is its discrete counterpart on any grid.  All supported
functionals are then closed-form in the five moments
``(mY, mX, vY, vX, cXY)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .estimator import PriceEstimate, price
from .forward import scheme_coefficients, simulate
from .grid import Grid
from .models import CIRParams, HjmModel, HoLeeParams, VasicekParams, make_model
from .payoff import QuadratureRule, UnsupportedPayoff, builtin_rule, make_payoff, quad_f0
from .rng import stream_batch


@dataclass(frozen=True)
class GaussianMoments:
    mY: float
    mX: float
    vY: float
    vX: float
    cXY: float


# ---------------------------------------------------------------- Ho-Lee

def _theta_int(p: HoLeeParams, a, b):
    """``int_a^b Theta(s) ds`` with ``Theta(s) = int_0^s theta``."""
    c, k = p.theta_scale, p.theta_rate
    return c / k * ((b - a) - (np.exp(-k * a) - np.exp(-k * b)) / k)


def ho_lee_exact_f(params: HoLeeParams, t, tau, W_t):
    """Exact forward rate ``f(t, tau)`` given ``W(t)``."""
    c, k, s = params.theta_scale, params.theta_rate, params.sigma
    tau = np.asarray(tau, dtype=float)
    return params.r0 - 0.5 * s * s * (tau - t) ** 2 + c / k * (1 - np.exp(-k * tau)) + s * np.asarray(W_t)


def exact_functional_ho_lee(params: HoLeeParams, t_max: float, tau_max: float, tau_a: float | None = None) -> float:
    """``E[(1 - Y) X]`` for the Ho-Lee model."""
    T = t_max
    ta = T if tau_a is None else tau_a
    s2 = params.sigma**2
    mY = params.r0 * T + _theta_int(params, 0.0, T)
    mX = (params.r0 * (tau_max - ta) - s2 / 6 * ((tau_max - T) ** 3 - (ta - T) ** 3)
          + _theta_int(params, ta, tau_max))
    cov = s2 * (tau_max - ta) * T * T / 2
    return float((1 - mY) * mX - cov)


# ---------------------------------------------------------------- generic Gaussian

def _quad(fn, a, b):
    if b <= a:
        return 0.0
    return integrate.quad(fn, a, b, epsabs=1e-15, epsrel=1e-12, limit=400)[0]


def _sq(v):
    v = np.atleast_1d(v)
    return float(np.dot(v, v))


def gaussian_moments(model: HjmModel, t_max: float, tau_a: float, tau_max: float) -> GaussianMoments:
    """Joint moments of ``(Y, X)`` by adaptive quadrature of ``Lambda0``."""
    if model.xi_const is None or model.lam0_int is None:
        raise UnsupportedPayoff(f"model {model.name} is not Gaussian-stationary")
    T, xi2 = t_max, model.xi_const**2
    L0 = lambda x: np.atleast_1d(model.lam0_int(np.asarray(float(x))))
    f0 = lambda x: float(model.f0(x))
    mY = _quad(f0, 0, T) + 0.5 * xi2 * _quad(lambda s: _sq(L0(s)), 0, T)
    mX = (_quad(f0, tau_a, tau_max)
          + 0.5 * xi2 * _quad(lambda x: _sq(L0(x)) - _sq(L0(x - T)), tau_a, tau_max))
    A = lambda u: L0(T - u)
    C = lambda u: L0(tau_max - u) - L0(tau_a - u)
    vY = xi2 * _quad(lambda u: _sq(A(u)), 0, T)
    vX = xi2 * _quad(lambda u: _sq(C(u)), 0, T)
    cXY = xi2 * _quad(lambda u: float(np.dot(A(u), C(u))), 0, T)
    return GaussianMoments(mY, mX, vY, vX, cXY)


def vasicek_moments(params: VasicekParams, t_max: float, tau_a: float, tau_max: float) -> GaussianMoments:
    """Closed-form moments from the Ornstein-Uhlenbeck short rate."""
    a, s, th, r0, T = params.alpha, params.sigma, params.theta, params.r0, t_max
    B = lambda x: -math.expm1(-a * x) / a
    mY = (r0 - th / a) * B(T) + th * T / a
    sq = lambda x: x + 2 * math.exp(-a * x) / a - math.exp(-2 * a * x) / (2 * a)  # antiderivative of (1-e^{-ax})^2
    mX = ((r0 - th / a) * (B(tau_max) - B(tau_a)) + th / a * (tau_max - tau_a)
          - s * s / (2 * a * a) * (sq(tau_max - T) - sq(tau_a - T)))
    var_s = (1 - math.exp(-2 * a * T)) / (2 * a)
    var_int = (T - 2 * B(T) + (1 - math.exp(-2 * a * T)) / (2 * a)) / (a * a)
    cov = (1 - math.exp(-a * T)) ** 2 / (2 * a * a)
    c = B(tau_max - T) - B(tau_a - T)
    return GaussianMoments(mY, mX, s * s * var_int, s * s * c * c * var_s, s * s * c * cov)


def functional_from_moments(m: GaussianMoments, payoff_kind: str, K0: float = 0.5) -> float:
    """``E[F(Y) G(X)]`` for the Gaussian pair ``(Y, X)``."""
    if payoff_kind == "linear":
        return (1 - m.mY) * m.mX - m.cXY
    if payoff_kind == "zcb":
        return math.exp(-m.mY - m.mX + 0.5 * (m.vY + m.vX + 2 * m.cXY))
    if payoff_kind == "call":
        # weight exp(-Y) shifts the mean of X by -cXY
        mp = m.mX - m.cXY
        sd = math.sqrt(m.vX)
        k = -math.log(K0)
        d2 = (k - mp) / sd
        d1 = d2 + sd
        return math.exp(-m.mY + 0.5 * m.vY) * (math.exp(-mp + 0.5 * m.vX) * ndtr(d1) - K0 * ndtr(d2))
    raise UnsupportedPayoff(payoff_kind)


def exact_functional_gaussian(model: HjmModel, t_max: float, tau_max: float, payoff_kind: str,
                              tau_a: float | None = None, K0: float = 0.5, method: str = "auto") -> float:
    """Exact functional for Ho-Lee, Vasicek or the two-factor model.

    ``method='closed'`` uses the Vasicek closed form, ``'quad'`` the generic
    quadrature route; ``'auto'`` picks the closed form when available.
    """
    ta = t_max if tau_a is None else tau_a
    if payoff_kind not in ("linear", "call", "zcb"):
        raise UnsupportedPayoff(payoff_kind)
    use_closed = method == "closed" or (method == "auto" and isinstance(model.params, VasicekParams))
    if use_closed:
        if not isinstance(model.params, VasicekParams):
            raise UnsupportedPayoff("closed-form moments are only implemented for Vasicek")
        m = vasicek_moments(model.params, t_max, ta, tau_max)
    else:
        m = gaussian_moments(model, t_max, ta, tau_max)
    return float(functional_from_moments(m, payoff_kind, K0))


# ---------------------------------------------------------------- same-grid oracle

def discrete_moments(model: HjmModel, grid: Grid, rule: QuadratureRule, scheme: str = "efd") -> GaussianMoments:
    """Exact moments of ``(Y_N, Lambda_Q)`` produced by the scheme itself.

    Requires constant ``xi`` and ``Psi = id``: the discrete state is then an
    affine function of the increments.
    """
    if model.xi_const is None:
        raise UnsupportedPayoff("discrete Gaussian moments need a constant xi")
    coef = scheme_coefficients(model, grid, scheme)
    xi = model.xi_const
    dt, dtau, la, N = grid.dt, grid.dtau, grid.ell_a, grid.N
    mean_g = np.vstack([np.zeros(grid.L), np.cumsum(dt[:, None] * xi * xi * coef.drift, axis=0)])  # (N+1, L)
    ell = grid.ell_of_n
    mY = float(np.dot(dt, mean_g[np.arange(N), ell[:N]] + coef.f0_t[:N]))
    f0q = quad_f0(model, grid, rule) @ rule.weights
    mX = float(np.dot(dtau[la:], mean_g[N, la:] + f0q))
    y = np.zeros((N, model.J))
    for m in range(N):
        for n in range(m + 1, N):
            y[m] += dt[n] * coef.vol[m, ell[n]]
    y *= xi
    x = xi * np.einsum("l,mlj->mj", dtau[la:], coef.vol[:, la:])
    vY = float(np.sum(dt[:, None] * y * y))
    vX = float(np.sum(dt[:, None] * x * x))
    c = float(np.sum(dt[:, None] * x * y))
    return GaussianMoments(mY, mX, vY, vX, c)


def discrete_functional(model: HjmModel, grid: Grid, rule: QuadratureRule, payoff_kind: str,
                        scheme: str = "efd", K0: float = 0.5) -> float:
    """Exact expectation of the computed payoff on ``grid`` (no statistical error)."""
    return float(functional_from_moments(discrete_moments(model, grid, rule, scheme), payoff_kind, K0))


# ---------------------------------------------------------------- strong errors

def ho_lee_nodal_rms(params: HoLeeParams, grid: Grid, M: int, seed: int = 0) -> float:
    """Max over nodes ``tau_ell >= t_n`` of the RMS error of the EFD state."""
    model = make_model("ho_lee", params)
    dW = stream_batch(seed, 0, M, grid, 1).dW
    ps = simulate(model, grid, dW, "efd")
    W = np.concatenate([np.zeros((M, 1)), np.cumsum(dW[:, :, 0], axis=1)], axis=1)  # (M, N+1)
    t, tau = grid.t_nodes, grid.tau_nodes[:-1]
    exact = ho_lee_exact_f(params, t[None, :, None], tau[None, None, :], W[:, :, None])
    approx = ps.gbar[:, :, : grid.L] + model.f0(tau)[None, None, :]
    rms = np.sqrt(np.mean((exact - approx) ** 2, axis=0))
    mask = tau[None, :] >= t[:, None] - 1e-12
    return float(np.max(rms[mask]))


def gaussian_terminal_rms(model: HjmModel, grid: Grid, taus, n_gl: int = 4) -> float:
    """Sup over ``taus`` of the exact RMS error of the piecewise-constant EFD
    curve ``g_{N, ell(tau)} + f0(tau)`` against ``f(t_max, tau)``.

    The error is Gaussian; mean and variance follow from ``Lambda0`` and a
    per-step Gauss-Legendre rule.
    """
    if model.xi_const is None or model.lam0 is None:
        raise UnsupportedPayoff("exact strong error needs a Gaussian-stationary model")
    xi2 = model.xi_const**2
    coef = scheme_coefficients(model, grid, "efd")
    T, t, dt = grid.t_max, grid.t_nodes, grid.dt
    taus = np.asarray(taus, dtype=float)
    cell = np.clip(np.searchsorted(grid.tau_nodes, taus, side="right") - 1, 0, grid.L - 1)
    L0 = lambda x: np.asarray(model.lam0_int(x)).reshape(np.shape(x) + (model.J,))
    mean_exact = 0.5 * xi2 * (np.sum(L0(taus) ** 2, -1) - np.sum(L0(taus - T) ** 2, -1))
    mean_disc = xi2 * (dt @ coef.drift[:, cell])
    gx, gw = np.polynomial.legendre.leggauss(n_gl)
    u = t[:-1, None] + dt[:, None] * 0.5 * (gx + 1)[None, :]  # (N, q)
    lam_exact = np.asarray(model.lam0(taus[:, None, None] - u[None])).reshape(len(taus), *u.shape, model.J)
    lam_disc = coef.vol[:, cell].transpose(1, 0, 2)[:, :, None, :]  # (n_tau, N, 1, J)
    diff = np.sum((lam_exact - lam_disc) ** 2, -1)  # (n_tau, N, q)
    var = xi2 * np.einsum("tnq,q,n->t", diff, 0.5 * gw, dt)
    return float(np.sqrt(np.max((mean_exact - mean_disc) ** 2 + var)))


# ---------------------------------------------------------------- CIR

def cir_reference(params: CIRParams, grid_fine: Grid, M_ref: int, seed: int, payoff_kind: str = "call",
                  K0: float = 0.5, rule: QuadratureRule | None = None, antithetic: bool = True,
                  workers: int = 1) -> PriceEstimate:
    """EFD price on a fine grid, used as the CIR reference value."""
    model = make_model("cir", params)
    kw = {"K0": K0} if payoff_kind == "call" else {}
    pay = make_payoff(payoff_kind, grid_fine.tau_a, **kw)
    return price(model, pay, grid_fine, rule or builtin_rule("simpson"), "efd", M_ref, seed,
                 antithetic=antithetic, workers=workers)

