"""Separable HJM volatility structures and the four benchmark models.

The volatility is ``sigma(t, tau) = xi(r(t)) * lambda(t, tau)`` with the
short rate ``r(t) = f(t, t)``.  All benchmark models are stationary in the
sense ``lambda(t, tau) = lambda0(tau - t)``; for those the closed-form
antiderivative ``Lambda0(x) = int_0^x lambda0`` is stored as well, which the
Gaussian oracles use.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

Fn = Callable[[np.ndarray], np.ndarray]


class UnknownKind(ValueError):
    pass


class InvalidParams(ValueError):
    pass


class QuadratureNonconvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class HoLeeParams:
    r0: float = 0.05
    sigma: float = 0.01
    theta_scale: float = 0.1  # theta(s) = theta_scale * exp(-theta_rate * s)
    theta_rate: float = 1.0


@dataclass(frozen=True)
class VasicekParams:
    r0: float = 0.03
    sigma: float = 0.01
    alpha: float = 1.0
    theta: float = 0.05


@dataclass(frozen=True)
class CIRParams:
    r0: float = 0.15
    sigma: float = 0.1
    alpha: float = 1.0
    theta: float = 0.05
    delta: float = 1e-8  # smoothing of sqrt(max(x, 0))


@dataclass(frozen=True)
class TwoFactorParams:
    sigma1: float = 0.02
    sigma2: float = 0.01
    a2: float = 0.5
    b0: float = 0.0759
    b1: float = -0.0439
    k: float = 0.4454


PARAMS = {
    "ho_lee": HoLeeParams,
    "vasicek": VasicekParams,
    "cir": CIRParams,
    "two_factor": TwoFactorParams,
}


@dataclass(frozen=True, eq=False)
class HjmModel:
    """Volatility factorisation, initial curve and their derivatives.

    ``lam(t, tau)`` returns shape ``broadcast(t, tau).shape + (J,)``.
    """

    name: str
    J: int
    xi: Fn
    xi_prime: Fn
    xi_second: Fn
    xi_sq: Fn
    xi_sq_prime: Fn
    xi_sq_second: Fn
    lam: Callable[[np.ndarray, np.ndarray], np.ndarray]
    lambda_tilde: Callable[[np.ndarray, np.ndarray], np.ndarray]
    f0: Fn
    f0_prime: Fn
    params: object = None
    # stationary structure, lambda(t, tau) = lam0(tau - t); None if not available
    lam0: Fn | None = field(default=None, repr=False)
    lam0_int: Fn | None = field(default=None, repr=False)
    # constant xi (Gaussian models); None when xi depends on the short rate
    xi_const: float | None = None


def drift_a(model: HjmModel, t, tau, x):
    """``xi^2(x + f0(t)) * lambda_tilde(t, tau)``."""
    return model.xi_sq(np.add(x, model.f0(t))) * model.lambda_tilde(t, tau)


def diffusion_b(model: HjmModel, t, tau, x):
    """``xi(x + f0(t)) * lambda(t, tau)``, shape ``(..., J)``."""
    xi = np.asarray(model.xi(np.add(x, model.f0(t))))
    return xi[..., None] * model.lam(t, tau)


def lambda_tilde_numeric(lam, t: float, tau: float, rtol: float = 1e-10, limit: int = 200) -> float:
    """``lambda(t, tau) . int_t^tau lambda(t, z) dz`` by adaptive Gauss-Kronrod."""
    if tau == t:
        return 0.0
    lt = np.atleast_1d(lam(t, tau))
    total = 0.0
    for j in range(lt.shape[-1]):
        val, err, info = _quad(lambda z: np.atleast_1d(lam(t, z))[j], t, tau, rtol, limit)
        if not np.isfinite(val) or err > max(rtol * abs(val), 1e-14):
            raise QuadratureNonconvergence(f"component {j}: estimate {val}, error {err}")
        total += lt[j] * val
    return float(total)


def _quad(fn, a, b, rtol, limit):
    val, err, info = integrate.quad(fn, a, b, epsabs=1e-15, epsrel=rtol, limit=limit, full_output=1)[:3]
    return val, err, info


def _stationary(lam0: Fn, lam0_int: Fn, J: int):
    def lam(t, tau):
        x = np.subtract(tau, t)
        return np.asarray(lam0(x)).reshape(np.shape(x) + (J,))

    def lambda_tilde(t, tau):
        x = np.subtract(tau, t)
        l0 = np.asarray(lam0(x)).reshape(np.shape(x) + (J,))
        i0 = np.asarray(lam0_int(x)).reshape(np.shape(x) + (J,))
        return np.sum(l0 * i0, axis=-1)

    return lam, lambda_tilde


def _constant_xi(s: float):
    def xi(x):
        return np.full(np.shape(x), s)

    def zero(x):
        return np.zeros(np.shape(x))

    def xi_sq(x):
        return np.full(np.shape(x), s * s)

    return dict(xi=xi, xi_prime=zero, xi_second=zero, xi_sq=xi_sq, xi_sq_prime=zero, xi_sq_second=zero)


def _ho_lee(p: HoLeeParams) -> HjmModel:
    if p.sigma <= 0:
        raise InvalidParams("sigma must be positive")
    c, k, s = p.theta_scale, p.theta_rate, p.sigma

    def f0(tau):
        tau = np.asarray(tau, dtype=float)
        return p.r0 - 0.5 * s * s * tau**2 + c / k * (1.0 - np.exp(-k * tau))

    def f0_prime(tau):
        tau = np.asarray(tau, dtype=float)
        return -s * s * tau + c * np.exp(-k * tau)

    lam0 = lambda x: np.ones(np.shape(x))
    lam0_int = lambda x: np.asarray(x, dtype=float)
    lam, lt = _stationary(lam0, lam0_int, 1)
    return HjmModel("ho_lee", 1, lam=lam, lambda_tilde=lt, f0=f0, f0_prime=f0_prime, params=p,
                    lam0=lam0, lam0_int=lam0_int, xi_const=s, **_constant_xi(s))


def _vasicek(p: VasicekParams) -> HjmModel:
    if p.sigma <= 0 or p.alpha <= 0:
        raise InvalidParams("sigma and alpha must be positive")
    s, a, th, r0 = p.sigma, p.alpha, p.theta, p.r0

    def f0(tau):
        e = np.exp(-a * np.asarray(tau, dtype=float))
        return (r0 - th / a) * e + th / a - s * s / (2 * a * a) * (1 - e) ** 2

    def f0_prime(tau):
        e = np.exp(-a * np.asarray(tau, dtype=float))
        return -a * (r0 - th / a) * e - s * s / a * (1 - e) * e

    lam0 = lambda x: np.exp(-a * np.asarray(x, dtype=float))
    lam0_int = lambda x: -np.expm1(-a * np.asarray(x, dtype=float)) / a
    lam, lt = _stationary(lam0, lam0_int, 1)
    return HjmModel("vasicek", 1, lam=lam, lambda_tilde=lt, f0=f0, f0_prime=f0_prime, params=p,
                    lam0=lam0, lam0_int=lam0_int, xi_const=s, **_constant_xi(s))


def cir_psi(p: CIRParams):
    """Riccati solution ``psi`` and its first two derivatives.

    ``B(t; tau) = psi(tau - t)`` solves ``dB/dt = sigma^2 B^2 / 2 + alpha B - 1``
    with ``B(tau; tau) = 0``.
    """
    s2, a = p.sigma**2, p.alpha
    g = 0.5 * np.sqrt(2 * s2 + a * a)
    c = a / (2 * g)

    def psi(x):
        x = np.asarray(x, dtype=float)
        th = np.tanh(g * x)
        return -a / s2 + 2 * g / s2 * (th + c) / (1 + c * th)

    def psi_p(x):
        ps = psi(x)
        return 1 - a * ps - 0.5 * s2 * ps * ps

    def psi_pp(x):
        ps = psi(x)
        return -(a + s2 * ps) * (1 - a * ps - 0.5 * s2 * ps * ps)

    return psi, psi_p, psi_pp


def _cir(p: CIRParams) -> HjmModel:
    if p.sigma <= 0 or p.alpha <= 0 or p.delta <= 0:
        raise InvalidParams("sigma, alpha and delta must be positive")
    s, d = p.sigma, p.delta
    psi, psi_p, psi_pp = cir_psi(p)

    def _h(x):
        x = np.asarray(x, dtype=float)
        root = np.sqrt(x * x + d)
        return x, root, 0.5 * (x + root)

    def xi(x):
        return s * np.sqrt(_h(x)[2])

    def xi_prime(x):
        _, root, h = _h(x)
        return s * np.sqrt(h) / (2 * root)

    def xi_second(x):
        x, root, h = _h(x)
        return s * np.sqrt(h) * (root - 2 * x) / (4 * root**3)

    def xi_sq(x):
        return s * s * _h(x)[2]

    def xi_sq_prime(x):
        _, root, h = _h(x)
        return s * s * h / root

    def xi_sq_second(x):
        _, root, _ = _h(x)
        return 0.5 * s * s * d / root**3

    def f0(tau):
        return p.r0 * psi_p(tau) + p.theta * psi(tau)

    def f0_prime(tau):
        return p.r0 * psi_pp(tau) + p.theta * psi_p(tau)

    lam, lt = _stationary(psi_p, psi, 1)
    return HjmModel("cir", 1, xi=xi, xi_prime=xi_prime, xi_second=xi_second, xi_sq=xi_sq,
                    xi_sq_prime=xi_sq_prime, xi_sq_second=xi_sq_second, lam=lam, lambda_tilde=lt,
                    f0=f0, f0_prime=f0_prime, params=p, lam0=psi_p, lam0_int=psi)


def _two_factor(p: TwoFactorParams) -> HjmModel:
    if p.sigma1 <= 0 or p.sigma2 <= 0 or p.a2 <= 0:
        raise InvalidParams("sigma1, sigma2 and a2 must be positive")
    s1, s2, a2 = p.sigma1, p.sigma2, p.a2

    def lam0(x):
        x = np.asarray(x, dtype=float)
        return np.stack([np.full(x.shape, s1), s2 * np.exp(-0.5 * a2 * x)], axis=-1)

    def lam0_int(x):
        x = np.asarray(x, dtype=float)
        return np.stack([s1 * x, -s2 * 2.0 / a2 * np.expm1(-0.5 * a2 * x)], axis=-1)

    def f0(tau):
        return p.b0 + p.b1 * np.exp(-p.k * np.asarray(tau, dtype=float))

    def f0_prime(tau):
        return -p.k * p.b1 * np.exp(-p.k * np.asarray(tau, dtype=float))

    lam, lt = _stationary(lam0, lam0_int, 2)
    return HjmModel("two_factor", 2, lam=lam, lambda_tilde=lt, f0=f0, f0_prime=f0_prime, params=p,
                    lam0=lam0, lam0_int=lam0_int, xi_const=1.0, **_constant_xi(1.0))


_BUILDERS = {"ho_lee": _ho_lee, "vasicek": _vasicek, "cir": _cir, "two_factor": _two_factor}


def make_model(kind: str, params=None) -> HjmModel:
    """Build one of ``ho_lee``, ``vasicek``, ``cir``, ``two_factor``.

    ``params`` may be the matching dataclass, a mapping of overrides, or None
    for the default (experiment) parameters.
    """
    if kind not in _BUILDERS:
        raise UnknownKind(kind)
    cls = PARAMS[kind]
    if params is None:
        params = cls()
    elif isinstance(params, dict):
        try:
            params = cls(**params)
        except TypeError as exc:
            raise InvalidParams(str(exc)) from None
    elif not isinstance(params, cls):
        raise InvalidParams(f"expected {cls.__name__}, got {type(params).__name__}")
    return _BUILDERS[kind](params)
