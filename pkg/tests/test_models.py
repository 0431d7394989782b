import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hjm_mc.models import (CIRParams, InvalidParams, UnknownKind, cir_psi, diffusion_b, drift_a,
                           lambda_tilde_numeric, make_model)

KINDS = ["ho_lee", "vasicek", "cir", "two_factor"]


def test_ho_lee_drift_and_diffusion():
    m = make_model("ho_lee")
    s = m.params.sigma
    t, tau = np.array([0.0, 0.3, 0.7]), np.array([0.5, 1.2, 1.9])
    for x in (-0.2, 0.0, 0.4):
        np.testing.assert_allclose(drift_a(m, t, tau, x), s * s * (tau - t), rtol=1e-14)
        np.testing.assert_allclose(diffusion_b(m, t, tau, x)[..., 0], s, rtol=1e-14)


def test_vasicek_drift():
    m = make_model("vasicek")
    s, a = m.params.sigma, m.params.alpha
    t, tau = 0.2, np.linspace(0.2, 6.0, 9)
    e = np.exp(-a * (tau - t))
    np.testing.assert_allclose(drift_a(m, t, tau, 0.01), s * s / a * (1 - e) * e, rtol=1e-13, atol=1e-18)


def test_two_factor_diffusion():
    m = make_model("two_factor")
    p = m.params
    t, tau = 0.4, np.array([0.4, 1.0, 2.5])
    b = diffusion_b(m, t, tau, 0.0)
    np.testing.assert_allclose(b[:, 0], p.sigma1)
    np.testing.assert_allclose(b[:, 1], p.sigma2 * np.exp(-p.a2 * (tau - t) / 2))


def test_cir_xi_at_zero_rate():
    m = make_model("cir")
    p = m.params
    t = 0.7
    x = -float(m.f0(t))
    expected = p.sigma * np.sqrt(np.sqrt(p.delta) / 2)
    np.testing.assert_allclose(diffusion_b(m, t, 2.0, x)[0], expected * m.lam(t, 2.0)[0], rtol=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_drift_vanishes_on_diagonal(kind):
    m = make_model(kind)
    t = np.linspace(0, 3, 7)
    np.testing.assert_allclose(drift_a(m, t, t, 0.01), 0.0, atol=1e-18)
    np.testing.assert_allclose(m.lambda_tilde(t, t), 0.0, atol=1e-18)


def test_lambda_tilde_numeric_examples():
    one = lambda t, tau: np.ones(1)
    assert lambda_tilde_numeric(one, 0.2, 1.7) == pytest.approx(1.5, rel=1e-12)
    assert lambda_tilde_numeric(one, 0.4, 0.4) == 0.0
    a = 1.3
    ex = lambda t, tau: np.array([np.exp(-a * (tau - t))])
    x = 0.9
    assert lambda_tilde_numeric(ex, 0.1, 0.1 + x) == pytest.approx(np.exp(-a * x) * (1 - np.exp(-a * x)) / a,
                                                                   rel=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_lambda_tilde_closed_form_matches_quadrature(kind):
    m = make_model(kind)
    for t in np.linspace(0.0, 2.0, 20):
        for tau in np.linspace(t, t + 4.0, 20):
            ref = lambda_tilde_numeric(m.lam, t, tau)
            got = float(m.lambda_tilde(t, tau))
            assert got == pytest.approx(ref, rel=1e-8, abs=1e-16)


def test_cir_psi_initial_values():
    psi, psi_p, _ = cir_psi(CIRParams())
    assert abs(float(psi(0.0))) < 1e-15
    assert float(psi_p(0.0)) == pytest.approx(1.0, rel=1e-14)


def test_cir_riccati_residual():
    p = CIRParams()
    psi, _, _ = cir_psi(p)
    tau = 3.0
    B = lambda t: psi(tau - t)
    worst = []
    for h in (1e-2, 5e-3):
        t = np.linspace(0.0, 2.5, 11)
        dBdt = (B(t + h) - B(t - h)) / (2 * h)
        res = dBdt - (0.5 * p.sigma**2 * B(t) ** 2 + p.alpha * B(t) - 1)
        worst.append(np.max(np.abs(res)))
    assert worst[1] < 1e-5
    assert worst[0] / worst[1] == pytest.approx(4.0, rel=0.05)


def test_initial_curves_at_zero():
    assert float(make_model("ho_lee").f0(0.0)) == pytest.approx(0.05, abs=1e-16)
    assert float(make_model("vasicek").f0(0.0)) == pytest.approx(0.03, abs=1e-16)
    assert float(make_model("cir").f0(0.0)) == pytest.approx(0.15, abs=1e-15)


@pytest.mark.parametrize("kind", KINDS)
def test_f0_prime_matches_differences(kind):
    m = make_model(kind)
    tau = np.linspace(0.1, 5.0, 13)
    h = 1e-5
    fd = (m.f0(tau + h) - m.f0(tau - h)) / (2 * h)
    np.testing.assert_allclose(m.f0_prime(tau), fd, rtol=1e-7, atol=1e-10)


@pytest.mark.parametrize("kind", KINDS)
@given(x=st.floats(-0.3, 0.5))
def test_xi_derivatives_consistent(kind, x):
    m = make_model(kind)
    xs = np.array([x])
    np.testing.assert_allclose(m.xi_sq(xs), m.xi(xs) ** 2, rtol=1e-12, atol=1e-300)
    if kind == "cir" and x < 0.05:
        return  # near and below the regularised kink the differences are dominated by rounding
    h = 1e-5
    fd1 = (m.xi_sq(xs + h) - m.xi_sq(xs - h)) / (2 * h)
    fd2 = (m.xi_sq(xs + h) - 2 * m.xi_sq(xs) + m.xi_sq(xs - h)) / h**2
    scale = m.xi_sq(np.array([abs(x) + 1.0]))[0]
    np.testing.assert_allclose(m.xi_sq_prime(xs), fd1, atol=1e-6 * scale)
    np.testing.assert_allclose(m.xi_sq_second(xs), fd2, atol=1e-4 * scale)
    g1 = (m.xi(xs + h) - m.xi(xs - h)) / (2 * h)
    g2 = (m.xi(xs + h) - 2 * m.xi(xs) + m.xi(xs - h)) / h**2
    np.testing.assert_allclose(m.xi_prime(xs), g1, rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(m.xi_second(xs), g2, rtol=1e-4, atol=1e-6)


def test_cir_xi_derivatives_near_zero():
    m = make_model("cir")
    xs = np.array([-3e-4, -1e-5, 0.0, 2e-5, 4e-4])
    h = 1e-8
    fd = (m.xi(xs + h) - m.xi(xs - h)) / (2 * h)
    np.testing.assert_allclose(m.xi_prime(xs), fd, rtol=1e-6)
    assert np.all(np.isfinite(m.xi_second(xs)))


def test_make_model_errors():
    with pytest.raises(UnknownKind):
        make_model("hull_white")
    with pytest.raises(InvalidParams):
        make_model("vasicek", {"sigma": -1.0})
    with pytest.raises(InvalidParams):
        make_model("vasicek", {"volatility": 0.1})


def test_make_model_overrides():
    m = make_model("vasicek", {"alpha": 2.0})
    assert m.params.alpha == 2.0 and m.params.sigma == 0.01
