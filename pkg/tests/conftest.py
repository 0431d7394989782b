import numpy as np
import pytest

from hjm_mc.payoff import PayoffSpec

# criterion -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def smooth_payoff(tau_a: float) -> PayoffSpec:
    """Payoff with nonzero first and second derivatives in every channel."""

    def e(x):
        return np.exp(-np.asarray(x, dtype=float))

    def a(x):
        return np.asarray(x, dtype=float)

    return PayoffSpec(
        "smooth", tau_a,
        F=e, F1=lambda x: -e(x), F2=e,
        G=lambda x: np.sin(x) + a(x) ** 2, G1=lambda x: np.cos(x) + 2 * a(x), G2=lambda x: 2 - np.sin(x),
        Psi=lambda x: a(x) + 3 * a(x) ** 2, Psi1=lambda x: 1 + 6 * a(x), Psi2=lambda x: np.full(np.shape(x), 6.0),
        U=lambda x: a(x) ** 2, U1=lambda x: 2 * a(x), U2=lambda x: np.full(np.shape(x), 2.0),
    )


@pytest.fixture
def smooth():
    return smooth_payoff


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda s: (len(s.split()[0]), s)):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
