"""Acceptance criteria, each measured at its stated tolerance.

Every check records one PASS/FAIL line that pytest prints in the terminal
summary.  Running this file directly prints the same lines to stdout.
"""

import dataclasses
import math
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import ACCEPTANCE, smooth_payoff  # noqa: E402
from hjm_mc.cli import fit_slope, main, reference_estimate, run_level, run_strong_order  # noqa: E402
from hjm_mc.config import RunConfig, load_config  # noqa: E402
from hjm_mc.duals import dual_cost_per_path, dual_sweep, fd_gradient, fd_hessian  # noqa: E402
from hjm_mc.estimator import price  # noqa: E402
from hjm_mc.forward import simulate  # noqa: E402
from hjm_mc.grid import Grid, build_nested_grid  # noqa: E402
from hjm_mc.models import make_model  # noqa: E402
from hjm_mc.oracles import discrete_functional  # noqa: E402
from hjm_mc.payoff import PayoffSpec, builtin_rule, composite_lambda, linear_payoff  # noqa: E402
from hjm_mc.rng import stream  # noqa: E402

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SPANS = {"ho_lee": (1.0, 2.0), "vasicek": (0.3, 6.0), "cir": (5.0, 8.0)}

# Hessian entries that vanish identically are checked against the roundoff of a
# second difference with h = 1e-4 (about eps / h^2) instead of a relative bound.
HESS_ZERO_ABS = 1e-8

# criterion 7 targets: E_c at N = L = 5, 10, 20
CIR_TARGET = (1.21e-2, 5.39e-3, 2.79e-3)


def criterion_1(n_paths=50, n_pairs=100):
    worst_g, worst_h, worst_z, n_zero = 0.0, 0.0, 0.0, 0
    for kind, (T, tm) in SPANS.items():
        m, g, rule = make_model(kind), build_nested_grid(8, 8, T, tm, T), builtin_rule()
        pay = smooth_payoff(T)
        rng = np.random.default_rng(17)
        paths = []
        for p in range(n_paths):
            inc = stream(100, p, g, m.J)
            ps = simulate(m, g, inc, "efd", pay)
            duals, _ = dual_sweep(ps, inc.dW, m, pay, g, rule)
            paths.append((ps, inc.dW, duals))
            for n in range(g.N + 1):
                for ell in range(g.L + 2):
                    fd = fd_gradient(ps, inc.dW, m, pay, g, rule, n, ell, h=1e-6)
                    err = abs(fd - duals[n].phi[ell])
                    worst_g = max(worst_g, err / max(1e-6 * abs(fd), 1e-10))
        for i in range(n_pairs):
            ps, dW, duals = paths[i % n_paths]
            n = int(rng.integers(0, g.N + 1))
            H = duals[n].phi2
            nz = np.argwhere(H != 0)
            a, b = nz[rng.integers(len(nz))]
            fd = fd_hessian(ps, dW, m, pay, g, rule, n, int(a), int(b), h=1e-4)
            worst_h = max(worst_h, abs(fd - H[a, b]) / (1e-4 * abs(H[a, b])))
            z = np.argwhere(H == 0)
            if len(z):
                a, b = z[rng.integers(len(z))]
                fd = fd_hessian(ps, dW, m, pay, g, rule, n, int(a), int(b), h=1e-4)
                worst_z = max(worst_z, abs(fd) / HESS_ZERO_ABS)
                n_zero += 1
    ok = worst_g <= 1 and worst_h <= 1 and worst_z <= 1
    return ok, (f"max gradient err/tol {worst_g:.3g}, max Hessian err/tol {worst_h:.3g} over "
                f"{3 * n_pairs} nonzero pairs, structural zeros {n_zero} with max |fd|/1e-8 {worst_z:.3g}")


def criterion_2(n_seeds=5):
    parts, ok = [], True
    for name in ("ho_lee_linear", "vasicek_linear"):
        cfg = load_config(CONFIGS / f"{name}.toml")
        exact = reference_estimate(cfg)[0]
        hits = []
        for k in range(n_seeds):
            row = run_level(cfg, 20, 20, 1000 + k, exact)
            A, B = 0.5 * (row.ratio_lo + row.ratio_hi), 0.5 * (row.ratio_hi - row.ratio_lo)
            hits.append(A - 2 * B <= 1.0 <= A + 2 * B)
            if k == 0:
                first = f"[{row.ratio_lo:.3f},{row.ratio_hi:.3f}]"
        ok &= sum(hits) >= 4
        parts.append(f"{cfg.model} {sum(hits)}/{n_seeds} seeds (first {first})")
    return ok, "; ".join(parts)


def criterion_3():
    cfg = load_config(CONFIGS / "ho_lee_linear.toml")
    exact = reference_estimate(cfg)[0]
    M = cfg.M
    while True:
        rows = [run_level(dataclasses.replace(cfg, M=M), N, L, cfg.seed + i, exact, with_duals=False)
                for i, (N, L) in enumerate(cfg.levels)]
        if all(r.stat_error < 0.2 * abs(r.E_c) for r in rows) or M >= 64 * cfg.M:
            break
        M *= 2
    tight = all(r.stat_error < 0.2 * abs(r.E_c) for r in rows)
    grids = [cfg.build_grid(N, L) for N, L in cfg.levels]
    slope = fit_slope([g.dt.max() for g in grids], [abs(r.E_c) for r in rows])
    ec = " / ".join(f"{r.E_c:.3g}" for r in rows)
    return tight and 0.8 <= slope <= 1.2, f"E_c {ec} at M={M}, slope {slope:.3f}"


def criterion_4():
    a = RunConfig(model="ho_lee", t_max=1.0, tau_max=2.0, N=8, L=64, M=2000, seed=1,
                  levels=tuple((n, 64) for n in (8, 16, 32, 64)))
    _, s_t = run_strong_order(a)
    b = RunConfig(model="vasicek", t_max=1.0, tau_max=2.0, N=64, L=8, M=2000, seed=1,
                  levels=tuple((64, n) for n in (8, 16, 32, 64)))
    _, s_tau = run_strong_order(b)
    ok_t, ok_tau = 0.4 <= s_t <= 0.7, 0.8 <= s_tau <= 1.2
    return ok_t and ok_tau, (f"Ho-Lee nodal slope in dt {s_t:.3f} ({'in' if ok_t else 'outside'} [0.4,0.7]); "
                             f"Vasicek terminal slope in dtau {s_tau:.3f} "
                             f"({'in' if ok_tau else 'outside'} [0.8,1.2])")


def criterion_5():
    m = make_model("vasicek")
    pay = PayoffSpec("disc", 1.0, F=np.ones_like, F1=np.zeros_like, F2=np.zeros_like, G=np.zeros_like,
                     G1=np.zeros_like, G2=np.zeros_like, Psi=lambda x: np.exp(-np.asarray(x)))
    frozen = lambda tau: 0.01 * np.sin(3 * tau)
    hs, errs = [], []
    for L in (4, 8, 16, 32):
        tau = np.concatenate([[0.0], 1.0 + 2.0 * np.arange(L + 1) / L])
        g = Grid.from_nodes([0.0, 1.0], tau, 1.0)
        cells = frozen(0.5 * (g.tau_nodes[1:] + g.tau_nodes[:-1]))[g.ell_a:]
        exact = sum(integrate.quad(lambda s, c=c: math.exp(-c - float(m.f0(s))), a, b, epsabs=1e-14,
                                   epsrel=1e-12)[0]
                    for c, a, b in zip(cells, g.tau_nodes[g.ell_a:-1], g.tau_nodes[g.ell_a + 1:]))
        errs.append(abs(composite_lambda(cells, m, g, builtin_rule(), pay) - exact))
        hs.append(2.0 / L)
    slope = fit_slope(hs, errs)
    return 3.6 <= slope <= 4.4, f"slope {slope:.3f}, errors {errs[0]:.2e} .. {errs[-1]:.2e}"


def criterion_6(reps=200, M=400):
    m, g, rule = make_model("ho_lee"), build_nested_grid(4, 4, 1.0, 2.0, 1.0), builtin_rule()
    oracle = discrete_functional(m, g, rule, "linear")
    hits = 0
    for k in range(reps):
        est = price(m, linear_payoff(1.0), g, rule, "efd", M, seed=5000 + k, c0=1.65)
        hits += abs(est.value - oracle) <= est.stat_error
    return hits >= 0.85 * reps, f"covered {hits}/{reps} ({hits / reps:.1%}), need 85%"


def criterion_7():
    cfg = load_config(CONFIGS / "cir_call.toml")
    ref, ref_stat = reference_estimate(cfg, max(cfg.levels, key=lambda nl: nl[0] * nl[1]))
    parts, ok = [], True
    ecs = []
    for i, ((N, L), target) in enumerate(zip(cfg.levels, CIR_TARGET)):
        row = run_level(cfg, N, L, cfg.seed + i, ref, with_duals=False)
        bound = row.stat_error + ref_stat
        hit = abs(row.E_c - target) <= bound
        ok &= hit
        ecs.append(row.E_c)
        parts.append(f"N={N} E_c {row.E_c:.3e} vs {target:.2e} (|diff| {abs(row.E_c - target):.1e}, "
                     f"bound {bound:.1e}, {'in' if hit else 'out'})")
    halving = ", ".join(f"{b / a:.3f}" for a, b in zip(ecs, ecs[1:]))
    return ok, "; ".join(parts) + f"; halving ratios {halving}"


def criterion_8(tmp: Path):
    runs = [("ho_lee_linear", []), ("vasicek_linear", []), ("cir_call", ["--M-ref", "4000"])]
    same = []
    for name, extra in runs:
        blobs = []
        for w in (1, 2):
            out = tmp / f"{name}_w{w}.csv"
            code = main(["study", "--config", str(CONFIGS / f"{name}.toml"), "--workers", str(w),
                         "--out", str(out), *extra])
            blobs.append(out.read_bytes() if code == 0 else None)
        same.append(blobs[0] is not None and blobs[0] == blobs[1])
    return all(same), ", ".join(f"{n} {'identical' if s else 'DIFFERENT'}" for (n, _), s in zip(runs, same))


def criterion_9(n_paths=4096):
    m, pay, rule = make_model("ho_lee"), linear_payoff(1.0), builtin_rule()
    norm = []
    for n in (8, 16, 32):
        g = build_nested_grid(n, n, 1.0, 2.0, 1.0)
        norm.append(dual_cost_per_path(m, pay, g, rule, n_paths, repeats=5) / (g.N * g.L**2))
    spread = max(norm) / min(norm)
    cells = ", ".join(f"{c:.2e}" for c in norm)
    return spread <= 1.5, f"time/(N L^2) per path {cells} s, spread x{spread:.2f} (limit x1.5)"


NAMES = {
    1: "1 adjoint correctness",
    2: "2 weak-error sharpness",
    3: "3 weak first order",
    4: "4 strong order",
    5: "5 quadrature order",
    6: "6 statistical bound coverage",
    7: "7 CIR magnitude reproduction",
    8: "8 determinism across workers",
    9: "9 dual cost scaling",
}


def _record(k, result):
    ok, detail = result
    ACCEPTANCE[NAMES[k]] = (bool(ok), detail)
    assert ok, detail


def test_criterion_1():
    _record(1, criterion_1())


def test_criterion_2():
    _record(2, criterion_2())


def test_criterion_3():
    _record(3, criterion_3())


def test_criterion_4():
    _record(4, criterion_4())


def test_criterion_5():
    _record(5, criterion_5())


def test_criterion_6():
    _record(6, criterion_6())


@pytest.mark.slow
def test_criterion_7():
    _record(7, criterion_7())


def test_criterion_8(tmp_path):
    _record(8, criterion_8(tmp_path))


def test_criterion_9():
    _record(9, criterion_9())


if __name__ == "__main__":
    import tempfile

    with tempfile.TemporaryDirectory() as d:
        fns = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
               7: criterion_7, 8: lambda: criterion_8(Path(d)), 9: criterion_9}
        for k, fn in fns.items():
            ok, detail = fn()
            print(f"{'PASS' if ok else 'FAIL'} {NAMES[k]}: {detail}", flush=True)
