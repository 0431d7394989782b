"""Command-line front end: pricing, error estimation and convergence studies.

    hjm-mc price --config configs/ho_lee_linear.toml --N 20 --L 20
    hjm-mc study --config configs/ho_lee_linear.toml --out results/ho_lee.csv
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import astuple, dataclass, fields

import numpy as np

from .config import ConfigError, RunConfig, load_config, with_overrides
from .duals import SchemeUnsupported, error_estimate
from .estimator import TolUnreachable, adaptive_price, price
from .grid import NestingViolation
from .models import InvalidParams, UnknownKind
from .oracles import (cir_reference, discrete_functional, exact_functional_gaussian, exact_functional_ho_lee,
                      gaussian_terminal_rms, ho_lee_nodal_rms)
from .payoff import UnsupportedPayoff
from .rng import derived_seed

REF_SALT = 0x5851F42D4C957F2D


@dataclass
class TableRow:
    N: int
    L: int
    value: float
    stat_error: float
    e_tau: float | None = None
    e_tim: float | None = None
    e_tau_stat: float | None = None
    e_tim_stat: float | None = None
    exact: float | None = None
    E_c: float | None = None
    ratio_lo: float | None = None
    ratio_hi: float | None = None


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def _write_rows(fh, rows, header=None) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header or [f.name for f in fields(TableRow)])
    for r in rows:
        w.writerow([_fmt(v) for v in (astuple(r) if hasattr(r, "__dataclass_fields__") else r)])


def write_csv(rows, path, header=None) -> None:
    """Header line, then one line per row; ``None`` cells are left blank."""
    with open(path, "w", newline="") as fh:
        _write_rows(fh, rows, header)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: _parse(v) for k, v in rec.items()} for rec in csv.DictReader(fh)]


def _parse(v: str):
    if v == "":
        return None
    try:
        return float(v)
    except ValueError:
        return v


# ---------------------------------------------------------------- references

def reference_value(cfg: RunConfig, finest: tuple[int, int] | None = None) -> float | None:
    """Exact functional for Gaussian models, a fine-grid value for ``reference = 'self'``."""
    ref = reference_estimate(cfg, finest)
    return None if ref is None else ref[0]


def reference_estimate(cfg: RunConfig, finest: tuple[int, int] | None = None) -> tuple[float, float] | None:
    """``(value, stat_error)`` of the reference; the bound is zero for closed forms."""
    if cfg.reference == "none":
        return None
    model = cfg.build_model()
    if cfg.reference == "self":
        N, L = finest or (cfg.N, cfg.L)
        fine = cfg.build_grid(N * cfg.ref_factor, L * cfg.ref_factor)
        M_ref = cfg.M_ref or 10 * cfg.M
        M_ref += M_ref % 2
        if cfg.model == "cir":
            est = cir_reference(model.params, fine, M_ref, derived_seed(cfg.seed, REF_SALT), cfg.payoff,
                                rule=cfg.build_rule(), workers=cfg.workers, **cfg.payoff_params)
        else:
            est = price(model, cfg.build_payoff(), fine, cfg.build_rule(), "efd", M_ref,
                        derived_seed(cfg.seed, REF_SALT), antithetic=True, workers=cfg.workers)
        return est.value, est.stat_error
    if model.xi_const is None or cfg.payoff not in ("linear", "call", "zcb"):
        return None
    if cfg.model == "ho_lee" and cfg.payoff == "linear":
        return exact_functional_ho_lee(model.params, cfg.t_max, cfg.tau_max, cfg.tau_a_eff), 0.0
    return exact_functional_gaussian(model, cfg.t_max, cfg.tau_max, cfg.payoff, cfg.tau_a_eff,
                                     **cfg.payoff_params), 0.0


# ---------------------------------------------------------------- runners

def run_level(cfg: RunConfig, N: int, L: int, seed: int, exact: float | None, with_duals: bool = True) -> TableRow:
    model, pay, rule = cfg.build_model(), cfg.build_payoff(), cfg.build_rule()
    grid = cfg.build_grid(N, L)
    if cfg.tol_stat is not None:
        est = adaptive_price(model, pay, grid, rule, cfg.scheme, cfg.tol_stat, cfg.M, cfg.M_max or 64 * cfg.M,
                             seed, cfg.c0, cfg.antithetic, cfg.workers)
    else:
        est = price(model, pay, grid, rule, cfg.scheme, cfg.M, seed, cfg.antithetic, cfg.c0, cfg.workers)
    row = TableRow(N, L, est.value, est.stat_error, exact=exact)
    if exact is not None:
        row.E_c = exact - est.value
    if with_duals and cfg.scheme == "efd" and cfg.M_dual_eff > 0:
        rep = error_estimate(model, pay, grid, rule, cfg.M_dual_eff, seed, cfg.c0, cfg.antithetic,
                             exact=exact, price_estimate=est, workers=cfg.workers)
        row.e_tau, row.e_tim = rep.e_tau, rep.e_tim
        row.e_tau_stat, row.e_tim_stat = rep.e_tau_stat, rep.e_tim_stat
        row.ratio_lo, row.ratio_hi = rep.ratio_lo, rep.ratio_hi
    return row


def run_price(cfg: RunConfig) -> TableRow:
    cfg.validate()
    return run_level(cfg, cfg.N, cfg.L, cfg.seed, reference_value(cfg))


def run_convergence_study(cfg: RunConfig, refinements=None) -> list[TableRow]:
    """One row per ``(N, L)``; level ``i`` uses seed ``seed + i``."""
    cfg.validate()
    levels = list(refinements or cfg.levels or ((cfg.N, cfg.L),))
    finest = max(levels, key=lambda nl: nl[0] * nl[1])
    exact = reference_value(cfg, finest)
    return [run_level(cfg, N, L, cfg.seed + i, exact) for i, (N, L) in enumerate(levels)]


def fit_slope(h, err) -> float:
    """Least-squares slope of ``log err`` against ``log h``."""
    return float(np.polyfit(np.log(np.asarray(h, float)), np.log(np.asarray(err, float)), 1)[0])


def run_strong_order(cfg: RunConfig, refinements=None, n_tau: int = 801):
    """RMS strong errors along a refinement sequence.

    Ho-Lee: Monte Carlo nodal error against the exact solution, refining
    ``N`` at fixed ``L``.  Other Gaussian models: exact RMS error of the
    terminal curve, refining ``L`` at fixed ``N``.
    Returns ``(rows, slope)`` with rows ``[N, L, dt, dtau, rms]``.
    """
    cfg.validate()
    model = cfg.build_model()
    levels = list(refinements or cfg.levels)
    rows = []
    for N, L in levels:
        grid = cfg.build_grid(N, L)
        if cfg.model == "ho_lee":
            rms = ho_lee_nodal_rms(model.params, grid, cfg.M, cfg.seed)
        else:
            taus = np.linspace(cfg.t_max, cfg.tau_max, n_tau)
            rms = gaussian_terminal_rms(model, grid, taus)
        rows.append([N, L, float(np.max(grid.dt)), float(np.max(grid.dtau)), rms])
    col = 2 if cfg.model == "ho_lee" else 3
    slope = fit_slope([r[col] for r in rows], [r[4] for r in rows]) if len(rows) > 1 else math.nan
    return rows, slope


def run_oracle_check(cfg: RunConfig):
    """Compare the engine's Monte Carlo mean with the same-grid exact value.

    Returns ``(rows, ok)``; each row is ``[check, value, reference, tol, pass]``.
    """
    cfg.validate()
    model, grid, rule = cfg.build_model(), cfg.build_grid(), cfg.build_rule()
    rows = []
    if model.xi_const is None or cfg.payoff not in ("linear", "call", "zcb"):
        raise UnsupportedPayoff("oracle-check needs a Gaussian model and a linear, call or zcb payoff")
    disc = discrete_functional(model, grid, rule, cfg.payoff, cfg.scheme, **cfg.payoff_params)
    est = price(model, cfg.build_payoff(), grid, rule, cfg.scheme, cfg.M, cfg.seed, cfg.antithetic, cfg.c0,
                cfg.workers)
    tol = 3 * est.std / math.sqrt(est.n_samples)
    rows.append(["mc_vs_same_grid", est.value, disc, tol, int(abs(est.value - disc) <= tol)])
    if cfg.model == "vasicek":
        a = exact_functional_gaussian(model, cfg.t_max, cfg.tau_max, cfg.payoff, cfg.tau_a_eff, method="closed",
                                      **cfg.payoff_params)
        b = exact_functional_gaussian(model, cfg.t_max, cfg.tau_max, cfg.payoff, cfg.tau_a_eff, method="quad",
                                      **cfg.payoff_params)
        tol = 1e-10 * max(1.0, abs(a))
        rows.append(["closed_vs_quadrature", a, b, tol, int(abs(a - b) <= tol)])
    if cfg.model == "ho_lee" and cfg.payoff == "linear":
        a = exact_functional_ho_lee(model.params, cfg.t_max, cfg.tau_max, cfg.tau_a_eff)
        b = exact_functional_gaussian(model, cfg.t_max, cfg.tau_max, "linear", cfg.tau_a_eff, method="quad")
        tol = 1e-10 * max(1.0, abs(a))
        rows.append(["closed_vs_quadrature", a, b, tol, int(abs(a - b) <= tol)])
    return rows, all(r[4] for r in rows)


# ---------------------------------------------------------------- argument parsing

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hjm-mc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name in ("price", "error-estimate", "study", "strong-order", "oracle-check"):
        p = sub.add_parser(name)
        p.add_argument("--config")
        p.add_argument("--model")
        p.add_argument("--scheme", choices=["efd", "efe"])
        p.add_argument("--N", type=int)
        p.add_argument("--L", type=int)
        p.add_argument("--M", type=int)
        p.add_argument("--M-dual", dest="M_dual", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--c0", type=float)
        p.add_argument("--antithetic", choices=["on", "off"])
        p.add_argument("--tol-stat", dest="tol_stat", type=float)
        p.add_argument("--M-ref", dest="M_ref", type=int)
        p.add_argument("--out")
        p.add_argument("--workers", type=int)
    return ap


def config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    anti = None if args.antithetic is None else args.antithetic == "on"
    return with_overrides(cfg, model=args.model, scheme=args.scheme, N=args.N, L=args.L, M=args.M,
                          M_dual=args.M_dual, seed=args.seed, c0=args.c0, antithetic=anti,
                          tol_stat=args.tol_stat, M_ref=args.M_ref, out=args.out, workers=args.workers)


def _emit(rows, cfg: RunConfig, header=None) -> None:
    if cfg.out:
        write_csv(rows, cfg.out, header)
    else:
        _write_rows(sys.stdout, rows, header)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.cmd == "price":
            _emit([run_price(cfg)], cfg)
        elif args.cmd == "error-estimate":
            if cfg.scheme != "efd":
                raise SchemeUnsupported("error estimates are only available for the EFD scheme")
            _emit([run_price(cfg)], cfg)
        elif args.cmd == "study":
            _emit(run_convergence_study(cfg), cfg)
        elif args.cmd == "strong-order":
            rows, slope = run_strong_order(cfg)
            _emit(rows, cfg, ["N", "L", "dt", "dtau", "rms"])
            print(f"fitted slope: {slope:.4f}", file=sys.stderr)
        elif args.cmd == "oracle-check":
            rows, ok = run_oracle_check(cfg)
            _emit(rows, cfg, ["check", "value", "reference", "tol", "pass"])
            if not ok:
                print("oracle check failed", file=sys.stderr)
                return 1
    except (ConfigError, NestingViolation, UnknownKind, InvalidParams, UnsupportedPayoff, SchemeUnsupported,
            TolUnreachable, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
