"""Wall time of the backward dual pass per path, normalised by N * L^2."""

import argparse

from hjm_mc.duals import dual_cost_per_path
from hjm_mc.grid import build_nested_grid
from hjm_mc.models import make_model
from hjm_mc.payoff import builtin_rule, linear_payoff

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[8, 16, 32, 64, 128])
    ap.add_argument("--paths", type=int, default=1024)
    args = ap.parse_args()
    m, pay, rule = make_model("ho_lee"), linear_payoff(1.0), builtin_rule()
    dual_cost_per_path(m, pay, build_nested_grid(4, 4, 1.0, 2.0, 1.0), rule, 64)  # compile
    prev = None
    for n in args.sizes:
        g = build_nested_grid(n, n, 1.0, 2.0, 1.0)
        c = dual_cost_per_path(m, pay, g, rule, args.paths, repeats=3)
        growth = f"x{c / prev:.2f}" if prev else ""
        print(f"N=L={n:4d}  {c:.3e} s/path  {c / (g.N * g.L ** 2):.3e} s/(path N L^2)  {growth}")
        prev = c
