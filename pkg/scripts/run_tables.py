"""Run the committed table configs and write one CSV per table to results/."""

import argparse
import sys
import time
from pathlib import Path

from hjm_mc.cli import run_convergence_study, write_csv
from hjm_mc.config import load_config, with_overrides

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("names", nargs="*", default=["ho_lee_linear", "vasicek_linear", "cir_call", "two_factor_call"])
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out-dir", default=str(ROOT / "results"))
    args = ap.parse_args(argv)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in args.names:
        cfg = with_overrides(load_config(ROOT / "configs" / f"{name}.toml"), workers=args.workers)
        t0 = time.perf_counter()
        rows = run_convergence_study(cfg)
        write_csv(rows, out_dir / f"{name}.csv")
        print(f"{name} ({cfg.model}, {time.perf_counter() - t0:.1f}s)")
        print(f"{'N':>4} {'L':>4} {'value':>12} {'E_S':>9} {'E_c':>10} {'e_tau+e_tim':>12} interval")
        for r in rows:
            est = r.e_tau + r.e_tim if r.e_tau is not None else float("nan")
            ec = f"{r.E_c:10.3e}" if r.E_c is not None else f"{'-':>10}"
            ivl = f"[{r.ratio_lo:.3f}, {r.ratio_hi:.3f}]" if r.ratio_lo is not None else "-"
            print(f"{r.N:4d} {r.L:4d} {r.value:12.6f} {r.stat_error:9.2e} {ec} {est:12.3e} {ivl}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
