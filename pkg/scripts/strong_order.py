"""Strong convergence sequences: Ho-Lee nodal error in dt, Vasicek terminal error in dtau."""

from pathlib import Path

from hjm_mc.cli import run_strong_order, write_csv
from hjm_mc.config import RunConfig

OUT = Path(__file__).resolve().parents[1] / "results"

RUNS = {
    "strong_dt_ho_lee": RunConfig(model="ho_lee", t_max=1.0, tau_max=2.0, M=2000, seed=1,
                                  levels=tuple((n, 64) for n in (8, 16, 32, 64))),
    "strong_dtau_vasicek": RunConfig(model="vasicek", t_max=1.0, tau_max=2.0, M=2000, seed=1,
                                     levels=tuple((64, n) for n in (8, 16, 32, 64))),
}

if __name__ == "__main__":
    OUT.mkdir(exist_ok=True)
    for name, cfg in RUNS.items():
        rows, slope = run_strong_order(cfg)
        write_csv(rows, OUT / f"{name}.csv", ["N", "L", "dt", "dtau", "rms"])
        print(f"{name}: slope {slope:.3f}")
        for N, L, dt, dtau, rms in rows:
            print(f"  N={N:3d} L={L:3d} dt={dt:.4g} dtau={dtau:.4g} rms={rms:.3e}")
