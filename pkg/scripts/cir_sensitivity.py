"""CIR price errors against self-references: regularisation delta and reference refinement."""

import argparse
import dataclasses
from pathlib import Path

from hjm_mc.cli import reference_estimate, run_level
from hjm_mc.config import load_config

CFG = Path(__file__).resolve().parents[1] / "configs" / "cir_call.toml"

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--deltas", type=float, nargs="+", default=[1e-8, 1e-6])
    ap.add_argument("--factors", type=int, nargs="+", default=[8, 16])
    ap.add_argument("--M-ref", dest="M_ref", type=int, default=40_000)
    args = ap.parse_args()
    base = load_config(CFG)
    finest = max(base.levels, key=lambda nl: nl[0] * nl[1])
    for delta in args.deltas:
        for factor in args.factors:
            cfg = dataclasses.replace(base, model_params={**base.model_params, "delta": delta}, ref_factor=factor,
                                      M_ref=args.M_ref)
            ref, ref_stat = reference_estimate(cfg, finest)
            rows = [run_level(cfg, N, L, cfg.seed + i, ref, with_duals=False) for i, (N, L) in enumerate(cfg.levels)]
            ec = " ".join(f"{r.E_c:.3e}" for r in rows)
            print(f"delta={delta:g} ref x{factor}: ref {ref:.6f} (+-{ref_stat:.1e})  E_c {ec}", flush=True)
