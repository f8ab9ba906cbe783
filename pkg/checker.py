"""
Manual smoke run: simulate two small areas, fit them, pool them and print what
came out. Uses a throwaway directory and small sampler sizes.

    PYTHONPATH=. python checker.py
"""
import json
import sys
import tempfile
from pathlib import Path

import pandas as pd

import main as cli


def main() -> int:
    with tempfile.TemporaryDirectory() as tmp:
        cfg_path = Path(tmp) / "run.json"
        cfg_path.write_text(json.dumps({
            "seed": 7,
            "out_dir": "out",
            "areas": [
                {"area_id": "north", "country": "demo"},
                {"area_id": "south", "country": "demo",
                 "truth": [1983.0, 19.0, 0.45, 0.47, 0.16, -0.65, -0.037, 0.13]},
            ],
            "imis": {"n_initial": 1000, "n_per_iter": 100, "max_iterations": 10, "n_resample": 500},
            "pooling": {"n_candidates": 20000, "n_draws": 500, "min_ess": 50, "correlation_years": [2000]},
            "simulation": {"site_count": 3, "years": list(range(1995, 2004))},
        }))

        # 1) Simulate, fit, pool
        for command in ("simulate", "fit", "pool"):
            code = cli.main([command, "--config", str(cfg_path)])
            print(f"[TEST] {command}: exit code {code}")
            if code != 0:
                print(f"[TEST] FAILURE: {command} did not succeed.")
                return code

        # 2) Inspect outputs
        out = Path(tmp) / "out"
        for path in sorted(out.rglob("*.csv")):
            print(f"[TEST] wrote {path.relative_to(out)}")
        pooled = pd.read_csv(out / "pooled" / "north_hierarchical_prevalence.csv")
        print("\n[TEST] pooled prevalence, north:\n" + "-" * 40)
        print(pooled.tail(5).to_string(index=False))
        print("-" * 40)
        corr = pd.read_csv(out / "pooled" / "demo_correlations.csv")
        print(corr.to_string(index=False))

        # 3) Sanity check
        if (pooled["q05"] <= pooled["q50"]).all() and (pooled["q50"] <= pooled["q95"]).all():
            print("[TEST] SUCCESS: quantile bands are ordered.")
            return 0
        print("[TEST] FAILURE: quantile bands are not ordered.")
        return 1


if __name__ == "__main__":
    sys.exit(main())
