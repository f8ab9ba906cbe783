#!/usr/bin/env python3
"""
Recompute lambda = sigma_within^2 / sigma_between^2 from a table of SDs, or
estimate it from per-area posterior medians.

    python tools/lambda_from_table.py                       # built-in default SDs
    python tools/lambda_from_table.py --sds sds.csv         # parameter,sigma_between,sigma_within
    python tools/lambda_from_table.py --medians medians.csv # country,<parameter columns>
"""
import argparse
import sys
from pathlib import Path

import numpy as np
import pandas as pd

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from modules.data_model import PARAM_NAMES, ParamVector  # noqa: E402
from modules.priors import LambdaEstimate, empirical_lambda, lambda_from_sds  # noqa: E402

# between/within-country SDs of posterior medians, PARAM_NAMES order
DEFAULT_SIGMA_BETWEEN = (4.89, 4.95, 0.022, 0.142, 0.073, 0.172, 0.0037, 0.110)
DEFAULT_SIGMA_WITHIN = (2.90, 2.43, 0.032, 0.090, 0.038, 0.254, 0.0029, 0.037)


def from_sd_table(frame: pd.DataFrame) -> LambdaEstimate:
    frame = frame.set_index("parameter").reindex(list(PARAM_NAMES))
    if frame.isna().any().any():
        raise ValueError(f"SD table must have one row per parameter: {', '.join(PARAM_NAMES)}")
    between = frame["sigma_between"].to_numpy(dtype=float)
    within = frame["sigma_within"].to_numpy(dtype=float)
    return LambdaEstimate(lam=lambda_from_sds(between, within), sigma_between=between, sigma_within=within)


def from_medians(frame: pd.DataFrame) -> LambdaEstimate:
    groups = {
        country: [ParamVector.from_array(row) for row in group[list(PARAM_NAMES)].to_numpy(dtype=float)]
        for country, group in frame.groupby("country", sort=False)
    }
    return empirical_lambda(groups)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description="Between/within variance ratios for the hierarchical prior")
    source = p.add_mutually_exclusive_group()
    source.add_argument("--sds", help="CSV with columns parameter,sigma_between,sigma_within")
    source.add_argument("--medians", help="CSV with a country column and one column per parameter")
    p.add_argument("--out", help="Write the table as CSV instead of printing it")
    args = p.parse_args(argv)

    if args.sds:
        estimate = from_sd_table(pd.read_csv(args.sds))
    elif args.medians:
        estimate = from_medians(pd.read_csv(args.medians))
    else:
        estimate = LambdaEstimate(
            lam=lambda_from_sds(DEFAULT_SIGMA_BETWEEN, DEFAULT_SIGMA_WITHIN),
            sigma_between=np.array(DEFAULT_SIGMA_BETWEEN),
            sigma_within=np.array(DEFAULT_SIGMA_WITHIN),
        )

    table = estimate.to_frame()
    if args.out:
        table.to_csv(args.out, index=False)
        print(f"Wrote lambda table to {args.out}")
    else:
        print(table.to_string(index=False, float_format=lambda v: f"{v:.4g}"))
        print("lambda =", ",".join(f"{v:.2f}" for v in estimate.lam))
    return 0


if __name__ == "__main__":
    sys.exit(main())
