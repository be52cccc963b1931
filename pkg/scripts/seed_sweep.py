"""Run a scenario over several noise seeds and tabulate the mean errors.

    python3 scripts/seed_sweep.py scripts/configs/comparison.json --seeds 10
    python3 scripts/seed_sweep.py scripts/configs/order.json --seeds 10 --out order.csv
"""

import argparse
import csv
import math
import sys
import time
from dataclasses import replace

import numpy as np

from velaid.bench import load_config, run_scenario


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config")
    p.add_argument("--seeds", type=int, default=10, help="seeds 0 .. N-1")
    p.add_argument("--out", default=None, help="per-seed rows as CSV")
    args = p.parse_args(argv)

    cfg = load_config(args.config)
    rows = []
    t0 = time.perf_counter()
    for s in range(args.seeds):
        for r in run_scenario(replace(cfg, seed=s)).report.rows:
            rows.append((s, r.estimator, r.mean_tilt_angle_rad, r.mean_yaw_proxy_rad))
    elapsed = time.perf_counter() - t0

    names = list(dict.fromkeys(r[1] for r in rows))
    print(f"{'estimator':<16} {'tilt mean':>10} {'tilt std':>9} {'yaw mean':>10} {'yaw std':>9}")
    for n in names:
        tilt = np.array([r[2] for r in rows if r[1] == n])
        yaw = np.array([r[3] for r in rows if r[1] == n])
        ys = "" if np.isnan(yaw).all() else f"{yaw.mean():>10.4f} {yaw.std():>9.4f}"
        print(f"{n:<16} {tilt.mean():>10.4f} {tilt.std():>9.4f} {ys}")
    print(f"{args.seeds} seeds in {elapsed:.1f} s")

    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["seed", "estimator", "mean_tilt_angle_rad", "mean_yaw_proxy_rad"])
            for s, n, t, y in rows:
                w.writerow([s, n, "%.17g" % t, "" if math.isnan(y) else "%.17g" % y])
    return 0


if __name__ == "__main__":
    sys.exit(main())
