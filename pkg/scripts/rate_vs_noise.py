"""Mean noisy errors of the comparison scenario at several sampling rates.

The noise is per-sample white, so the mean errors depend on the rate; this
sweep shows how far the 1 kHz defaults sit from a coarser-rate setup.
"""

import argparse
import sys
from dataclasses import replace

import numpy as np

from velaid.bench import load_config, run_scenario


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config")
    p.add_argument("--dts", type=float, nargs="+", default=[1e-3, 2e-3, 5e-3])
    p.add_argument("--seeds", type=int, default=3)
    args = p.parse_args(argv)
    cfg = load_config(args.config)
    for dt in args.dts:
        c = replace(cfg, trajectory=replace(cfg.trajectory, dt=dt))
        reps = [run_scenario(replace(c, seed=s)).report for s in range(args.seeds)]
        tilt = {n: np.mean([r.tilt[n] for r in reps]) for n in reps[0].tilt}
        print(f"dt={dt:g}: " + " ".join(f"{k}={v:.4f}" for k, v in tilt.items()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
