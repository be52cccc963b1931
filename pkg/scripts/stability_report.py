"""Print the stability property suite for a scenario (default: the truth config)."""

import argparse
import sys
from pathlib import Path

from velaid.bench import load_config
from velaid.suite import run_suite

HERE = Path(__file__).resolve().parent


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("config", nargs="?", default=str(HERE / "configs" / "truth.json"))
    p.add_argument("--inits", type=int, default=10)
    args = p.parse_args(argv)
    rep = run_suite(load_config(args.config), n_inits=args.inits)
    print(rep.format())
    return 0 if rep.passed else 2


if __name__ == "__main__":
    sys.exit(main())
