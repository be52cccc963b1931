"""``velaid`` command line.

Exit codes: 0 on success, 1 on configuration or input errors, 2 when the
stability suite reports a failed check. ``VELAID_SEED`` overrides the
scenario seed unless ``--seed`` is given.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .bench import (
    SEED_ENV,
    ScenarioConfig,
    compare_reports,
    format_report,
    load_config,
    read_report,
    resolve_seed,
    run_scenario,
    save_config,
    simulate,
    write_report,
)
from .errors import ConfigError, RunRecordFormatError
from .record import RunRecord, record_run

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SUITE = 2

PLOT_STUB = '''"""Plot the traces of a velaid run (generated; edit freely)."""

import sys

import matplotlib.pyplot as plt

from velaid.record import replay_run

rr = replay_run(sys.argv[1] if len(sys.argv) > 1 else "{run}")
fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True)
for est in rr.estimators():
    ax1.semilogy(rr.t, rr[est + ".tilt_angle"][:, 0], label=est)
    if est + ".yaw_angle" in rr.blocks:
        ax2.plot(rr.t, rr[est + ".yaw_angle"][:, 0], label=est)
ax1.set_ylabel("tilt error [rad]")
ax2.set_ylabel("yaw proxy error [rad]")
ax2.set_xlabel("t [s]")
ax1.legend()
plt.show()
'''


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config)
    return resolve_seed(cfg, args.seed)


def _outdir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"{out}: cannot create output directory ({exc.strerror or exc})") from None
    return out


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = _outdir(args.out)
    traj, series = simulate(cfg)
    record_run(RunRecord.from_run(traj, series), out / "run.csv")
    save_config(cfg, out / "config.json")
    print(f"wrote {len(traj)} samples to {out / 'run.csv'} (seed {cfg.seed})")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args)
    out = _outdir(args.out)
    res = run_scenario(cfg)
    record_run(res.record(), out / "run.csv")
    write_report(res.report, out / "report.csv")
    save_config(cfg, out / "config.json")
    (out / "plot_traces.py").write_text(PLOT_STUB.format(run=(out / "run.csv").as_posix()), encoding="utf-8")
    print(format_report(res.report))
    print(f"seed {cfg.seed}, window [{cfg.metrics_window[0]}, {cfg.metrics_window[1]}] s; outputs in {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    reports = [read_report(p) for p in args.reports]
    ranked = compare_reports(reports, [str(p) for p in args.reports])
    w = csv.writer(sys.stdout, lineterminator="\n")
    header = ["rank", "report", "estimator", "mean_tilt_angle_rad", "mean_yaw_proxy_rad"]
    rows = [
        [i + 1, lab, r.estimator, "%.6g" % r.mean_tilt_angle_rad, "%.6g" % r.mean_yaw_proxy_rad]
        for i, (lab, r) in enumerate(ranked)
    ]
    w.writerow(header)
    w.writerows(rows)
    if args.out:
        with Path(args.out).open("w", newline="", encoding="utf-8") as fh:
            fw = csv.writer(fh, lineterminator="\n")
            fw.writerow(header)
            fw.writerows(rows)
    return EXIT_OK


def cmd_stability_check(args) -> int:
    from .suite import run_suite

    cfg = _load(args)
    rep = run_suite(cfg, n_inits=args.inits)
    print(rep.format())
    return EXIT_OK if rep.passed else EXIT_SUITE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="velaid", description="Velocity-aided attitude observer benchmark.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", required=True, help="scenario JSON file")
        sp.add_argument("--seed", type=int, default=None, help=f"noise seed (overrides {SEED_ENV} and the config)")

    sp = sub.add_parser("simulate", help="write ground truth and measurements")
    with_config(sp)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("run", help="run the estimator bank and write traces plus a report")
    with_config(sp)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare", help="rank estimators across reports")
    sp.add_argument("reports", nargs="+", help="report.csv files")
    sp.add_argument("--out", default=None, help="also write the ranking as CSV")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("stability-check", help="run the stability property suite")
    with_config(sp)
    sp.add_argument("--inits", type=int, default=10, help="random initializations per estimator")
    sp.set_defaults(func=cmd_stability_check)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, RunRecordFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
