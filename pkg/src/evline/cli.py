"""Command-line entry points: synth-sweep, estimate, compare, export-synth."""

import argparse
import sys

from .clustering import ClusteringParams
from .errors import EvlineError
from .linefit import LineFitParams
from .pipeline import estimate_from_files, write_reports_csv
from .sweep import (SweepConfig, VARIABLES, compare_methods,
                    read_records_csv, run_sweep, write_records_csv,
                    write_summary_csv)
from .synth import export_synth


def _add_synth_sweep(sub):
    p = sub.add_parser(
        "synth-sweep",
        help="run a synthetic disturbance sweep and write trial records")
    p.add_argument("--variable", required=True, choices=VARIABLES)
    p.add_argument("--out", required=True, help="trial records CSV path")
    p.add_argument("--summary-out", help="per-grid-point summary CSV path")
    p.add_argument("--grid", type=float, nargs="+",
                   help="grid values (default: the standard grid)")
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-events", type=int, default=5000)
    p.add_argument("--no-refine", action="store_true",
                   help="skip the CELC+opt method")
    p.add_argument("--no-ce3lc", action="store_true",
                   help="skip the CE3LC baseline")
    p.add_argument("--sample-size", type=int, default=1000,
                   help="solver row subsample size (0 = use all rows)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timing", action="store_true",
                   help="include the wall_time column (breaks "
                        "byte-for-byte reproducibility of the CSV)")
    p.set_defaults(func=_cmd_synth_sweep)


def _cmd_synth_sweep(args):
    cfg = SweepConfig(
        variable=args.variable, grid=args.grid, trials=args.trials,
        seed=args.seed, n_events=args.n_events,
        refine=not args.no_refine, ce3lc=not args.no_ce3lc,
        sample_size=args.sample_size or None, workers=args.workers)
    records, summaries = run_sweep(cfg)
    write_records_csv(args.out, records, timing=args.timing)
    if args.summary_out:
        write_summary_csv(args.summary_out, summaries)
    n_deg = sum(r.degenerate for r in records)
    print(f"{len(records)} records ({n_deg} degenerate) -> {args.out}")
    return 0


def _add_estimate(sub):
    p = sub.add_parser(
        "estimate",
        help="estimate per-window velocity directions from event, gyro "
             "and calibration files")
    p.add_argument("--events", required=True, help="event file (t x y p)")
    p.add_argument("--gyro", required=True, help="gyro file (t wx wy wz)")
    p.add_argument("--calib", required=True, help="calibration YAML")
    p.add_argument("--out", required=True, help="window report CSV path")
    p.add_argument("--window-size", type=int, default=30000,
                   help="events per window")
    p.add_argument("--time-scale", type=float,
                   help="seconds-to-pixels scale c (default: auto)")
    p.add_argument("--neighbor-radius", type=float, default=5.0)
    p.add_argument("--plane-dist-thresh", type=float, default=2.0)
    p.add_argument("--normal-angle-thresh", type=float, default=0.2)
    p.add_argument("--min-cluster-size", type=int, default=200)
    p.add_argument("--split-by-polarity", action="store_true")
    p.add_argument("--subwindow-len", type=float, default=0.005,
                   help="boundary line-fit sub-window length (s)")
    p.add_argument("--huber-k", type=float, default=1.345,
                   help="line-fit Huber threshold (px)")
    p.add_argument("--refine", action="store_true",
                   help="nonlinearly refine each window's estimate")
    p.add_argument("--sample-size", type=int, default=1000,
                   help="solver row subsample size (0 = use all rows)")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for the solver row subsample")
    p.set_defaults(func=_cmd_estimate)


def _cmd_estimate(args):
    clustering = ClusteringParams(
        window_size=args.window_size, c=args.time_scale,
        neighbor_radius=args.neighbor_radius,
        plane_dist_thresh=args.plane_dist_thresh,
        normal_angle_thresh=args.normal_angle_thresh,
        min_cluster_size=args.min_cluster_size,
        split_by_polarity=args.split_by_polarity)
    line_params = LineFitParams(window_len=args.subwindow_len,
                                huber_k=args.huber_k)
    reports = estimate_from_files(
        args.events, args.gyro, args.calib, clustering=clustering,
        line_params=line_params, refine=args.refine,
        sample_size=args.sample_size or None, solver_seed=args.seed)
    write_reports_csv(args.out, reports)
    n_ok = sum(not r.skip_reason for r in reports)
    print(f"{len(reports)} windows ({n_ok} estimated, "
          f"{len(reports) - n_ok} skipped) -> {args.out}")
    return 0


def _add_compare(sub):
    p = sub.add_parser(
        "compare",
        help="summarize per-method errors from sweep record CSVs")
    p.add_argument("records", nargs="+", help="trial record CSV path(s)")
    p.set_defaults(func=_cmd_compare)


def _cmd_compare(args):
    records = []
    for path in args.records:
        records.extend(read_records_csv(path))
    table = compare_methods(records)
    width = max(len(m) for m in table)
    print(f"{'method':<{width}}  {'n':>6}  {'eps_median':>11} "
          f"{'eps_mean':>11}  {'phi_median':>11} {'phi_mean':>11}")
    for method, row in table.items():
        print(f"{method:<{width}}  {row['n']:>6}  "
              f"{row['eps_median']:>11.6f} {row['eps_mean']:>11.6f}  "
              f"{row['phi_median']:>11.6f} {row['phi_mean']:>11.6f}")
    return 0


def _add_export_synth(sub):
    p = sub.add_parser(
        "export-synth",
        help="generate a synthetic scenario and write it in the "
             "event/gyro/calibration file formats")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-lines", type=int, default=5)
    p.add_argument("--n-events", type=int, default=30000)
    p.add_argument("--duration", type=float, default=0.5)
    p.add_argument("--omega", type=float, nargs=3, default=[0.0, 0.0, 2.0],
                   metavar=("WX", "WY", "WZ"))
    p.add_argument("--v", type=float, nargs=3, default=[1.0, 2.0, 0.0],
                   metavar=("VX", "VY", "VZ"))
    p.add_argument("--event-sigma", type=float, default=0.0,
                   help="pixel noise added before integer rounding")
    p.add_argument("--gyro-rate", type=float, default=200.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_export_synth)


def _cmd_export_synth(args):
    out = export_synth(
        args.out_dir, n_lines=args.n_lines, n_events=args.n_events,
        duration=args.duration, omega=args.omega, v=args.v,
        event_sigma=args.event_sigma, seed=args.seed,
        gyro_rate=args.gyro_rate)
    for kind, path in out["paths"].items():
        print(f"{kind}: {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="evline",
        description="Event-camera linear velocity estimation from line "
                    "clusters with known angular velocity.")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_synth_sweep(sub)
    _add_estimate(sub)
    _add_compare(sub)
    _add_export_synth(sub)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (EvlineError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
