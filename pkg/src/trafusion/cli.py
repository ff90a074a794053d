"""Command-line interface: synthesize scenarios, reconstruct fields, run the
evaluation sweep.

Exit codes: 0 success, 1 usage error, 2 data error.  Every command is
deterministic given its inputs, flags and seed; TRAFUSION_THREADS caps worker
parallelism of the evaluation sweep.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as tio
from .evaluate import (
    ALGORITHMS,
    aggregate_results,
    combination_sources,
    reconstruct,
    run_experiment,
    threads_from_env,
)
from .grid import DomainError, GridSpec, NoDataError
from .ingest import SensorData
from .params import ReconstructionParams
from .scenario import desk_default, paper_scale, synthesize

log = logging.getLogger("trafusion")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with 2; usage errors are 1
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_sensor_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input-loops", metavar="CSV", help="loop detector records")
    p.add_argument("--input-fcd", metavar="CSV", help="probe-vehicle traces")
    p.add_argument("--input-bt", metavar="CSV", help="travel-time samples")
    p.add_argument("--grid", metavar="XMIN,XMAX,TMIN,TMAX[,DX,DT]",
                   help="grid extents; derived from the data when omitted")
    p.add_argument("--params", metavar="TOML", help="reconstruction parameters")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trafusion",
                     description="Traffic speed-field and travel-time reconstruction")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic scenario")
    p_synth.add_argument("--config", metavar="TOML", help="scenario description")
    p_synth.add_argument("--preset", choices=["desk", "paper-scale"], default="desk",
                         help="built-in scenario when no config is given")
    p_synth.add_argument("--out-dir", required=True)
    p_synth.add_argument("--seed", type=int, default=0)

    p_rec = sub.add_parser("reconstruct", help="reconstruct one speed field")
    _add_sensor_inputs(p_rec)
    p_rec.add_argument("--algorithm", required=True, choices=list(ALGORITHMS))
    p_rec.add_argument("--out", required=True, metavar="CSV",
                       help="estimate dump; weights go to *_weights.csv")

    p_eval = sub.add_parser("evaluate", help="run the multi-run evaluation sweep")
    _add_sensor_inputs(p_eval)
    p_eval.add_argument("--algorithms", default=",".join(ALGORITHMS),
                        help="comma-separated subset of secavg,asm,psm,psmw")
    p_eval.add_argument("--combinations", default=None,
                        help="comma-separated sensor combinations, e.g. LOOP+FCD,BT")
    p_eval.add_argument("--runs", type=int, default=50)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out-dir", required=True)
    p_eval.add_argument("--format", choices=["csv", "json"], default="csv")
    return parser


def _parse_grid(arg: str) -> GridSpec:
    parts = [float(p) for p in arg.split(",")]
    if len(parts) == 4:
        return GridSpec(parts[0], parts[1], parts[2], parts[3])
    if len(parts) == 6:
        return GridSpec(parts[0], parts[1], parts[2], parts[3], parts[4], parts[5])
    raise DomainError("--grid needs 4 or 6 comma-separated numbers")


def domain_from_data(data: SensorData, dx: float = 100.0, dt: float = 60.0) -> GridSpec:
    """Smallest dx/dt-aligned grid covering every measurement."""
    xs, ts = [], []
    for r in data.loops:
        xs.append(r.position)
        ts += [r.timestamp, r.timestamp + dt]
    for tr in data.fcd:
        xs += [float(tr.positions.min()), float(tr.positions.max())]
        ts += [float(tr.times.min()), float(tr.times.max())]
    for s in data.bt:
        xs += [s.x_start, s.x_end]
        ts += [s.t_start, s.t_end]
    if not xs or not ts:
        raise NoDataError("cannot derive a grid from empty data")
    x_lo = np.floor(min(xs) / dx) * dx
    x_hi = np.ceil(max(xs) / dx) * dx
    t_lo = np.floor(min(ts) / dt) * dt
    t_hi = np.ceil(max(ts) / dt) * dt
    if x_hi <= x_lo:
        x_hi = x_lo + dx
    if t_hi <= t_lo:
        t_hi = t_lo + dt
    return GridSpec(x_lo, x_hi, t_lo, t_hi, dx, dt)


def _load_inputs(args) -> tuple[SensorData, GridSpec, ReconstructionParams]:
    data = tio.read_sensor_data(args.input_loops, args.input_fcd, args.input_bt)
    if not (data.loops or data.fcd or data.bt):
        raise NoDataError("no input data: pass at least one of --input-loops/--input-fcd/--input-bt")
    params = tio.load_params(args.params) if args.params else ReconstructionParams()
    spec = _parse_grid(args.grid) if args.grid else domain_from_data(data)
    return data, spec, params


def cmd_synth(args) -> int:
    if args.config:
        cfg = tio.load_scenario(args.config)
    else:
        cfg = desk_default() if args.preset == "desk" else paper_scale()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    truth, data = synthesize(cfg, args.seed)
    tio.write_loops_csv(out / "loops.csv", data.loops)
    tio.write_fcd_csv(out / "fcd.csv", data.fcd)
    tio.write_bt_csv(out / "bt.csv", data.bt)
    tio.write_field_csv(out / "truth.csv", truth)
    tio.dump_scenario(out / "scenario.toml", cfg)
    log.info(
        "synthesized %d loop records, %d traces, %d travel-time samples into %s",
        len(data.loops), len(data.fcd), len(data.bt), out,
    )
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    data, spec, params = _load_inputs(args)
    sources = tuple(
        s for s, have in (("LOOP", data.loops), ("FCD", data.fcd), ("BT", data.bt)) if have
    )
    if args.algorithm == "psmw" and "BT" not in sources:
        log.warning("psmw without travel-time input falls back to psm")
    ctx = _build_run_context_full(data, spec, params)
    est = reconstruct(args.algorithm, sources, ctx, params)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tio.write_field_csv(out, est)
    tio.write_field_csv(out.with_name(out.stem + "_weights" + out.suffix), est, kind="weight")
    log.info("wrote %s", out)
    return EXIT_OK


def _build_run_context_full(data, spec, params):
    """Run context that trains on the full dataset (no split)."""
    from .btweight import bt_weight_field
    from .evaluate import DataSplit, _RunContext
    from .ingest import grid_bt, grid_fcd, grid_loop

    split = DataSplit(train=data, test=SensorData(), seed=0)
    fields = {
        "LOOP": grid_loop(data.loops, spec),
        "FCD": grid_fcd(data.fcd, spec),
        "BT": grid_bt(data.bt, spec),
    }
    bt_w = bt_weight_field(data.bt, spec, params.bt)
    return _RunContext(split, fields, bt_w, (), spec)


def cmd_evaluate(args) -> int:
    data, spec, params = _load_inputs(args)
    algorithms = tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
    for a in algorithms:
        if a not in ALGORITHMS:
            raise DomainError(f"unknown algorithm {a!r}")
    combos = None
    if args.combinations:
        combos = tuple(c.strip() for c in args.combinations.split(",") if c.strip())
        for c in combos:
            combination_sources(c)
    rows = run_experiment(
        data, spec, params,
        algorithms=algorithms,
        combinations=combos,
        n_runs=args.runs,
        seed=args.seed,
        threads=threads_from_env(),
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    aggs = aggregate_results(rows)
    means = [a for a in aggs if a["stat"] == "mean"]

    def best_rows(group_key, other_key):
        keys = []
        for a in means:
            if a[group_key] not in keys:
                keys.append(a[group_key])
        table = []
        for key in keys:
            sub = [a for a in means if a[group_key] == key]
            by_imae = min(sub, key=lambda a: a["imae_min_per_km"])
            valid_mape = [a for a in sub if not np.isnan(a["mape"])]
            by_mape = min(valid_mape, key=lambda a: a["mape"]) if valid_mape else by_imae
            table.append(
                (key, by_imae[other_key], by_imae["imae_min_per_km"],
                 by_mape[other_key], by_mape["mape"])
            )
        return table

    if args.format == "csv":
        tio.write_results_csv(out / "results.csv", rows)
        tio.write_aggregate_csv(out / "aggregate.csv", aggs)
        tio.write_summary_csv(out / "best_per_combination.csv",
                              best_rows("sensors", "algorithm"), "sensors")
        tio.write_summary_csv(out / "best_per_algorithm.csv",
                              best_rows("algorithm", "sensors"), "algorithm")
    else:
        tio.write_results_json(out / "results.json", rows)
        tio.write_aggregate_json(out / "aggregate.json", aggs)
    n_failed = sum(1 for r in rows if r.flags.startswith("failed"))
    if n_failed == len(rows):
        raise NoDataError("every evaluation job failed")
    if n_failed:
        log.warning("%d of %d jobs failed; see the flags column", n_failed, len(rows))
    log.info("wrote result tables to %s", out)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "reconstruct":
            return cmd_reconstruct(args)
        if args.command == "evaluate":
            return cmd_evaluate(args)
    except (DomainError, NoDataError, tio.ConfigError, FileNotFoundError) as exc:
        print(f"trafusion: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
