"""Train/test splitting, quality metrics, virtual travel times and the
multi-run experiment driver.

Speed accuracy is scored by the mean absolute inverse-speed error over the
gridded test cells of loop and probe data; travel-time accuracy by the mean
absolute relative error between measured travel times and virtual
trajectories driven through the estimate.  Runs, algorithms and sensor
combinations are independent jobs; rows are keyed and sorted before output so
results do not depend on execution order or thread count.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .asm import reconstruct_asm
from .btweight import bt_weight_field
from .grid import (
    DomainError,
    GridSpec,
    NoDataError,
    SpeedField,
    imae_to_min_per_km,
)
from .ingest import SensorData, combine_cellwise, grid_bt, grid_fcd, grid_loop
from .params import ReconstructionParams
from .psm import reconstruct_psm, reconstruct_psm_w
from .secavg import reconstruct_secavg_from_data

log = logging.getLogger(__name__)

ALGORITHMS = ("secavg", "asm", "psm", "psmw")
SOURCES = ("LOOP", "FCD", "BT")
ALL_COMBINATIONS = (
    "LOOP",
    "FCD",
    "BT",
    "LOOP+FCD",
    "LOOP+BT",
    "FCD+BT",
    "LOOP+FCD+BT",
)


def threads_from_env(default: int | None = None) -> int:
    """Worker cap from TRAFUSION_THREADS (defaults to the CPU count)."""
    raw = os.environ.get("TRAFUSION_THREADS", "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring non-integer TRAFUSION_THREADS=%r", raw)
    if default is not None:
        return default
    return max(1, os.cpu_count() or 1)


@dataclass(frozen=True)
class DataSplit:
    train: SensorData
    test: SensorData
    seed: int


@dataclass(frozen=True)
class ExperimentResult:
    algorithm: str
    sensors: str
    run: int
    imae: float  # s/m
    mape: float  # dimensionless
    runtime: float  # s
    flags: str = ""

    @property
    def imae_min_per_km(self) -> float:
        return imae_to_min_per_km(self.imae)


def _split_units(units, ratio, rng):
    n = len(units)
    n_train = int(np.floor(n * ratio + 0.5))
    order = rng.permutation(n)
    train_idx = set(order[:n_train].tolist())
    return train_idx


def split_train_test(data: SensorData, ratio: float = 0.5, seed: int = 0) -> DataSplit:
    """Randomly split each source, assigning whole detectors (loops) and whole
    traces (probe and travel-time data) to one side; reproducible per seed."""
    if not (0 < ratio < 1):
        raise DomainError(f"ratio must be in (0, 1), got {ratio}")
    rng = np.random.default_rng([seed, 0x5EED])

    detectors = sorted({r.detector_id for r in data.loops})
    if len(detectors) < 2 and detectors:
        log.warning("loop source has < 2 detectors, keeping all in train")
        train_loops, test_loops = data.loops, ()
    else:
        keep = _split_units(detectors, ratio, rng)
        in_train = {d for k, d in enumerate(detectors) if k in keep}
        train_loops = tuple(r for r in data.loops if r.detector_id in in_train)
        test_loops = tuple(r for r in data.loops if r.detector_id not in in_train)

    def split_by_trace(items):
        ids = sorted({it.trace_id for it in items})
        if len(ids) < 2 and ids:
            log.warning("source has < 2 traces, keeping all in train")
            return tuple(items), ()
        keep = _split_units(ids, ratio, rng)
        in_train = {t for k, t in enumerate(ids) if k in keep}
        return (
            tuple(it for it in items if it.trace_id in in_train),
            tuple(it for it in items if it.trace_id not in in_train),
        )

    train_fcd, test_fcd = split_by_trace(data.fcd)
    train_bt, test_bt = split_by_trace(data.bt)
    return DataSplit(
        train=SensorData(train_loops, train_fcd, train_bt),
        test=SensorData(test_loops, test_fcd, test_bt),
        seed=seed,
    )


def gridded_test_cells(test: SensorData, spec: GridSpec):
    """Gridded test cells of probe and loop data as (rows, cols, speeds)."""
    ii_all, jj_all, vv_all = [], [], []
    for f in (grid_loop(test.loops, spec), grid_fcd(test.fcd, spec)):
        ii, jj, vv = f.data_cells()
        ii_all.append(ii)
        jj_all.append(jj)
        vv_all.append(vv)
    return (
        np.concatenate(ii_all),
        np.concatenate(jj_all),
        np.concatenate(vv_all),
    )


def _check_filled(estimate: SpeedField):
    if not np.all(np.isfinite(estimate.values)) or np.any(estimate.values <= 0):
        raise DomainError("estimate must be fully filled with positive speeds")


def imae(estimate: SpeedField, test_cells) -> float:
    """Mean absolute inverse-speed error (s/m) over the test cells."""
    _check_filled(estimate)
    ii, jj, vv = test_cells
    ii = np.asarray(ii, dtype=np.int64)
    jj = np.asarray(jj, dtype=np.int64)
    vv = np.asarray(vv, dtype=float)
    if vv.size == 0:
        raise NoDataError("imae needs a non-empty test set")
    est = estimate.values[ii, jj]
    return float(np.mean(np.abs(1.0 / vv - 1.0 / est)))


class TrajectoryResult(NamedTuple):
    t_end: float
    extrapolated: bool


def virtual_trajectory(
    estimate: SpeedField, t_start: float, x_start: float, x_end: float
) -> TrajectoryResult:
    """Drive a virtual vehicle through the piecewise-constant estimate.

    Event-driven stepping (advance to the nearest cell boundary, switch
    speed) is exact for piecewise-constant fields.  If the vehicle is still
    en route past the grid's last time column, that column's speeds are held
    and the result flagged as extrapolated.
    """
    spec = estimate.spec
    if not (x_end > x_start):
        raise DomainError("virtual_trajectory needs x_end > x_start")
    if not (spec.x_min <= x_start and x_end <= spec.x_min + spec.n_x * spec.dx):
        raise DomainError("trajectory endpoints outside the spatial domain")
    if not (spec.t_min <= t_start):
        raise DomainError("start time before the domain")
    _check_filled(estimate)
    i = min(int((x_start - spec.x_min) // spec.dx), spec.n_x - 1)
    j = min(int((t_start - spec.t_min) // spec.dt), spec.n_t - 1)
    t_end, _, _, _ = _kernels.step_to_pos(
        estimate.values, spec.x_min, spec.dx, spec.t_min, spec.dt,
        t_start, x_start, i, j, x_end,
    )
    t_edge = spec.t_min + spec.n_t * spec.dt
    return TrajectoryResult(float(t_end), bool(t_end > t_edge))


def mape(estimate: SpeedField, bt_test, include_extrapolated: bool = True) -> float:
    """Mean absolute relative error of virtual vs measured travel times."""
    samples = list(bt_test)
    if not samples:
        raise NoDataError("mape needs a non-empty test set")
    errors = []
    n_extrapolated = 0
    for s in samples:
        res = virtual_trajectory(estimate, s.t_start, s.x_start, s.x_end)
        if res.extrapolated:
            n_extrapolated += 1
            if not include_extrapolated:
                continue
        vtt = res.t_end - s.t_start
        errors.append(abs(vtt - s.travel_time) / s.travel_time)
    if n_extrapolated:
        log.debug("mape: %d trajectories needed extrapolation past t_max", n_extrapolated)
    if not errors:
        raise NoDataError("mape: all test trajectories were excluded")
    return float(np.mean(errors))


def combination_sources(combo: str) -> tuple[str, ...]:
    parts = tuple(combo.split("+"))
    for p in parts:
        if p not in SOURCES:
            raise DomainError(f"unknown sensor source {p!r} in combination {combo!r}")
    return parts


@dataclass(frozen=True)
class _RunContext:
    """Per-run gridded training fields, shared across algorithms/combos."""

    split: DataSplit
    fields: dict
    bt_weights: np.ndarray
    test_cells: tuple
    spec: GridSpec


def _build_run_context(data: SensorData, spec: GridSpec, params, run_seed: int) -> _RunContext:
    split = split_train_test(data, 0.5, seed=run_seed)
    fields = {
        "LOOP": grid_loop(split.train.loops, spec),
        "FCD": grid_fcd(split.train.fcd, spec),
        "BT": grid_bt(split.train.bt, spec),
    }
    bt_w = bt_weight_field(split.train.bt, spec, params.bt)
    return _RunContext(split, fields, bt_w, gridded_test_cells(split.test, spec), spec)


def reconstruct(
    algorithm: str,
    sources: tuple[str, ...],
    ctx: _RunContext,
    params: ReconstructionParams,
) -> SpeedField:
    """Run one algorithm on the training data of the selected sources."""
    if algorithm == "secavg":
        return reconstruct_secavg_from_data(
            ctx.split.train, ctx.spec, params.secavg_fill_speed, sources
        )
    fields = [ctx.fields[s] for s in sources]
    if algorithm == "asm":
        return reconstruct_asm(combine_cellwise(fields), params)
    if algorithm == "psm":
        return reconstruct_psm(combine_cellwise(fields), params)
    if algorithm == "psmw":
        empty = SpeedField.empty(ctx.spec)
        loop_f = ctx.fields["LOOP"] if "LOOP" in sources else empty
        fcd_f = ctx.fields["FCD"] if "FCD" in sources else empty
        bt_f = ctx.fields["BT"] if "BT" in sources else empty
        bt_w = ctx.bt_weights if "BT" in sources else np.zeros(ctx.spec.shape)
        return reconstruct_psm_w(loop_f, fcd_f, bt_f, bt_w, params)
    raise DomainError(f"unknown algorithm {algorithm!r}")


def _run_one(data, spec, params, algorithms, combinations, run, run_seed):
    ctx = _build_run_context(data, spec, params, run_seed)
    rows = []
    for combo in combinations:
        sources = combination_sources(combo)
        psm_row = None
        for algo in algorithms:
            flags = []
            if algo == "psmw" and "BT" not in sources:
                # without travel-time data the weighted variant coincides
                # bit-for-bit with the plain phase-based result
                flags.append("psmw_without_bt")
                if psm_row is not None:
                    rows.append(
                        ExperimentResult(
                            algo, combo, run, psm_row.imae, psm_row.mape,
                            psm_row.runtime, ";".join(flags),
                        )
                    )
                    continue
            t0 = time.perf_counter()
            try:
                est = reconstruct(algo, sources, ctx, params)
                row_imae = imae(est, ctx.test_cells)
                row_mape = mape(est, ctx.split.test.bt) if ctx.split.test.bt else float("nan")
            except Exception as exc:  # noqa: BLE001 - job failures become rows
                log.warning("run %d %s/%s failed: %s", run, algo, combo, exc)
                rows.append(
                    ExperimentResult(
                        algo, combo, run, float("nan"), float("nan"),
                        time.perf_counter() - t0, f"failed:{type(exc).__name__}",
                    )
                )
                continue
            row = ExperimentResult(
                algo, combo, run, row_imae, row_mape,
                time.perf_counter() - t0, ";".join(flags),
            )
            if algo == "psm":
                psm_row = row
            rows.append(row)
    return rows


def run_experiment(
    data: SensorData,
    spec: GridSpec,
    params: ReconstructionParams = None,
    algorithms=ALGORITHMS,
    combinations=None,
    n_runs: int = 50,
    seed: int = 0,
    threads: int | None = None,
) -> list[ExperimentResult]:
    """Repeatedly split, reconstruct and score every (algorithm, combination).

    A fresh random split is drawn each run from per-run seeds derived from
    ``seed``.  Jobs are pure, so runs execute on a thread pool; the output is
    sorted by (run, combination, algorithm) and is a deterministic function of
    (data, configuration, seed) regardless of thread count.
    """
    if params is None:
        params = ReconstructionParams()
    if n_runs < 1:
        raise DomainError("n_runs must be >= 1")
    available = tuple(
        s for s, have in zip(SOURCES, (data.loops, data.fcd, data.bt)) if have
    )
    if combinations is None:
        combinations = tuple(
            c for c in ALL_COMBINATIONS
            if all(s in available for s in combination_sources(c))
        )
    if not combinations:
        raise NoDataError("no sensor combination has data")
    run_seeds = np.random.SeedSequence(seed).generate_state(n_runs)
    n_workers = threads if threads is not None else threads_from_env()
    if n_workers > 1 and n_runs > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            futures = [
                pool.submit(
                    _run_one, data, spec, params, algorithms, combinations,
                    run, int(run_seeds[run]),
                )
                for run in range(n_runs)
            ]
            per_run = [f.result() for f in futures]
    else:
        per_run = [
            _run_one(data, spec, params, algorithms, combinations, run, int(run_seeds[run]))
            for run in range(n_runs)
        ]
    rows = [r for chunk in per_run for r in chunk]
    combo_order = {c: k for k, c in enumerate(combinations)}
    algo_order = {a: k for k, a in enumerate(algorithms)}
    rows.sort(key=lambda r: (r.run, combo_order[r.sensors], algo_order[r.algorithm]))
    return rows


def aggregate_results(rows) -> list[dict]:
    """Mean and standard deviation per (algorithm, sensors) over the runs."""
    groups: dict[tuple[str, str], list[ExperimentResult]] = {}
    order = []
    for r in rows:
        key = (r.algorithm, r.sensors)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(r)
    out = []
    for key in order:
        chunk = [r for r in groups[key] if not np.isnan(r.imae)]
        if not chunk:
            continue
        imaes = np.array([r.imae for r in chunk])
        mapes = np.array([r.mape for r in chunk])
        times = np.array([r.runtime for r in chunk])
        for stat, reducer in (("mean", np.mean), ("std", np.std)):
            out.append(
                {
                    "algorithm": key[0],
                    "sensors": key[1],
                    "stat": stat,
                    "n_runs": len(chunk),
                    "imae_min_per_km": imae_to_min_per_km(float(reducer(imaes))),
                    "mape": float(reducer(mapes)) if not np.all(np.isnan(mapes)) else float("nan"),
                    "runtime_s": float(reducer(times)),
                }
            )
    return out
