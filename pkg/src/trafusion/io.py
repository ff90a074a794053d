"""File formats: sensor CSVs, field dumps, result tables and TOML configs.

Sensor CSVs carry a header row, UTF-8, '.' decimal separator.  Field dumps
are a plain CSV matrix (rows = space cells ascending, cols = time cells
ascending) behind a 4-line metadata header, so any plotting tool can render
them as heatmaps.  All floats are written deterministically.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter version
    import tomli as tomllib

from .grid import KMH, DomainError, GridSpec, SpeedField, imae_to_min_per_km
from .ingest import BtSample, FcdTrace, LoopRecord, SensorData
from .params import BtWeightParams, ReconstructionParams
from .scenario import Bottleneck, MovingJam, NoiseModel, ScenarioConfig, SensorLayout


class ConfigError(ValueError):
    """Malformed or incomplete configuration file."""


def _f(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------- sensor CSVs

LOOPS_HEADER = ["detector_id", "position_m", "timestamp_s", "speed_mps"]
FCD_HEADER = ["trace_id", "timestamp_s", "position_m"]
BT_HEADER = ["trace_id", "x_start_m", "x_end_m", "t_start_s", "t_end_s"]


def write_loops_csv(path, records) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(LOOPS_HEADER)
        for r in records:
            w.writerow([r.detector_id, _f(r.position), _f(r.timestamp), _f(r.speed)])


def read_loops_csv(path) -> list[LoopRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader, LOOPS_HEADER, path)
        for row in reader:
            out.append(
                LoopRecord(
                    row["detector_id"],
                    float(row["position_m"]),
                    float(row["timestamp_s"]),
                    float(row["speed_mps"]),
                )
            )
    return out


def write_fcd_csv(path, traces) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(FCD_HEADER)
        for tr in traces:
            for t, x in zip(tr.times, tr.positions):
                w.writerow([tr.trace_id, _f(t), _f(x)])


def read_fcd_csv(path) -> list[FcdTrace]:
    samples: dict[str, list[tuple[float, float]]] = {}
    order = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader, FCD_HEADER, path)
        for row in reader:
            tid = row["trace_id"]
            if tid not in samples:
                samples[tid] = []
                order.append(tid)
            samples[tid].append((float(row["timestamp_s"]), float(row["position_m"])))
    traces = []
    for tid in order:
        pts = sorted(samples[tid])
        traces.append(
            FcdTrace(tid, np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))
        )
    return traces


def write_bt_csv(path, samples) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(BT_HEADER)
        for s in samples:
            w.writerow([s.trace_id, _f(s.x_start), _f(s.x_end), _f(s.t_start), _f(s.t_end)])


def read_bt_csv(path) -> list[BtSample]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader, BT_HEADER, path)
        for row in reader:
            out.append(
                BtSample(
                    row["trace_id"],
                    float(row["x_start_m"]),
                    float(row["x_end_m"]),
                    float(row["t_start_s"]),
                    float(row["t_end_s"]),
                )
            )
    return out


def _require_columns(reader: csv.DictReader, wanted, path) -> None:
    have = reader.fieldnames or []
    missing = [c for c in wanted if c not in have]
    if missing:
        raise DomainError(f"{path}: missing column(s) {', '.join(missing)}")


def read_sensor_data(loops_path=None, fcd_path=None, bt_path=None) -> SensorData:
    return SensorData(
        loops=tuple(read_loops_csv(loops_path)) if loops_path else (),
        fcd=tuple(read_fcd_csv(fcd_path)) if fcd_path else (),
        bt=tuple(read_bt_csv(bt_path)) if bt_path else (),
    )


# ---------------------------------------------------------------- field dumps


def write_field_csv(path, field: SpeedField, kind: str = "speed_mps") -> None:
    spec = field.spec
    data = field.values if kind == "speed_mps" else field.weights
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(
            f"# x_min_m={_f(spec.x_min)} x_max_m={_f(spec.x_max)} "
            f"t_min_s={_f(spec.t_min)} t_max_s={_f(spec.t_max)}\n"
        )
        fh.write(f"# dx_m={_f(spec.dx)}\n")
        fh.write(f"# dt_s={_f(spec.dt)}\n")
        fh.write(f"# units={kind} rows=space_cells_x_ascending cols=time_cells_t_ascending\n")
        for i in range(spec.n_x):
            fh.write(",".join(f"{v:.9g}" for v in data[i]) + "\n")


def read_field_csv(path, weights_path=None) -> SpeedField:
    meta = {}
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    if "=" in token:
                        key, val = token.split("=", 1)
                        meta[key] = val
                continue
            rows.append([float(v) for v in line.split(",")])
    try:
        spec = GridSpec(
            x_min=float(meta["x_min_m"]),
            x_max=float(meta["x_max_m"]),
            t_min=float(meta["t_min_s"]),
            t_max=float(meta["t_max_s"]),
            dx=float(meta["dx_m"]),
            dt=float(meta["dt_s"]),
        )
    except KeyError as exc:
        raise DomainError(f"{path}: field header lacks {exc.args[0]}") from None
    values = np.array(rows)
    if weights_path is not None:
        weights = read_field_csv_matrix(weights_path)
    else:
        weights = np.ones_like(values)
    return SpeedField(spec, values, weights)


def read_field_csv_matrix(path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                rows.append([float(v) for v in line.split(",")])
    return np.array(rows)


# --------------------------------------------------------------- result files


def write_results_csv(path, rows) -> None:
    """Per-run result table.

    The file is byte-reproducible for a fixed seed, so the runtime_s column
    is left empty here (wall-clock times are not reproducible); per-job
    timings are reported in aggregate.csv and the JSON output instead.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "sensors", "run", "imae_min_per_km", "mape", "runtime_s", "flags"])
        for r in rows:
            w.writerow(
                [
                    r.algorithm,
                    r.sensors,
                    r.run,
                    f"{imae_to_min_per_km(r.imae):.9g}",
                    f"{r.mape:.9g}",
                    "",
                    r.flags,
                ]
            )


def write_results_json(path, rows) -> None:
    payload = [
        {
            "algorithm": r.algorithm,
            "sensors": r.sensors,
            "run": r.run,
            "imae_min_per_km": imae_to_min_per_km(r.imae),
            "mape": r.mape,
            "runtime_s": r.runtime,
            "flags": r.flags,
        }
        for r in rows
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_aggregate_csv(path, aggregates) -> None:
    cols = ["algorithm", "sensors", "stat", "n_runs", "imae_min_per_km", "mape", "runtime_s"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for a in aggregates:
            w.writerow(
                [
                    a["algorithm"], a["sensors"], a["stat"], a["n_runs"],
                    f"{a['imae_min_per_km']:.9g}", f"{a['mape']:.9g}", f"{a['runtime_s']:.3f}",
                ]
            )


def write_aggregate_json(path, aggregates) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(aggregates, fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_summary_csv(path, rows, key_column: str) -> None:
    cols = [key_column, "best_imae_algorithm", "imae_min_per_km", "best_mape_algorithm", "mape"]
    if key_column == "algorithm":
        cols = [key_column, "best_imae_sensors", "imae_min_per_km", "best_mape_sensors", "mape"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow(
                [r[0], r[1], f"{r[2]:.9g}", r[3], f"{r[4]:.9g}"]
            )


# --------------------------------------------------------------- TOML configs


def _get(table: dict, dotted: str, *, required: bool = False, default=None):
    cur = table
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            if required:
                raise ConfigError(f"missing required config key: {dotted}")
            return default
        cur = cur[part]
    return cur


def load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_scenario(path) -> ScenarioConfig:
    """Scenario config from TOML; the [domain] block is mandatory, everything
    else falls back to the desk-scale defaults."""
    raw = load_toml(path)
    from .scenario import desk_default

    base = desk_default()
    spec = GridSpec(
        x_min=float(_get(raw, "domain.x_min_m", required=True)),
        x_max=float(_get(raw, "domain.x_max_m", required=True)),
        t_min=float(_get(raw, "domain.t_min_s", required=True)),
        t_max=float(_get(raw, "domain.t_max_s", required=True)),
        dx=float(_get(raw, "domain.dx_m", default=100.0)),
        dt=float(_get(raw, "domain.dt_s", default=60.0)),
    )
    bottlenecks = []
    for b in _get(raw, "traffic.bottlenecks", default=[]) or []:
        try:
            bottlenecks.append(
                Bottleneck(
                    location=float(b["location_m"]),
                    onset=float(b["onset_s"]),
                    duration=float(b["duration_s"]),
                    sync_speed=float(b["sync_speed_kmh"]) * KMH,
                    extent=float(b.get("extent_m", 1500.0)),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"traffic.bottlenecks entry lacks key {exc.args[0]}") from None
    jams = []
    for j in _get(raw, "traffic.moving_jams", default=[]) or []:
        try:
            jams.append(
                MovingJam(
                    origin=float(j["origin_m"]),
                    onset=float(j["onset_s"]),
                    width=float(j["width_m"]),
                    jam_speed=float(j["jam_speed_kmh"]) * KMH,
                    wave_speed=float(j.get("wave_speed_kmh", -15.0)) * KMH,
                    until=float(j.get("until_s", np.inf)),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"traffic.moving_jams entry lacks key {exc.args[0]}") from None
    sensors = SensorLayout(
        loop_positions=tuple(
            float(p) for p in _get(raw, "sensors.loop_positions_m", default=list(base.sensors.loop_positions))
        ),
        bt_positions=tuple(
            float(p) for p in _get(raw, "sensors.bt_positions_m", default=list(base.sensors.bt_positions))
        ),
        fcd_penetration=float(_get(raw, "sensors.fcd_penetration", default=base.sensors.fcd_penetration)),
        fcd_interval=float(_get(raw, "sensors.fcd_interval_s", default=base.sensors.fcd_interval)),
        fcd_jitter=float(_get(raw, "sensors.fcd_jitter_s", default=base.sensors.fcd_jitter)),
        demand_veh_per_h=float(_get(raw, "sensors.demand_veh_per_h", default=base.sensors.demand_veh_per_h)),
        bt_veh_per_h=float(_get(raw, "sensors.bt_veh_per_h", default=base.sensors.bt_veh_per_h)),
    )
    noise = NoiseModel(
        loop_speed_std=float(_get(raw, "noise.loop_speed_kmh", default=3.0)) * KMH,
        fcd_speed_std=float(_get(raw, "noise.fcd_speed_kmh", default=2.0)) * KMH,
        bt_tt_rel_std=float(_get(raw, "noise.bt_travel_time_rel", default=0.02)),
    )
    return ScenarioConfig(
        spec=spec,
        free_speed=float(_get(raw, "traffic.free_speed_kmh", default=110.0)) * KMH,
        bottlenecks=tuple(bottlenecks),
        jams=tuple(jams),
        sensors=sensors,
        noise=noise,
        ramp=float(_get(raw, "traffic.ramp_m", default=200.0)),
    )


def dump_scenario(path, cfg: ScenarioConfig) -> None:
    """Write the resolved scenario back out (km/h at the file boundary)."""
    spec = cfg.spec
    lines = [
        "[domain]",
        f"x_min_m = {_f(spec.x_min)}",
        f"x_max_m = {_f(spec.x_max)}",
        f"t_min_s = {_f(spec.t_min)}",
        f"t_max_s = {_f(spec.t_max)}",
        f"dx_m = {_f(spec.dx)}",
        f"dt_s = {_f(spec.dt)}",
        "",
        "[traffic]",
        f"free_speed_kmh = {_f(cfg.free_speed / KMH)}",
        f"ramp_m = {_f(cfg.ramp)}",
        "",
    ]
    for b in cfg.bottlenecks:
        lines += [
            "[[traffic.bottlenecks]]",
            f"location_m = {_f(b.location)}",
            f"onset_s = {_f(b.onset)}",
            f"duration_s = {_f(b.duration)}",
            f"sync_speed_kmh = {_f(b.sync_speed / KMH)}",
            f"extent_m = {_f(b.extent)}",
            "",
        ]
    for j in cfg.jams:
        lines += [
            "[[traffic.moving_jams]]",
            f"origin_m = {_f(j.origin)}",
            f"onset_s = {_f(j.onset)}",
            f"width_m = {_f(j.width)}",
            f"jam_speed_kmh = {_f(j.jam_speed / KMH)}",
            f"wave_speed_kmh = {_f(j.wave_speed / KMH)}",
        ] + ([f"until_s = {_f(j.until)}"] if np.isfinite(j.until) else []) + [""]
    lay = cfg.sensors
    lines += [
        "[sensors]",
        "loop_positions_m = [" + ", ".join(_f(p) for p in lay.loop_positions) + "]",
        "bt_positions_m = [" + ", ".join(_f(p) for p in lay.bt_positions) + "]",
        f"fcd_penetration = {_f(lay.fcd_penetration)}",
        f"fcd_interval_s = {_f(lay.fcd_interval)}",
        f"fcd_jitter_s = {_f(lay.fcd_jitter)}",
        f"demand_veh_per_h = {_f(lay.demand_veh_per_h)}",
        f"bt_veh_per_h = {_f(lay.bt_veh_per_h)}",
        "",
        "[noise]",
        f"loop_speed_kmh = {_f(cfg.noise.loop_speed_std / KMH)}",
        f"fcd_speed_kmh = {_f(cfg.noise.fcd_speed_std / KMH)}",
        f"bt_travel_time_rel = {_f(cfg.noise.bt_tt_rel_std)}",
        "",
    ]
    Path(path).write_text("\n".join(lines), encoding="utf-8")


def load_params(path) -> ReconstructionParams:
    """Reconstruction parameters from TOML (all keys optional)."""
    raw = load_toml(path)
    base = ReconstructionParams()
    bt = BtWeightParams(
        v_min=float(_get(raw, "bt_weight.v_min_kmh", default=5.0)) * KMH,
        v_max=float(_get(raw, "bt_weight.v_max_kmh", default=130.0)) * KMH,
        gamma=float(_get(raw, "bt_weight.gamma_m_s", default=500_000.0)),
    )
    return ReconstructionParams(
        sigma=float(_get(raw, "smoothing.sigma_m", default=base.sigma)),
        tau=float(_get(raw, "smoothing.tau_s", default=base.tau)),
        c_cong=float(_get(raw, "smoothing.c_cong_kmh", default=-15.0)) * KMH,
        c_free=float(_get(raw, "smoothing.c_free_kmh", default=80.0)) * KMH,
        v_thr=float(_get(raw, "smoothing.v_thr_kmh", default=60.0)) * KMH,
        delta_v=float(_get(raw, "smoothing.delta_v_kmh", default=20.0)) * KMH,
        truncate=float(_get(raw, "smoothing.truncate", default=base.truncate)),
        combine_inverse_speed=bool(
            _get(raw, "smoothing.combine_inverse_speed", default=base.combine_inverse_speed)
        ),
        free_boundary=float(_get(raw, "phases.free_boundary_kmh", default=80.0)) * KMH,
        wmj_boundary=float(_get(raw, "phases.wmj_boundary_kmh", default=25.0)) * KMH,
        membership_steepness=float(_get(raw, "phases.steepness_kmh", default=10.0)) * KMH,
        sigma_sync=float(_get(raw, "phases.sigma_sync_m", default=base.sigma_sync)),
        sync_smooth_stationary=bool(
            _get(raw, "phases.sync_smooth_stationary", default=base.sync_smooth_stationary)
        ),
        bt=bt,
        secavg_fill_speed=float(_get(raw, "section_average.fill_speed_kmh", default=100.0)) * KMH,
    )
