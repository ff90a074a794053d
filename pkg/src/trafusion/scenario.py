"""Synthetic ground-truth fields and sensor simulation.

Builds space-time speed fields from a free-flow background, stationary
bottleneck regions (downstream front pinned at the bottleneck) and moving jam
bands translating upstream at their wave speed, then simulates the three
sensor types by driving vehicles through the field with the same
event-stepping integrator used for virtual travel times.  All sampling is
deterministic per seed, with per-vehicle sub-seeds so the output does not
depend on iteration order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .grid import KMH, V_CEIL, GridSpec, SpeedField, clamp_speed
from .ingest import BtSample, FcdTrace, LoopRecord, SensorData


@dataclass(frozen=True)
class Bottleneck:
    """Stationary congestion whose downstream front sits at the bottleneck."""

    location: float  # m
    onset: float  # s
    duration: float  # s
    sync_speed: float  # m/s
    extent: float = 1500.0  # m of congested stretch upstream of the location


@dataclass(frozen=True)
class MovingJam:
    """Low-speed band translating at the congested wave speed."""

    origin: float  # m, band centre at onset
    onset: float  # s
    width: float  # m
    jam_speed: float  # m/s
    wave_speed: float = -15.0 * KMH  # m/s
    until: float = math.inf  # s, active end (clipped by the domain anyway)


@dataclass(frozen=True)
class SensorLayout:
    loop_positions: tuple[float, ...]
    bt_positions: tuple[float, ...]
    fcd_penetration: float = 0.05
    fcd_interval: float = 10.0  # s between position samples
    fcd_jitter: float = 0.0  # s, uniform jitter on the sampling interval
    demand_veh_per_h: float = 1800.0
    bt_veh_per_h: float = 400.0


@dataclass(frozen=True)
class NoiseModel:
    loop_speed_std: float = 3.0 * KMH
    fcd_speed_std: float = 2.0 * KMH
    bt_tt_rel_std: float = 0.02

    def zeroed(self) -> "NoiseModel":
        return NoiseModel(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ScenarioConfig:
    spec: GridSpec
    free_speed: float = 110.0 * KMH
    bottlenecks: tuple[Bottleneck, ...] = ()
    jams: tuple[MovingJam, ...] = ()
    sensors: SensorLayout = field(
        default_factory=lambda: SensorLayout(loop_positions=(), bt_positions=())
    )
    noise: NoiseModel = field(default_factory=NoiseModel)
    ramp: float = 200.0  # m, spatial transition length at pattern edges

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


def desk_default() -> ScenarioConfig:
    """Desk-scale default: 10 km x 4 h, one bottleneck plus three moving jams,
    10 loop detectors, 5 % probe penetration, 4 travel-time receivers."""
    spec = GridSpec(0.0, 10_000.0, 0.0, 14_400.0)
    return ScenarioConfig(
        spec=spec,
        free_speed=110.0 * KMH,
        bottlenecks=(
            Bottleneck(location=6_000.0, onset=3_600.0, duration=7_200.0,
                       sync_speed=35.0 * KMH, extent=1_500.0),
        ),
        jams=(
            MovingJam(origin=9_500.0, onset=6_000.0, width=900.0, jam_speed=10.0 * KMH),
            MovingJam(origin=9_800.0, onset=9_000.0, width=700.0, jam_speed=12.0 * KMH),
            MovingJam(origin=8_500.0, onset=11_700.0, width=900.0, jam_speed=9.0 * KMH),
        ),
        sensors=SensorLayout(
            loop_positions=tuple(500.0 + 1000.0 * k for k in range(10)),
            # receiver spacing grows along the stretch so the long segments
            # span the congested region (travel-time data alone cannot
            # localize structure inside them)
            bt_positions=(200.0, 1_800.0, 5_200.0, 9_800.0),
            fcd_penetration=0.05,
            demand_veh_per_h=1_200.0,
            bt_veh_per_h=150.0,
        ),
        noise=NoiseModel(),
    )


def paper_scale() -> ScenarioConfig:
    """Preset with data volumes at the scale of a heavily instrumented
    freeway day: 27 detectors, ~1,600 probe traces, ~12,000 travel-time
    samples on a 30 km x 6 h domain."""
    spec = GridSpec(0.0, 30_000.0, 0.0, 21_600.0)
    return ScenarioConfig(
        spec=spec,
        free_speed=110.0 * KMH,
        bottlenecks=(
            Bottleneck(location=18_000.0, onset=5_400.0, duration=10_800.0,
                       sync_speed=35.0 * KMH, extent=2_500.0),
        ),
        jams=(
            MovingJam(origin=28_000.0, onset=7_200.0, width=1_200.0, jam_speed=10.0 * KMH),
            MovingJam(origin=29_000.0, onset=12_600.0, width=900.0, jam_speed=12.0 * KMH),
            MovingJam(origin=26_000.0, onset=16_200.0, width=1_200.0, jam_speed=9.0 * KMH),
        ),
        sensors=SensorLayout(
            loop_positions=tuple(500.0 + 29_000.0 / 26.0 * k for k in range(27)),
            bt_positions=(500.0, 5_500.0, 10_500.0, 15_500.0, 20_500.0, 25_500.0, 29_500.0),
            fcd_penetration=0.05,
            demand_veh_per_h=4_850.0,
            bt_veh_per_h=290.0,
        ),
        noise=NoiseModel(),
    )


def generate_ground_truth(cfg: ScenarioConfig) -> SpeedField:
    """Fully filled truth field; overlapping patterns resolve to the minimum
    speed, edges ramp to free flow over the configured transition length."""
    spec = cfg.spec
    x = spec.x_centers()[:, None]
    t = spec.t_centers()[None, :]
    free = cfg.free_speed
    v = np.full(spec.shape, free)
    for b in cfg.bottlenecks:
        active = (t >= b.onset) & (t < b.onset + b.duration)
        up_edge = b.location - b.extent
        profile = np.where(
            (x > up_edge - cfg.ramp) & (x <= b.location),
            np.where(
                x >= up_edge,
                b.sync_speed,
                free + (b.sync_speed - free) * (x - (up_edge - cfg.ramp)) / cfg.ramp,
            ),
            free,
        )
        v = np.where(active, np.minimum(v, profile), v)
    for jam in cfg.jams:
        center = jam.origin + jam.wave_speed * (t - jam.onset)
        active = (t >= jam.onset) & (t <= jam.until)
        d = np.abs(x - center)
        half = jam.width / 2.0
        profile = np.where(
            d <= half,
            jam.jam_speed,
            np.where(
                d <= half + cfg.ramp,
                jam.jam_speed + (free - jam.jam_speed) * (d - half) / cfg.ramp,
                free,
            ),
        )
        v = np.where(active, np.minimum(v, profile), v)
    return SpeedField(spec, clamp_speed(v), np.ones(spec.shape))


def sample_loops(truth: SpeedField, cfg: ScenarioConfig, seed: int) -> list[LoopRecord]:
    """One record per detector per time step: truth cell speed plus Gaussian
    noise, clamped to the measurable range."""
    spec = truth.spec
    rng = np.random.default_rng([seed, 1])
    records = []
    for d_idx, pos in enumerate(cfg.sensors.loop_positions):
        if not (spec.x_min <= pos <= spec.x_max):
            continue
        i = min(int((pos - spec.x_min) // spec.dx), spec.n_x - 1)
        noise = cfg.noise.loop_speed_std * rng.standard_normal(spec.n_t)
        for j in range(spec.n_t):
            v = float(np.clip(truth.values[i, j] + noise[j], 0.0, V_CEIL))
            records.append(
                LoopRecord(f"D{d_idx:03d}", float(pos), spec.t_min + j * spec.dt, v)
            )
    return records


def _arrival_times(rng, rate_per_s: float, t_lo: float, t_hi: float) -> list[float]:
    if rate_per_s <= 0:
        return []
    out = []
    t = t_lo + rng.exponential(1.0 / rate_per_s)
    while t < t_hi:
        out.append(t)
        t += rng.exponential(1.0 / rate_per_s)
    return out


def _warmup(cfg: ScenarioConfig) -> float:
    # release early enough that the first vehicles already populate high
    # positions at the domain start
    return (cfg.spec.x_max - cfg.spec.x_min) / max(cfg.free_speed, 1e-6)


def sample_fcd(truth: SpeedField, cfg: ScenarioConfig, seed: int) -> list[FcdTrace]:
    """Equipped vehicles released per penetration rate and driven through the
    truth field; positions sampled at the configured interval."""
    spec = truth.spec
    lay = cfg.sensors
    rate = lay.demand_veh_per_h * lay.fcd_penetration / 3600.0
    rng = np.random.default_rng([seed, 2])
    releases = _arrival_times(rng, rate, spec.t_min - _warmup(cfg), spec.t_max)
    traces = []
    x_edge = spec.x_min + spec.n_x * spec.dx
    for k, t0 in enumerate(releases):
        rng_v = np.random.default_rng([seed, 2, k])
        t, x = t0, spec.x_min
        i = 0
        j = min(max(int((t - spec.t_min) // spec.dt), 0), spec.n_t - 1)
        ts, xs = [t], [x]
        while True:
            gap = lay.fcd_interval
            if lay.fcd_jitter > 0:
                gap += rng_v.uniform(-lay.fcd_jitter, lay.fcd_jitter)
            target = ts[-1] + max(gap, 0.5)
            if target > spec.t_max:
                break
            t, x, i, j = _kernels.step_to_time(
                truth.values, spec.x_min, spec.dx, spec.t_min, spec.dt,
                t, x, i, j, target, x_edge,
            )
            if x >= min(spec.x_max, x_edge):
                break
            ts.append(t)
            xs.append(x)
        ts = np.array(ts)
        xs = np.array(xs)
        inside = ts >= spec.t_min
        ts, xs = ts[inside], xs[inside]
        if ts.size < 2:
            continue
        if cfg.noise.fcd_speed_std > 0:
            # position jitter consistent with the configured speed noise;
            # increments re-clamped to keep traces monotone and plausible
            sigma_x = cfg.noise.fcd_speed_std * lay.fcd_interval / math.sqrt(2.0)
            noisy = xs + rng_v.normal(0.0, sigma_x, xs.size)
            x0 = min(max(noisy[0], spec.x_min), spec.x_max)
            steps = np.clip(np.diff(noisy), 0.0, V_CEIL * np.diff(ts) * 0.999)
            xs = np.minimum(np.concatenate([[x0], x0 + np.cumsum(steps)]), spec.x_max)
        traces.append(FcdTrace(f"V{k:05d}", ts, xs))
    return traces


def sample_bt(truth: SpeedField, cfg: ScenarioConfig, seed: int) -> list[BtSample]:
    """Vehicles from an independent release process crossing consecutive
    receiver pairs; travel times come from the integrator, optionally with
    relative noise."""
    spec = truth.spec
    lay = cfg.sensors
    positions = sorted(p for p in lay.bt_positions if spec.x_min <= p <= spec.x_max)
    if len(positions) < 2:
        return []
    rate = lay.bt_veh_per_h / 3600.0
    rng = np.random.default_rng([seed, 3])
    releases = _arrival_times(rng, rate, spec.t_min - _warmup(cfg), spec.t_max)
    samples = []
    for k, t0 in enumerate(releases):
        rng_v = np.random.default_rng([seed, 3, k])
        t, x = t0, spec.x_min
        i = 0
        j = min(max(int((t - spec.t_min) // spec.dt), 0), spec.n_t - 1)
        crossing = []
        for p in positions:
            t, x, i, j = _kernels.step_to_pos(
                truth.values, spec.x_min, spec.dx, spec.t_min, spec.dt, t, x, i, j, p,
            )
            crossing.append(t)
        for seg in range(len(positions) - 1):
            t_a, t_b = crossing[seg], crossing[seg + 1]
            if t_a < spec.t_min or t_b > spec.t_max:
                continue
            tt = t_b - t_a
            if cfg.noise.bt_tt_rel_std > 0:
                tt *= 1.0 + float(rng_v.normal(0.0, cfg.noise.bt_tt_rel_std))
            dist = positions[seg + 1] - positions[seg]
            tt = max(tt, dist / V_CEIL * 1.0001)
            samples.append(
                BtSample(f"B{k:05d}", positions[seg], positions[seg + 1], t_a, t_a + tt)
            )
    return samples


def synthesize(cfg: ScenarioConfig, seed: int) -> tuple[SpeedField, SensorData]:
    """Ground truth plus all three simulated sensor datasets."""
    truth = generate_ground_truth(cfg)
    return truth, SensorData(
        loops=tuple(sample_loops(truth, cfg, seed)),
        fcd=tuple(sample_fcd(truth, cfg, seed)),
        bt=tuple(sample_bt(truth, cfg, seed)),
    )
