"""Raw sensor data types and their rasterization onto speed fields.

Three sources are supported: loop detector records (point measurements),
probe-vehicle traces (piecewise-linear trajectories) and travel-time samples
between fixed receiver pairs (straight virtual trajectories).  Cell
aggregation is always a commutative reduction over (sum w, sum w/v)
accumulators, so the result does not depend on input order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .grid import (
    V_CEIL,
    V_FLOOR,
    DomainError,
    GridShapeError,
    GridSpec,
    SpeedField,
    cell_index,
    clamp_speed,
    field_from_sums,
)

log = logging.getLogger(__name__)

# per trace-cell dwell below this contributes nothing (guards division
# blow-up at cell corners)
MIN_CELL_DT = 1e-6


@dataclass(frozen=True)
class LoopRecord:
    """One 1-minute speed measurement of a stationary detector."""

    detector_id: str
    position: float  # m
    timestamp: float  # s, start of the measurement interval
    speed: float  # m/s

    def __post_init__(self):
        if not (0.0 <= self.speed <= V_CEIL + 1e-9):
            raise DomainError(f"loop speed {self.speed} m/s outside [0, {V_CEIL:.2f}]")


@dataclass(frozen=True)
class FcdTrace:
    """Position samples of one probe vehicle, linearly interpolated between."""

    trace_id: str
    times: np.ndarray  # s, strictly increasing
    positions: np.ndarray  # m, non-decreasing

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=np.float64)
        positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        if times.ndim != 1 or times.shape != positions.shape or times.size < 1:
            raise DomainError("trace needs matching 1-D time/position samples")
        dt = np.diff(times)
        dx = np.diff(positions)
        if np.any(dt <= 0):
            raise DomainError(f"trace {self.trace_id}: times must be strictly increasing")
        if np.any(dx < 0):
            raise DomainError(f"trace {self.trace_id}: positions must be non-decreasing")
        if dt.size and np.any(dx / dt > V_CEIL + 1e-9):
            raise DomainError(f"trace {self.trace_id}: inter-sample speed above {V_CEIL:.2f} m/s")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", positions)

    def __len__(self) -> int:
        return int(self.times.size)


@dataclass(frozen=True)
class BtSample:
    """One travel-time measurement between two receiver positions."""

    trace_id: str
    x_start: float  # m
    x_end: float  # m
    t_start: float  # s
    t_end: float  # s

    def __post_init__(self):
        if not self.x_end > self.x_start:
            raise DomainError("travel-time sample needs x_end > x_start")
        if not self.t_end > self.t_start:
            raise DomainError("travel-time sample needs t_end > t_start")
        if self.mean_speed > V_CEIL + 1e-9:
            raise DomainError(f"sample mean speed above {V_CEIL:.2f} m/s")

    @property
    def travel_time(self) -> float:
        return self.t_end - self.t_start

    @property
    def distance(self) -> float:
        return self.x_end - self.x_start

    @property
    def mean_speed(self) -> float:
        return self.distance / self.travel_time


@dataclass(frozen=True)
class SensorData:
    """One dataset: everything the three sensor types collected."""

    loops: tuple[LoopRecord, ...] = ()
    fcd: tuple[FcdTrace, ...] = field(default_factory=tuple)
    bt: tuple[BtSample, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "loops", tuple(self.loops))
        object.__setattr__(self, "fcd", tuple(self.fcd))
        object.__setattr__(self, "bt", tuple(self.bt))

    @property
    def loop_positions(self) -> tuple[float, ...]:
        return tuple(sorted({r.position for r in self.loops}))

    @property
    def bt_positions(self) -> tuple[float, ...]:
        pos = {s.x_start for s in self.bt} | {s.x_end for s in self.bt}
        return tuple(sorted(pos))


def pack_traces(traces) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flatten traces into (times, positions, offsets) arrays for the kernels."""
    n = sum(len(tr) for tr in traces)
    ts = np.empty(n)
    xs = np.empty(n)
    offsets = np.zeros(len(traces) + 1, dtype=np.int64)
    pos = 0
    for k, tr in enumerate(traces):
        m = len(tr)
        ts[pos : pos + m] = tr.times
        xs[pos : pos + m] = tr.positions
        pos += m
        offsets[k + 1] = pos
    return ts, xs, offsets


def grid_fcd(traces, spec: GridSpec) -> SpeedField:
    """Rasterize probe traces: per crossed cell the speed dx/dt of the trace,
    harmonically merged across traces; weight 1 wherever data landed."""
    sw = np.zeros(spec.shape)
    swv = np.zeros(spec.shape)
    if traces:
        ts, xs, offsets = pack_traces(traces)
        skipped = _kernels.accumulate_trace_cells(
            ts, xs, offsets, spec.x_min, spec.dx, spec.t_min, spec.dt,
            spec.n_x, spec.n_t, MIN_CELL_DT, V_FLOOR, V_CEIL, 0, sw, swv,
        )
        if skipped:
            log.warning("grid_fcd: skipped %d degenerate trace(s) with < 2 samples", skipped)
    return field_from_sums(spec, sw, swv)


def grid_loop(records, spec: GridSpec) -> SpeedField:
    """Assign each record to the cell containing (timestamp + dt/2, position);
    collisions merge harmonically."""
    sw = np.zeros(spec.shape)
    swv = np.zeros(spec.shape)
    discarded = 0
    for rec in records:
        t = rec.timestamp + spec.dt / 2.0
        try:
            i, j = cell_index(spec, t, rec.position)
        except DomainError:
            discarded += 1
            continue
        v = float(clamp_speed(rec.speed))
        sw[i, j] += 1.0
        swv[i, j] += 1.0 / v
    if discarded:
        log.warning("grid_loop: discarded %d record(s) outside the domain", discarded)
    return field_from_sums(spec, sw, swv)


def grid_bt(samples, spec: GridSpec) -> SpeedField:
    """Expand each sample to a straight trajectory and distribute its mean
    speed over the crossed cells, weighted by the in-cell share of the path
    length (Euclidean in normalized (t/dt, x/dx) coordinates)."""
    sw = np.zeros(spec.shape)
    swv = np.zeros(spec.shape)
    if samples:
        t0s = np.array([s.t_start for s in samples])
        x0s = np.array([s.x_start for s in samples])
        t1s = np.array([s.t_end for s in samples])
        x1s = np.array([s.x_end for s in samples])
        vals = clamp_speed(np.array([s.mean_speed for s in samples]))
        discarded = _kernels.rasterize_bt(
            t0s, x0s, t1s, x1s, vals, spec.x_min, spec.dx, spec.t_min, spec.dt,
            spec.n_x, spec.n_t, 0, sw, swv,
        )
        if discarded:
            log.warning("grid_bt: discarded %d sample(s) with empty domain clip", discarded)
    return field_from_sums(spec, sw, swv)


def combine_cellwise(fields, source_weights=None) -> SpeedField:
    """Fuse fields cell-wise by the weighted harmonic mean.

    ``source_weights`` holds one per-cell weight array per source (unit
    weights when omitted); a source's effective weight is its own trust times
    that array.  The output weight is the maximum effective weight, capped
    at 1, so cells served only by a down-weighted source keep that weight.
    """
    fields = list(fields)
    if not fields:
        raise GridShapeError("combine_cellwise needs at least one field")
    spec = fields[0].spec
    for f in fields:
        if f.spec != spec:
            raise GridShapeError("fields on different grids cannot be combined")
    if source_weights is None:
        source_weights = [None] * len(fields)
    if len(source_weights) != len(fields):
        raise GridShapeError("need one source-weight entry per field")
    sw = np.zeros(spec.shape)
    swv = np.zeros(spec.shape)
    wmax = np.zeros(spec.shape)
    for f, srcw in zip(fields, source_weights):
        eff = f.weights if srcw is None else f.weights * np.asarray(srcw, dtype=float)
        if eff.shape != spec.shape:
            raise GridShapeError("source-weight array does not match the grid")
        contrib = eff > 0
        sw += np.where(contrib, eff, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            swv += np.where(contrib, eff / f.values, 0.0)
        wmax = np.maximum(wmax, eff)
    mask = sw > 0
    values = np.zeros(spec.shape)
    values[mask] = sw[mask] / swv[mask]
    values[mask] = clamp_speed(values[mask])
    return SpeedField(spec, values, np.minimum(wmax, 1.0))
