"""Section-average baseline reconstruction.

The road is split into sections with borders at the midpoints of adjacent
detector positions.  Loop cells take their section's measurement at the same
minute (temporal gaps fall back to the nearest measurement in time, earlier
wins ties); trace-based sections take total distance over total time per time
step with temporal linear interpolation across gaps.  Fusions are plain
cell-wise arithmetic averages, deliberately different from the harmonic
fusion used by the smoothing algorithms.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .grid import (
    DomainError,
    GridShapeError,
    GridSpec,
    NoDataError,
    SpeedField,
    clamp_speed,
)
from .ingest import MIN_CELL_DT, BtSample, FcdTrace, SensorData, pack_traces

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SectionPartition:
    """Sorted section borders covering the whole spatial domain."""

    boundaries: np.ndarray

    def __post_init__(self):
        b = np.ascontiguousarray(self.boundaries, dtype=np.float64)
        if b.ndim != 1 or b.size < 2 or np.any(np.diff(b) <= 0):
            raise DomainError("boundaries must be strictly increasing with >= 2 entries")
        b.setflags(write=False)
        object.__setattr__(self, "boundaries", b)

    @property
    def n_sections(self) -> int:
        return int(self.boundaries.size - 1)

    def section_of(self, x) -> np.ndarray:
        idx = np.searchsorted(self.boundaries, np.asarray(x, dtype=float), side="right") - 1
        return np.clip(idx, 0, self.n_sections - 1)

    def row_sections(self, spec: GridSpec) -> np.ndarray:
        return self.section_of(spec.x_centers())


def define_sections(detector_positions, spec: GridSpec) -> SectionPartition:
    """Borders at midpoints of consecutive detector positions; the first and
    last sections extend to the domain edges."""
    pos = sorted({float(p) for p in detector_positions if spec.x_min <= p <= spec.x_max})
    if not pos:
        log.warning("define_sections: no detector inside the domain, using one section")
        return SectionPartition(np.array([spec.x_min, spec.x_max]))
    mids = [(a + b) / 2.0 for a, b in zip(pos[:-1], pos[1:])]
    bounds = [spec.x_min] + [m for m in mids if spec.x_min < m < spec.x_max] + [spec.x_max]
    return SectionPartition(np.array(bounds))


def _fill_nearest(values: np.ndarray, present: np.ndarray) -> np.ndarray:
    """Fill gaps with the temporally nearest value; earlier wins ties."""
    idx = np.nonzero(present)[0]
    out = values.copy()
    for j in np.nonzero(~present)[0]:
        k = int(np.searchsorted(idx, j))
        cands = []
        if k > 0:
            cands.append(int(idx[k - 1]))
        if k < idx.size:
            cands.append(int(idx[k]))
        best = min(cands, key=lambda c: (abs(c - j), c))
        out[j] = values[best]
    return out


def section_average_loop(records, partition: SectionPartition, spec: GridSpec) -> SpeedField:
    """Assign each cell its section's detector measurement at the same minute;
    temporal gaps take the nearest measurement in time (earlier wins ties),
    sections without any record fall back to the domain-wide temporal
    neighbor rule."""
    records = list(records)
    if not records:
        raise NoDataError("section_average_loop needs at least one record")
    n_s = partition.n_sections
    ssum = np.zeros((n_s, spec.n_t))
    scnt = np.zeros((n_s, spec.n_t))
    discarded = 0
    for rec in records:
        t = rec.timestamp + spec.dt / 2.0
        if not (spec.t_min <= t <= spec.t_max) or not (spec.x_min <= rec.position <= spec.x_max):
            discarded += 1
            continue
        j = min(int((t - spec.t_min) // spec.dt), spec.n_t - 1)
        s = int(partition.section_of(rec.position))
        ssum[s, j] += clamp_speed(rec.speed)
        scnt[s, j] += 1.0
    if discarded:
        log.warning("section_average_loop: discarded %d record(s) outside the domain", discarded)
    present = scnt > 0
    if not present.any():
        raise NoDataError("section_average_loop: no record inside the domain")
    means = np.zeros((n_s, spec.n_t))
    means[present] = ssum[present] / scnt[present]

    sec_values = np.empty((n_s, spec.n_t))
    col_present = present.any(axis=0)
    col_means = np.zeros(spec.n_t)
    col_means[col_present] = (
        means.sum(axis=0)[col_present] / present.sum(axis=0)[col_present]
    )
    empty_sections = 0
    for s in range(n_s):
        if present[s].any():
            sec_values[s] = _fill_nearest(means[s], present[s])
        else:
            # detector outage for the whole period: nearest-in-time values
            # averaged over all reporting detectors
            empty_sections += 1
            sec_values[s] = _fill_nearest(col_means, col_present)
    if empty_sections:
        log.warning("section_average_loop: %d section(s) without any record", empty_sections)

    rows = partition.row_sections(spec)
    values = clamp_speed(sec_values[rows])
    return SpeedField(spec, values, np.ones(spec.shape))


def section_average_traces(
    items,
    partition: SectionPartition,
    spec: GridSpec,
    fill_speed: float,
) -> SpeedField:
    """Per (section, time step): total distance covered by the crossing
    traces divided by the total time spent; temporal gaps are linearly
    interpolated, sections never crossed fall back to ``fill_speed``."""
    items = list(items)
    if not items:
        raise NoDataError("section_average_traces needs at least one trace")
    if isinstance(items[0], BtSample):
        traces = [
            FcdTrace(s.trace_id, np.array([s.t_start, s.t_end]), np.array([s.x_start, s.x_end]))
            for s in items
        ]
    else:
        traces = items
    # rasterize distance/time sums onto the fine grid, then pool rows per
    # section: the sums are additive, so pooling is exact
    sdx = np.zeros(spec.shape)
    sdt = np.zeros(spec.shape)
    ts, xs, offsets = pack_traces(traces)
    _kernels.accumulate_trace_cells(
        ts, xs, offsets, spec.x_min, spec.dx, spec.t_min, spec.dt,
        spec.n_x, spec.n_t, MIN_CELL_DT, 0.0, 0.0, 1, sdx, sdt,
    )
    rows = partition.row_sections(spec)
    n_s = partition.n_sections
    dxs = np.zeros((n_s, spec.n_t))
    dts = np.zeros((n_s, spec.n_t))
    np.add.at(dxs, rows, sdx)
    np.add.at(dts, rows, sdt)

    present = dts > MIN_CELL_DT
    sec_values = np.empty((n_s, spec.n_t))
    cols = np.arange(spec.n_t)
    empty_sections = 0
    for s in range(n_s):
        if present[s].any():
            have = np.nonzero(present[s])[0]
            vals = clamp_speed(dxs[s, have] / dts[s, have])
            sec_values[s] = np.interp(cols, have, vals)
        else:
            empty_sections += 1
            sec_values[s] = fill_speed
    if empty_sections:
        log.warning(
            "section_average_traces: %d section(s) never crossed, filled with %.1f m/s",
            empty_sections, fill_speed,
        )
    values = clamp_speed(sec_values[rows])
    return SpeedField(spec, values, np.ones(spec.shape))


def reconstruct_section_average(fields) -> SpeedField:
    """Cell-wise arithmetic mean of the per-source section-average fields."""
    fields = list(fields)
    if not fields:
        raise NoDataError("reconstruct_section_average needs at least one source")
    spec = fields[0].spec
    for f in fields:
        if f.spec != spec:
            raise GridShapeError("fields on different grids cannot be averaged")
    values = clamp_speed(np.mean([f.values for f in fields], axis=0))
    weights = np.max([f.weights for f in fields], axis=0)
    return SpeedField(spec, values, weights)


def reconstruct_secavg_from_data(
    train: SensorData,
    spec: GridSpec,
    fill_speed: float,
    sources: tuple[str, ...] = ("LOOP", "FCD", "BT"),
) -> SpeedField:
    """Build the per-source section fields from raw training data and fuse.

    Loop sections come from the detector positions present in the training
    records; probe traces reuse them.  Without loop data the probe sections
    fall back to the travel-time receiver positions, then to one whole-domain
    section.
    """
    fields = []
    loop_part = None
    if "LOOP" in sources and train.loops:
        loop_part = define_sections(train.loop_positions, spec)
        fields.append(section_average_loop(train.loops, loop_part, spec))
    bt_part = None
    if "BT" in sources and train.bt:
        bt_part = define_sections(train.bt_positions, spec)
    if "FCD" in sources and train.fcd:
        part = loop_part or bt_part or define_sections([], spec)
        fields.append(section_average_traces(train.fcd, part, spec, fill_speed))
    if "BT" in sources and train.bt:
        fields.append(section_average_traces(train.bt, bt_part, spec, fill_speed))
    if not fields:
        raise NoDataError("section average: no data for the requested sources")
    return reconstruct_section_average(fields)
