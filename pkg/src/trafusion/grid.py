"""Uniform space-time grid, the speed-field container and cell aggregation.

Internal units are SI everywhere (m, s, m/s); km/h appears only at the CLI
boundary.  Stored cell speeds are clamped to [V_FLOOR, V_CEIL] so harmonic
means and inverse-speed metrics stay finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

KMH = 1.0 / 3.6  # multiply km/h by this to get m/s

# storage clamp for cell speeds; distinct from the travel-time feasibility
# bounds used for trust weighting
V_FLOOR = 1.0 * KMH
V_CEIL = 250.0 * KMH


class DomainError(ValueError):
    """Coordinate or value outside its admissible domain."""


class NoDataError(ValueError):
    """An operation that needs data received none."""


class GridShapeError(ValueError):
    """Fields on mismatched grids were combined."""


def kmh(v: float) -> float:
    """km/h -> m/s."""
    return v / 3.6


def to_kmh(v: float) -> float:
    """m/s -> km/h."""
    return v * 3.6


def imae_to_min_per_km(e: float) -> float:
    """Inverse-speed error s/m -> min/km (reporting unit)."""
    return e * 1000.0 / 60.0


@dataclass(frozen=True)
class GridSpec:
    """Uniform raster over a road stretch [x_min, x_max] x [t_min, t_max]."""

    x_min: float
    x_max: float
    t_min: float
    t_max: float
    dx: float = 100.0
    dt: float = 60.0

    def __post_init__(self):
        if not (self.dx > 0 and self.dt > 0):
            raise DomainError(f"cell sizes must be positive, got dx={self.dx}, dt={self.dt}")
        if not (self.x_max > self.x_min and self.t_max > self.t_min):
            raise DomainError("domain extents must be positive")

    @property
    def n_x(self) -> int:
        return max(1, math.ceil((self.x_max - self.x_min) / self.dx - 1e-9))

    @property
    def n_t(self) -> int:
        return max(1, math.ceil((self.t_max - self.t_min) / self.dt - 1e-9))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_x, self.n_t)

    def x_centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_x) + 0.5) * self.dx

    def t_centers(self) -> np.ndarray:
        return self.t_min + (np.arange(self.n_t) + 0.5) * self.dt

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        """(t, x) center of cell (i, j)."""
        return (self.t_min + (j + 0.5) * self.dt, self.x_min + (i + 0.5) * self.dx)


def cell_index(spec: GridSpec, t: float, x: float) -> tuple[int, int]:
    """Map a domain coordinate to its (row, col) cell.

    Interior boundaries belong to the higher-index cell (floor semantics);
    the final boundary clamps inward.  Out-of-domain coordinates raise
    :class:`DomainError`.
    """
    if not (spec.t_min <= t <= spec.t_max) or not (spec.x_min <= x <= spec.x_max):
        raise DomainError(
            f"coordinate (t={t}, x={x}) outside domain "
            f"[{spec.t_min}, {spec.t_max}] x [{spec.x_min}, {spec.x_max}]"
        )
    i = min(int((x - spec.x_min) // spec.dx), spec.n_x - 1)
    j = min(int((t - spec.t_min) // spec.dt), spec.n_t - 1)
    return i, j


def harmonic_mean(speeds, weights=None) -> float:
    """Weighted harmonic mean (sum w) / (sum w/v) of positive speeds.

    Entries with zero weight are excluded; speeds must be positive anyway.
    """
    v = np.asarray(speeds, dtype=float)
    if weights is None:
        w = np.ones_like(v)
    else:
        w = np.asarray(weights, dtype=float)
    if v.shape != w.shape:
        raise GridShapeError("speeds and weights must have equal length")
    if v.size == 0:
        raise NoDataError("harmonic_mean of empty input")
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise DomainError("harmonic_mean requires strictly positive finite speeds")
    if np.any(w < 0):
        raise DomainError("weights must be non-negative")
    sw = w.sum()
    if sw <= 0:
        raise NoDataError("harmonic_mean needs at least one positive weight")
    return sw / float((w / v).sum())


@dataclass(frozen=True)
class SpeedField:
    """Cell speeds plus per-cell trust weights on a grid.

    Weight 0 marks "no data"; every cell with positive weight holds a finite
    speed within the storage clamp.  Instances are treated as immutable after
    construction (arrays are marked read-only).
    """

    spec: GridSpec
    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if values.shape != self.spec.shape or weights.shape != self.spec.shape:
            raise GridShapeError(
                f"field arrays {values.shape}/{weights.shape} do not match grid {self.spec.shape}"
            )
        if np.any(weights < 0) or np.any(weights > 1 + 1e-12):
            raise DomainError("weights must lie in [0, 1]")
        mask = weights > 0
        if mask.any():
            vals = values[mask]
            if not np.all(np.isfinite(vals)):
                raise DomainError("cells with data must hold finite speeds")
            if vals.min() < V_FLOOR - 1e-9 or vals.max() > V_CEIL + 1e-9:
                raise DomainError(
                    f"cell speeds outside storage clamp [{V_FLOOR:.3f}, {V_CEIL:.3f}] m/s"
                )
        values.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def empty(cls, spec: GridSpec) -> "SpeedField":
        return cls(spec, np.zeros(spec.shape), np.zeros(spec.shape))

    @property
    def has_data(self) -> bool:
        return bool(np.any(self.weights > 0))

    def data_mask(self) -> np.ndarray:
        return self.weights > 0

    def data_cells(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(rows, cols, speeds) of all cells carrying data."""
        ii, jj = np.nonzero(self.weights > 0)
        return ii, jj, self.values[ii, jj]


def clamp_speed(v, v_floor: float = V_FLOOR, v_ceil: float = V_CEIL):
    """Clamp measured speeds into the storable range (0 maps to v_floor)."""
    return np.clip(v, v_floor, v_ceil)


def field_from_sums(spec: GridSpec, sw: np.ndarray, swv: np.ndarray) -> SpeedField:
    """Build a field from harmonic accumulators (sum w, sum w/v).

    Cells with positive accumulated weight get the harmonic mean and trust 1.
    """
    mask = sw > 0
    values = np.zeros(spec.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        values[mask] = sw[mask] / swv[mask]
    values[mask] = clamp_speed(values[mask])
    return SpeedField(spec, values, mask.astype(float))
