"""Phase-based reconstruction: classify cells into free / synchronized / jam
phases, smooth each phase's raw data with a phase-appropriate kernel and
aggregate, plus the variant consuming travel-time trust weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import DomainError, GridShapeError, NoDataError, SpeedField
from .ingest import combine_cellwise
from .params import ReconstructionParams
from .smoothing import directional_smooth

PHASE_FREE = 0
PHASE_SYNC = 1
PHASE_WMJ = 2


@dataclass(frozen=True)
class PhaseField:
    """Per-cell probabilities of the three traffic phases (rows sum to 1)."""

    spec: object
    p_free: np.ndarray
    p_sync: np.ndarray
    p_wmj: np.ndarray

    def __post_init__(self):
        for name in ("p_free", "p_sync", "p_wmj"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.shape != self.spec.shape:
                raise GridShapeError(f"{name} does not match the grid")
            if arr.min() < -1e-12 or arr.max() > 1 + 1e-12:
                raise DomainError(f"{name} must lie in [0, 1]")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        total = self.p_free + self.p_sync + self.p_wmj
        if np.any(np.abs(total - 1.0) > 1e-9):
            raise DomainError("phase probabilities must sum to 1 per cell")

    def dominant(self) -> np.ndarray:
        """Most likely phase per cell; ties break toward the more congested."""
        stacked = np.stack([self.p_wmj, self.p_sync, self.p_free])
        return 2 - np.argmax(stacked, axis=0)


def _logistic(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def classify_phases(raw: SpeedField, params: ReconstructionParams) -> PhaseField:
    """Derive phase probabilities from three pilot smoothings of the raw data.

    The free and jam pilots smooth along their wave speeds, the synchronized
    pilot only in time (narrow spatial support).  Logistic memberships on the
    pilot speeds, weighted by each pilot's kernel mass, are normalized per
    cell.
    """
    if not raw.has_data:
        raise NoDataError("classify_phases needs a non-empty raw field")
    free_pilot = directional_smooth(raw, params.free_kernel(), params.truncate)
    wmj_pilot = directional_smooth(raw, params.congested_kernel(), params.truncate)
    sync_pilot = directional_smooth(raw, params.sync_pilot_kernel(), params.truncate)

    s = params.membership_steepness
    m_free = _logistic((free_pilot.values - params.free_boundary) / s)
    m_wmj = _logistic((params.wmj_boundary - wmj_pilot.values) / s)
    m_sync = _logistic((params.free_boundary - sync_pilot.values) / s) * _logistic(
        (sync_pilot.values - params.wmj_boundary) / s
    )

    like_free = m_free * free_pilot.weights
    like_sync = m_sync * sync_pilot.weights
    like_wmj = m_wmj * wmj_pilot.weights
    total = like_free + like_sync + like_wmj
    degenerate = total <= 0
    total = np.where(degenerate, 1.0, total)
    third = np.float64(1.0 / 3.0)
    p_free = np.where(degenerate, third, like_free / total)
    p_sync = np.where(degenerate, third, like_sync / total)
    p_wmj = np.where(degenerate, third, like_wmj / total)
    return PhaseField(raw.spec, p_free, p_sync, p_wmj)


def reconstruct_psm(raw: SpeedField, params: ReconstructionParams) -> SpeedField:
    """Two-step phase-based reconstruction.

    Raw cells are assigned to their dominant phase; each phase's data is
    smoothed with the free-flow kernel (free phase) or the congested kernel
    (synchronized and jam phases), and the phase estimates are aggregated as
    an inverse-speed average weighted by phase probability times kernel mass.
    The raw field's weights act as the per-cell data trust.
    """
    if not raw.has_data:
        raise NoDataError("reconstruct_psm needs a non-empty raw field")
    phases = classify_phases(raw, params)
    dom = phases.dominant()
    plan = (
        (PHASE_FREE, params.free_kernel(), phases.p_free),
        (PHASE_SYNC, params.sync_smooth_kernel(), phases.p_sync),
        (PHASE_WMJ, params.congested_kernel(), phases.p_wmj),
    )
    num = np.zeros(raw.spec.shape)
    den = np.zeros(raw.spec.shape)
    for phase, kernel, p in plan:
        mask = (dom == phase) & (raw.weights > 0)
        if not mask.any():
            continue
        sub = SpeedField(raw.spec, raw.values, np.where(mask, raw.weights, 0.0))
        est = directional_smooth(sub, kernel, params.truncate)
        wgt = p * est.weights
        num += wgt / est.values
        den += wgt
    ok = den > 0
    inv = np.empty(raw.spec.shape)
    inv[ok] = num[ok] / den[ok]
    if not ok.all():
        ii, jj, vv = raw.data_cells()
        dw = raw.weights[ii, jj]
        inv[~ok] = float((dw / vv).sum() / dw.sum())
    values = np.clip(1.0 / inv, params.v_floor, params.v_ceil)
    weights = np.clip(den, 0.0, 1.0)
    return SpeedField(raw.spec, values, weights)


def reconstruct_psm_w(
    loop: SpeedField,
    fcd: SpeedField,
    bt: SpeedField,
    bt_weights: np.ndarray,
    params: ReconstructionParams,
) -> SpeedField:
    """Phase-based reconstruction with trust-weighted travel-time data.

    Loop and probe data enter with constant weight one, travel-time cells
    with their trust weight; the fused field's weights then drive the
    phase-based smoothing.  With all-zero trust this reduces exactly to the
    reconstruction without travel-time data.
    """
    fused = combine_cellwise([loop, fcd, bt], [None, None, np.asarray(bt_weights, dtype=float)])
    return reconstruct_psm(fused, params)
