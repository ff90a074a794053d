"""Trust weights for travel-time samples from the feasible-trajectory region.

A sample that covered distance dx in time dt, under speed bounds
[v_min, v_max], confines the vehicle to a parallelogram in space-time: the
forward cone from the start point intersected with the backward cone from the
end point.  Its area measures how ambiguous the sample's constant-speed
interpolation is; the weight exp(-A/gamma) decays with that ambiguity.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from . import _kernels
from .grid import DomainError, GridSpec
from .params import BtWeightParams

log = logging.getLogger(__name__)


def is_feasible(dx: float, dt: float, p: BtWeightParams) -> bool:
    """Whether the sample's mean speed lies within [v_min, v_max]."""
    return p.v_min * dt <= dx <= p.v_max * dt


def parallelogram_area(dx: float, dt: float, p: BtWeightParams) -> float:
    """Area (m*s) of the feasible-trajectory parallelogram.

    Closed form (dx - v_min*dt) * (v_max*dt - dx) / (v_max - v_min); validated
    against a shoelace oracle on the four vertices in the test suite.
    Infeasible samples (mean speed outside the bounds) clamp to 0.
    """
    if dx <= 0 or dt <= 0:
        raise DomainError("parallelogram_area needs positive dx and dt")
    a = (dx - p.v_min * dt) * (p.v_max * dt - dx) / (p.v_max - p.v_min)
    return max(a, 0.0)


def bt_weight(area: float, gamma: float) -> float:
    """Trust weight exp(-A/gamma) in (0, 1]."""
    if area < 0:
        raise DomainError("area must be non-negative")
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    return math.exp(-area / gamma)


def sample_weight(sample, p: BtWeightParams) -> float:
    """Trust weight of one travel-time sample."""
    return bt_weight(parallelogram_area(sample.distance, sample.travel_time, p), p.gamma)


def bt_weight_field(samples, spec: GridSpec, p: BtWeightParams) -> np.ndarray:
    """Per cell, the arithmetic mean of the trust weights of all samples whose
    straight-line interpolation crosses the cell; 0 where none passes."""
    wsum = np.zeros(spec.shape)
    cnt = np.zeros(spec.shape)
    if samples:
        t0s = np.array([s.t_start for s in samples])
        x0s = np.array([s.x_start for s in samples])
        t1s = np.array([s.t_end for s in samples])
        x1s = np.array([s.x_end for s in samples])
        vals = np.empty(len(samples))
        infeasible = 0
        for k, s in enumerate(samples):
            if not is_feasible(s.distance, s.travel_time, p):
                infeasible += 1
            vals[k] = sample_weight(s, p)
        if infeasible:
            log.warning(
                "bt_weight_field: %d sample(s) with mean speed outside "
                "[v_min, v_max], clamped to full trust", infeasible,
            )
        _kernels.rasterize_bt(
            t0s, x0s, t1s, x1s, vals, spec.x_min, spec.dx, spec.t_min, spec.dt,
            spec.n_x, spec.n_t, 1, wsum, cnt,
        )
    out = np.zeros(spec.shape)
    mask = cnt > 0
    out[mask] = wsum[mask] / cnt[mask]
    return out
