"""Adaptive smoothing reconstruction over a cell-wise combined raw field."""

from __future__ import annotations

import numpy as np

from .grid import NoDataError, SpeedField
from .params import ReconstructionParams
from .smoothing import adaptive_weight, asm_combine, directional_smooth


def reconstruct_asm(raw: SpeedField, params: ReconstructionParams) -> SpeedField:
    """Smooth along the congested and free wave directions and blend with the
    low-speed-favoring adaptive weight.  Output is fully filled and clamped
    to the storage range."""
    if not raw.has_data:
        raise NoDataError("reconstruct_asm needs a non-empty raw field")
    v_cong = directional_smooth(raw, params.congested_kernel(), params.truncate)
    v_free = directional_smooth(raw, params.free_kernel(), params.truncate)
    w = adaptive_weight(v_cong, v_free, params.v_thr, params.delta_v)
    out = asm_combine(v_cong, v_free, w, inverse_space=params.combine_inverse_speed)
    values = np.clip(out.values, params.v_floor, params.v_ceil)
    return SpeedField(raw.spec, values, out.weights)
