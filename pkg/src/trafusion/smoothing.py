"""Anisotropic kernel smoothing along characteristic wave speeds.

Smoothing operates on inverse speeds: the output cell speed is
``1 / (sum phi*w/v / sum phi*w)`` over data cells, with the kernel
``phi(dt, dx) = exp(-|dx|/sigma - |dt - dx/c|/tau)`` tilted along the wave
speed ``c`` (stationary kernels drop the tilt).  The kernel support is
truncated at ``truncate * sigma`` / ``truncate * tau``; output cells left
without any kernel mass by the truncation are filled exactly from all data
cells with the untruncated kernel, so every output cell carries a value.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import fftconvolve

from .grid import GridShapeError, GridSpec, NoDataError, SpeedField
from .params import KernelParams


def kernel_stencil(k: KernelParams, spec: GridSpec, truncate: float = 3.0) -> np.ndarray:
    """Kernel values on the truncated cell-offset window.

    ``stencil[a, b]`` is phi for an output cell offset of
    ``(dx, dt) = ((a - r_x) * spec.dx, (b - r_t) * spec.dt)`` from a data cell.
    """
    r_x = max(1, math.ceil(truncate * k.sigma / spec.dx))
    if k.stationary:
        r_t = max(1, math.ceil(truncate * k.tau / spec.dt))
    else:
        reach = truncate * k.tau + truncate * k.sigma / abs(k.wave_speed)
        r_t = max(1, math.ceil(reach / spec.dt))
    dxs = (np.arange(-r_x, r_x + 1) * spec.dx)[:, None]
    dts = (np.arange(-r_t, r_t + 1) * spec.dt)[None, :]
    if k.stationary:
        u = np.abs(dts) * np.ones_like(dxs)
    else:
        u = np.abs(dts - dxs / k.wave_speed)
    phi = np.exp(-np.abs(dxs) / k.sigma - u / k.tau)
    cut = (np.abs(dxs) > truncate * k.sigma * (1 + 1e-12)) | (u > truncate * k.tau * (1 + 1e-12))
    phi[np.broadcast_to(cut, phi.shape)] = 0.0
    return phi


def _smooth_sums(wv: np.ndarray, w: np.ndarray, stencil: np.ndarray):
    """Convolution sums (num, den) plus the mask of cells with kernel mass.

    FFT convolution wins over direct summation by orders of magnitude at
    these stencil sizes (see benchmarks/bench_accel.py), so it is the
    production path; the direct numba kernel remains as an independently
    tested cross-check implementation.
    """
    num = fftconvolve(wv, stencil, mode="same")
    den = fftconvolve(w, stencil, mode="same")
    # FFT round-off leaves ~1e-16*max noise on truly empty cells; treat
    # anything below as uncovered (those cells are recomputed exactly)
    dmax = float(den.max(initial=0.0))
    covered = den > dmax * 1e-12 if dmax > 0 else np.zeros_like(den, dtype=bool)
    num = np.maximum(num, 0.0)
    den = np.where(covered, den, 0.0)
    return num, den, covered


def _full_extent_sums(k: KernelParams, spec: GridSpec, wv, w):
    """Untruncated kernel sums over the whole grid (FFT, cheap).

    Used only to fill cells the truncated support left without mass, where
    the kernel values are tiny; run-of-the-mill cells keep the truncated
    direct sums.
    """
    r_x = spec.n_x - 1
    r_t = spec.n_t - 1
    dxs = (np.arange(-r_x, r_x + 1) * spec.dx)[:, None]
    dts = (np.arange(-r_t, r_t + 1) * spec.dt)[None, :]
    if k.stationary:
        u = np.abs(dts) * np.ones_like(dxs)
    else:
        u = np.abs(dts - dxs / k.wave_speed)
    phi = np.exp(-np.abs(dxs) / k.sigma - u / k.tau)
    num = fftconvolve(wv, phi, mode="same")
    den = fftconvolve(w, phi, mode="same")
    return np.maximum(num, 0.0), np.maximum(den, 0.0)


def directional_smooth(field: SpeedField, k: KernelParams, truncate: float = 3.0) -> SpeedField:
    """Fill the whole grid by inverse-speed kernel smoothing of the data cells.

    Output weight is the kernel mass normalized by the full-stencil mass,
    clipped to [0, 1]; it decays with distance from data.
    """
    if not field.has_data:
        raise NoDataError("directional_smooth needs at least one data cell")
    spec = field.spec
    w = field.weights
    with np.errstate(divide="ignore", invalid="ignore"):
        wv = np.where(w > 0, w / field.values, 0.0)
    stencil = kernel_stencil(k, spec, truncate)
    num, den, covered = _smooth_sums(wv, w, stencil)

    inv = np.empty(spec.shape)
    inv[covered] = num[covered] / den[covered]
    if not covered.all():
        fnum, fden = _full_extent_sums(k, spec, wv, w)
        fmax = float(fden.max(initial=0.0))
        good = (~covered) & (fden > fmax * 1e-13)
        inv[good] = fnum[good] / fden[good]
        den = np.where(covered, den, fden)
        bad = (~covered) & ~good
        if bad.any():
            # kernel mass below FFT resolution even untruncated: fall back to
            # the global weighted mean of the data, with zero confidence
            ii, jj, vv = field.data_cells()
            dw = field.weights[ii, jj]
            inv[bad] = float((dw / vv).sum() / dw.sum())
            den = np.where(bad, 0.0, den)

    _, _, data_v = field.data_cells()
    values = np.clip(1.0 / inv, data_v.min(), data_v.max())
    weights = np.clip(den / stencil.sum(), 0.0, 1.0)
    return SpeedField(spec, values, weights)


def adaptive_weight(
    v_cong: SpeedField, v_free: SpeedField, v_thr: float, delta_v: float
) -> np.ndarray:
    """Low-speed-favoring blend weight 0.5*(1 + tanh((v_thr - min)/delta_v))."""
    if v_cong.spec != v_free.spec:
        raise GridShapeError("adaptive_weight needs fields on one grid")
    v_min = np.minimum(v_cong.values, v_free.values)
    return 0.5 * (1.0 + np.tanh((v_thr - v_min) / delta_v))


def asm_combine(
    v_cong: SpeedField,
    v_free: SpeedField,
    w: np.ndarray,
    inverse_space: bool = True,
) -> SpeedField:
    """Cell-wise convex combination of the two smoothed fields.

    Applied to inverse speeds by default, consistent with the inverse-speed
    smoothing regime; ``inverse_space=False`` blends raw speeds instead.
    """
    if v_cong.spec != v_free.spec:
        raise GridShapeError("asm_combine needs fields on one grid")
    w = np.asarray(w, dtype=float)
    if w.shape != v_cong.spec.shape:
        raise GridShapeError("weight field does not match the grid")
    if inverse_space:
        values = 1.0 / (w / v_cong.values + (1.0 - w) / v_free.values)
    else:
        values = w * v_cong.values + (1.0 - w) * v_free.values
    weights = np.maximum(v_cong.weights, v_free.weights)
    return SpeedField(v_cong.spec, values, weights)
