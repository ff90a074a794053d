"""Hot inner loops shared by rasterization, smoothing and trajectory stepping.

All functions are written in numba-compatible Python and compiled through
:func:`trafusion.accel.maybe_jit`.  They operate on plain float64/int64 arrays
and scalars only; wrapping, validation and unit handling live in the calling
modules.

Grid convention throughout: ``values[i, j]`` with row ``i`` = space cell
(x ascending) and column ``j`` = time cell (t ascending).  Cells are half-open
``[edge, next_edge)``; a coordinate exactly on an interior edge belongs to the
higher-index cell.
"""

import math

from .accel import maybe_jit

_INF = 1e300


@maybe_jit
def accumulate_trace_cells(
    ts,
    xs,
    offsets,
    x_min,
    dx,
    t_min,
    dt,
    n_x,
    n_t,
    min_dt,
    v_floor,
    v_ceil,
    mode,
    acc_a,
    acc_b,
):
    """Rasterize piecewise-linear trajectories onto the grid.

    ``ts``/``xs`` hold all samples of all traces back to back; trace ``k``
    spans ``offsets[k]:offsets[k+1]``.  Consecutive pieces inside one cell are
    merged before use, so a trace contributes at most once per cell.

    mode 0: per trace-cell visit with dwell time >= ``min_dt`` the speed
            dx/dt (clamped to [v_floor, v_ceil]) is folded into harmonic-mean
            accumulators: ``acc_a[i,j] += 1`` and ``acc_b[i,j] += 1/v``.
    mode 1: raw sums ``acc_a[i,j] += dx`` and ``acc_b[i,j] += dt`` (section
            averaging; no per-trace merge semantics needed, sums are additive).

    Returns the number of traces skipped for having fewer than two samples.
    """
    t_edge = t_min + n_t * dt
    x_edge = x_min + n_x * dx
    skipped = 0
    for k in range(offsets.shape[0] - 1):
        lo = offsets[k]
        hi = offsets[k + 1]
        if hi - lo < 2:
            skipped += 1
            continue
        cur_i = -1
        cur_j = -1
        acc_dt = 0.0
        acc_dx = 0.0
        for s in range(lo, hi - 1):
            t0 = ts[s]
            x0 = xs[s]
            t1 = ts[s + 1]
            x1 = xs[s + 1]
            seg_dt = t1 - t0
            if seg_dt <= 0.0:
                continue
            vx = (x1 - x0) / seg_dt
            # clip the segment to the grid extent (contributions outside the
            # domain are discarded)
            s_lo = 0.0
            s_hi = 1.0
            if t0 < t_min:
                s_lo = (t_min - t0) / seg_dt
            if t1 > t_edge:
                s_hi = (t_edge - t0) / seg_dt
            if x1 > x0:
                if x0 < x_min:
                    s2 = (x_min - x0) / (x1 - x0)
                    if s2 > s_lo:
                        s_lo = s2
                if x1 > x_edge:
                    s2 = (x_edge - x0) / (x1 - x0)
                    if s2 < s_hi:
                        s_hi = s2
            else:
                if x0 < x_min or x0 >= x_edge:
                    continue
            if s_lo >= s_hi:
                continue
            tc1 = t0 + s_hi * seg_dt
            t = t0 + s_lo * seg_dt
            x = x0 + s_lo * (x1 - x0)
            i = int((x - x_min) // dx)
            if i > n_x - 1:
                i = n_x - 1
            if i < 0:
                i = 0
            j = int((t - t_min) // dt)
            if j > n_t - 1:
                j = n_t - 1
            if j < 0:
                j = 0
            while True:
                x_nb = x_min + (i + 1) * dx
                t_nb = t_min + (j + 1) * dt
                rem = tc1 - t
                step = rem
                hit = 2  # 0: row boundary, 1: column boundary, 2: segment end
                if vx > 0.0:
                    d = (x_nb - x) / vx
                    if d < step:
                        step = d
                        hit = 0
                d = t_nb - t
                if d < step:
                    step = d
                    hit = 1
                if step < 0.0:
                    step = 0.0
                piece_dt = step
                piece_dx = vx * step
                if i == cur_i and j == cur_j:
                    acc_dt += piece_dt
                    acc_dx += piece_dx
                else:
                    if cur_i >= 0 and acc_dt >= min_dt:
                        if mode == 0:
                            v = acc_dx / acc_dt
                            if v < v_floor:
                                v = v_floor
                            elif v > v_ceil:
                                v = v_ceil
                            acc_a[cur_i, cur_j] += 1.0
                            acc_b[cur_i, cur_j] += 1.0 / v
                        else:
                            acc_a[cur_i, cur_j] += acc_dx
                            acc_b[cur_i, cur_j] += acc_dt
                    cur_i = i
                    cur_j = j
                    acc_dt = piece_dt
                    acc_dx = piece_dx
                if hit == 2:
                    break
                if hit == 0:
                    t += step
                    x = x_nb
                    i += 1
                    if i >= n_x:
                        break
                else:
                    t = t_nb
                    x += vx * step
                    j += 1
                    if j >= n_t:
                        break
        if cur_i >= 0 and acc_dt >= min_dt:
            if mode == 0:
                v = acc_dx / acc_dt
                if v < v_floor:
                    v = v_floor
                elif v > v_ceil:
                    v = v_ceil
                acc_a[cur_i, cur_j] += 1.0
                acc_b[cur_i, cur_j] += 1.0 / v
            else:
                acc_a[cur_i, cur_j] += acc_dx
                acc_b[cur_i, cur_j] += acc_dt
    return skipped


@maybe_jit
def rasterize_bt(
    t0s,
    x0s,
    t1s,
    x1s,
    vals,
    x_min,
    dx,
    t_min,
    dt,
    n_x,
    n_t,
    mode,
    acc_a,
    acc_b,
):
    """Rasterize straight space-time lines (one per travel-time sample).

    ``vals[k]`` carries the per-sample payload: the mean speed for mode 0,
    an already-computed trust weight for mode 1.

    mode 0: weighted harmonic-mean accumulation where the per-cell weight is
            the sample's in-cell share of its clipped path length, Euclidean
            in (t/dt, x/dx) coordinates: ``acc_a[i,j] += share`` and
            ``acc_b[i,j] += share / v``.
    mode 1: per crossed cell (positive dwell) ``acc_a[i,j] += vals[k]`` and
            ``acc_b[i,j] += 1`` (plain averaging of weights).

    Returns the number of samples discarded because their clip to the domain
    was empty.
    """
    t_edge = t_min + n_t * dt
    x_edge = x_min + n_x * dx
    discarded = 0
    for k in range(t0s.shape[0]):
        t0 = t0s[k]
        x0 = x0s[k]
        t1 = t1s[k]
        x1 = x1s[k]
        seg_dt = t1 - t0
        if seg_dt <= 0.0:
            discarded += 1
            continue
        vx = (x1 - x0) / seg_dt
        s_lo = 0.0
        s_hi = 1.0
        if t0 < t_min:
            s_lo = (t_min - t0) / seg_dt
        if t1 > t_edge:
            s_hi = (t_edge - t0) / seg_dt
        if x1 > x0:
            if x0 < x_min:
                s2 = (x_min - x0) / (x1 - x0)
                if s2 > s_lo:
                    s_lo = s2
            if x1 > x_edge:
                s2 = (x_edge - x0) / (x1 - x0)
                if s2 < s_hi:
                    s_hi = s2
        elif x0 < x_min or x0 >= x_edge:
            discarded += 1
            continue
        if s_lo >= s_hi:
            discarded += 1
            continue
        t = t0 + s_lo * seg_dt
        x = x0 + s_lo * (x1 - x0)
        tc1 = t0 + s_hi * seg_dt
        xc1 = x0 + s_hi * (x1 - x0)
        total = math.hypot((tc1 - t) / dt, (xc1 - x) / dx)
        if total <= 0.0:
            discarded += 1
            continue
        i = int((x - x_min) // dx)
        if i > n_x - 1:
            i = n_x - 1
        if i < 0:
            i = 0
        j = int((t - t_min) // dt)
        if j > n_t - 1:
            j = n_t - 1
        if j < 0:
            j = 0
        val = vals[k]
        while True:
            x_nb = x_min + (i + 1) * dx
            t_nb = t_min + (j + 1) * dt
            rem = tc1 - t
            step = rem
            hit = 2
            if vx > 0.0:
                d = (x_nb - x) / vx
                if d < step:
                    step = d
                    hit = 0
            d = t_nb - t
            if d < step:
                step = d
                hit = 1
            if step < 0.0:
                step = 0.0
            if step > 0.0:
                if mode == 0:
                    share = math.hypot(step / dt, vx * step / dx) / total
                    acc_a[i, j] += share
                    acc_b[i, j] += share / val
                else:
                    acc_a[i, j] += val
                    acc_b[i, j] += 1.0
            if hit == 2:
                break
            if hit == 0:
                t += step
                x = x_nb
                i += 1
                if i >= n_x:
                    break
            else:
                t = t_nb
                x += vx * step
                j += 1
                if j >= n_t:
                    break
    return discarded


@maybe_jit
def smooth_sums_direct(wv, w, stencil, num, den):
    """Truncated anisotropic convolution via direct summation.

    ``wv`` is weight * 1/speed, ``w`` the data weights; ``stencil[a, b]`` is
    the kernel value for an output cell offset of (a - R_x, b - R_t) relative
    to a data cell.  Writes the convolution sums into ``num``/``den``.
    """
    n_x = w.shape[0]
    n_t = w.shape[1]
    s_x = stencil.shape[0]
    s_t = stencil.shape[1]
    r_x = (s_x - 1) // 2
    r_t = (s_t - 1) // 2
    for i in range(n_x):
        for j in range(n_t):
            acc_n = 0.0
            acc_d = 0.0
            a0 = i - r_x
            b0 = j - r_t
            lo_a = 0 if a0 >= 0 else -a0
            hi_a = s_x if a0 + s_x <= n_x else n_x - a0
            lo_b = 0 if b0 >= 0 else -b0
            hi_b = s_t if b0 + s_t <= n_t else n_t - b0
            for a in range(lo_a, hi_a):
                ii = a0 + a
                for b in range(lo_b, hi_b):
                    jj = b0 + b
                    ww = w[ii, jj]
                    if ww > 0.0:
                        # stencil index: data at (ii, jj), output at (i, j)
                        # offset (i - ii, j - jj) -> reversed stencil index
                        phi = stencil[s_x - 1 - a, s_t - 1 - b]
                        acc_d += phi * ww
                        acc_n += phi * wv[ii, jj]
            num[i, j] = acc_n
            den[i, j] = acc_d


@maybe_jit
def step_to_pos(values, x_min, dx, t_min, dt, t, x, i, j, x_target):
    """Advance through the piecewise-constant field until ``x_target``.

    ``(i, j)`` must be the cell containing ``(t, x)``.  Beyond the last time
    column the column's speeds are held constant.  Returns the updated state
    ``(t, x, i, j)``; the caller detects extrapolation from the final time.
    """
    n_x = values.shape[0]
    n_t = values.shape[1]
    while x < x_target:
        v = values[i, j]
        x_nb = x_min + (i + 1) * dx
        xt = x_nb if x_nb < x_target else x_target
        need = (xt - x) / v
        if j < n_t - 1:
            avail = t_min + (j + 1) * dt - t
        else:
            avail = _INF
        if need <= avail:
            t += need
            x = xt
            if xt == x_nb:
                i += 1
                if i >= n_x:
                    i = n_x - 1
            if x >= x_target:
                break
        else:
            t = t_min + (j + 1) * dt
            x += v * avail
            j += 1
    return t, x, i, j


@maybe_jit
def step_to_time(values, x_min, dx, t_min, dt, t, x, i, j, t_target, x_stop):
    """Advance through the field until ``t_target`` or until ``x_stop``.

    Same state conventions as :func:`step_to_pos`.
    """
    n_x = values.shape[0]
    n_t = values.shape[1]
    while t < t_target and x < x_stop:
        v = values[i, j]
        x_nb = x_min + (i + 1) * dx
        xt = x_nb if x_nb < x_stop else x_stop
        step = (xt - x) / v
        hit = 0  # 0: space boundary, 1: time boundary, 2: target time
        if j < n_t - 1:
            avail = t_min + (j + 1) * dt - t
            if avail < step:
                step = avail
                hit = 1
        if t_target - t <= step:
            step = t_target - t
            hit = 2
        if hit == 0:
            t += step
            x = xt
            if xt == x_nb:
                i += 1
                if i >= n_x:
                    i = n_x - 1
        elif hit == 1:
            t = t_min + (j + 1) * dt
            x += v * step
            j += 1
        else:
            x += v * step
            t = t_target
            break
    return t, x, i, j
