"""Benchmark the numba-compiled kernels against their fallback paths.

Covers the three hot spots: trajectory rasterization, anisotropic smoothing
(direct numba loops vs the scipy FFT fallback) and event-stepping travel-time
integration.  Checks that both paths agree before timing them.

Run:  python benchmarks/bench_accel.py
The pure-interpreter numbers for the rasterizer/integrator are what you get
with TRAFUSION_NO_NUMBA=1 (the smoothing fallback is the FFT path, which is
competitive; the interpreted loops are not).
"""

import time

import numpy as np
from scipy.signal import fftconvolve

import trafusion as tf
from trafusion import _kernels, accel
from trafusion.ingest import pack_traces
from trafusion.params import ReconstructionParams
from trafusion.smoothing import kernel_stencil


def _timeit(fn, repeat=3):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    if not accel.USING_NUMBA:
        print("numba disabled (TRAFUSION_NO_NUMBA); nothing to compare against")
        return
    params = ReconstructionParams()
    cfg = tf.desk_default()
    truth, data = tf.synthesize(cfg, seed=0)
    spec = cfg.spec
    print(f"scenario: {spec.n_x}x{spec.n_t} cells, {len(data.fcd)} traces, {len(data.bt)} samples")
    rows = []

    # --- trace rasterization
    ts, xs, offsets = pack_traces(data.fcd)
    jit_fn = _kernels.accumulate_trace_cells
    py_fn = jit_fn.py_func

    def run_raster(fn):
        sw = np.zeros(spec.shape)
        swv = np.zeros(spec.shape)
        fn(ts, xs, offsets, spec.x_min, spec.dx, spec.t_min, spec.dt,
           spec.n_x, spec.n_t, 1e-6, tf.V_FLOOR, tf.V_CEIL, 0, sw, swv)
        return sw, swv

    jit_fn_warm = run_raster(jit_fn)
    t_jit, out_jit = _timeit(lambda: run_raster(jit_fn))
    t_py, out_py = _timeit(lambda: run_raster(py_fn), repeat=1)
    agree = np.allclose(out_jit[0], out_py[0]) and np.allclose(out_jit[1], out_py[1])
    rows.append(("trace rasterization", t_py, t_jit, agree))

    # --- anisotropic smoothing: direct numba loops vs FFT fallback
    rng = np.random.default_rng(0)
    w = (rng.uniform(0, 1, spec.shape) > 0.5).astype(float)
    wv = np.where(w > 0, w / rng.uniform(5, 30, spec.shape), 0.0)
    stencil = kernel_stencil(params.congested_kernel(), spec)

    def run_direct():
        num = np.empty(spec.shape)
        den = np.empty(spec.shape)
        _kernels.smooth_sums_direct(wv, w, stencil, num, den)
        return num, den

    def run_fft():
        return fftconvolve(wv, stencil, mode="same"), fftconvolve(w, stencil, mode="same")

    run_direct()
    t_direct, out_d = _timeit(run_direct)
    t_fft, out_f = _timeit(run_fft)
    agree = np.allclose(out_d[0], out_f[0], atol=1e-10) and np.allclose(out_d[1], out_f[1], atol=1e-10)
    rows.append(("smoothing (fft fallback)", t_fft, t_direct, agree))

    # --- travel-time integration over all samples
    est = tf.reconstruct_asm(
        tf.combine_cellwise([tf.grid_loop(data.loops, spec), tf.grid_fcd(data.fcd, spec)]),
        params,
    )
    jit_step = _kernels.step_to_pos
    py_step = jit_step.py_func

    def run_integrate(step):
        total = 0.0
        for s in data.bt[:400]:
            i = min(int((s.x_start - spec.x_min) // spec.dx), spec.n_x - 1)
            j = min(int((s.t_start - spec.t_min) // spec.dt), spec.n_t - 1)
            t_end, _, _, _ = step(est.values, spec.x_min, spec.dx, spec.t_min, spec.dt,
                                  s.t_start, s.x_start, i, j, s.x_end)
            total += t_end
        return total

    run_integrate(jit_step)
    t_jit_i, tot_j = _timeit(lambda: run_integrate(jit_step))
    t_py_i, tot_p = _timeit(lambda: run_integrate(py_step), repeat=1)
    rows.append(("trajectory stepping", t_py_i, t_jit_i, np.isclose(tot_j, tot_p)))

    print(f"\n{'kernel':28s} {'fallback':>10s} {'numba':>10s} {'speedup':>8s}  agree")
    for name, t_slow, t_fast, agree in rows:
        print(f"{name:28s} {t_slow*1e3:9.1f}ms {t_fast*1e3:9.1f}ms {t_slow/t_fast:7.1f}x  {agree}")


if __name__ == "__main__":
    main()
