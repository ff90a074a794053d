"""Numba dispatch for the hot inner loops.

Every kernel in ``trafusion._kernels`` is written in plain, numba-compatible
Python.  When numba is importable (and not disabled) the kernels are compiled
with ``@njit(cache=True, nogil=True)``; otherwise the interpreted versions run
as-is and the smoothing module switches to an FFT-based numpy/scipy path.

Set ``TRAFUSION_NO_NUMBA=1`` to force the fallback path.  The benchmark in
``benchmarks/bench_accel.py`` compares both.
"""

import os

__all__ = ["USING_NUMBA", "maybe_jit"]


def _numba_wanted() -> bool:
    flag = os.environ.get("TRAFUSION_NO_NUMBA", "").strip().lower()
    return flag not in ("1", "true", "yes", "on")


USING_NUMBA = False
_njit = None
if _numba_wanted():
    try:
        from numba import njit as _njit

        USING_NUMBA = True
    except ImportError:  # pragma: no cover - exercised via env flag instead
        USING_NUMBA = False


def maybe_jit(func):
    """Compile ``func`` with numba when enabled, else return it unchanged."""
    if USING_NUMBA:
        return _njit(cache=True, nogil=True)(func)
    return func
