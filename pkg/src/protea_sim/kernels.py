"""Integer compute kernels behind the tiled engines.

Two interchangeable backends produce bit-identical results (everything is
exact int64 arithmetic):

* ``numba`` -- @njit loop kernels mirroring the engines' PE loops (default
  when numba imports cleanly),
* ``numpy`` -- vectorized fallback.

Selection: env var ``PROTEA_SIM_BACKEND=numba|numpy``, resolved at import.
``benchmarks/bench_backends.py`` times one against the other.
"""

import os

import numpy as np

_ENV_VAR = "PROTEA_SIM_BACKEND"


# --- numpy implementations -------------------------------------------------

def _np_matmul_accum(a, b, acc):
    """acc += a @ b, exact int64."""
    acc += a @ b


def _np_matmul_abt_accum(a, b, acc):
    """acc += a @ b.T, exact int64 (weight/key buffers are stored transposed)."""
    acc += a @ b.T


def _np_requant_shift(acc, shift, min_raw, max_raw, out):
    """out = clamp(round_half_even(acc / 2**shift)).

    Pure integer arithmetic: arithmetic shift floors, the kept remainder
    decides the half-even adjustment.
    """
    if shift == 0:
        np.clip(acc, min_raw, max_raw, out=out)
        return
    q = acc >> shift
    r = acc & ((np.int64(1) << shift) - 1)
    half = np.int64(1) << (shift - 1)
    q = q + ((r > half) | ((r == half) & ((q & 1) == 1)))
    np.clip(q, min_raw, max_raw, out=out)


def _np_sat_add(dst, add, min_raw, max_raw):
    """dst = clamp(dst + add) elementwise."""
    np.clip(dst + add, min_raw, max_raw, out=dst)


_NUMPY_IMPL = {
    "matmul_accum": _np_matmul_accum,
    "matmul_abt_accum": _np_matmul_abt_accum,
    "requant_shift": _np_requant_shift,
    "sat_add": _np_sat_add,
}


# --- numba implementations ---------------------------------------------------

def _build_numba_impl():
    from numba import njit

    @njit(cache=True)
    def _nb_matmul_accum(a, b, acc):
        n, k = a.shape
        m = b.shape[1]
        for i in range(n):
            for j in range(m):
                s = np.int64(0)
                for t in range(k):
                    s += a[i, t] * b[t, j]
                acc[i, j] += s

    @njit(cache=True)
    def _nb_matmul_abt_accum(a, b, acc):
        n, k = a.shape
        m = b.shape[0]
        for i in range(n):
            for j in range(m):
                s = np.int64(0)
                for t in range(k):
                    s += a[i, t] * b[j, t]
                acc[i, j] += s

    @njit(cache=True)
    def _nb_requant_shift(acc, shift, min_raw, max_raw, out):
        n, m = acc.shape
        if shift == 0:
            for i in range(n):
                for j in range(m):
                    v = acc[i, j]
                    out[i, j] = min(max(v, min_raw), max_raw)
            return
        half = np.int64(1) << (shift - 1)
        mask = (np.int64(1) << shift) - 1
        for i in range(n):
            for j in range(m):
                v = acc[i, j]
                q = v >> shift
                r = v & mask
                if r > half or (r == half and (q & 1) == 1):
                    q += 1
                out[i, j] = min(max(q, min_raw), max_raw)

    @njit(cache=True)
    def _nb_sat_add(dst, add, min_raw, max_raw):
        n, m = dst.shape
        for i in range(n):
            for j in range(m):
                v = dst[i, j] + add[i, j]
                dst[i, j] = min(max(v, min_raw), max_raw)

    return {
        "matmul_accum": _nb_matmul_accum,
        "matmul_abt_accum": _nb_matmul_abt_accum,
        "requant_shift": _nb_requant_shift,
        "sat_add": _nb_sat_add,
    }


def _resolve_backend():
    choice = os.environ.get(_ENV_VAR, "").strip().lower()
    if choice not in ("", "numba", "numpy"):
        raise ValueError("%s must be 'numba' or 'numpy' (got %r)" % (_ENV_VAR, choice))
    if choice == "numpy":
        return "numpy", _NUMPY_IMPL
    try:
        impl = _build_numba_impl()
        return "numba", impl
    except ImportError:
        if choice == "numba":
            raise
        return "numpy", _NUMPY_IMPL


BACKEND, _IMPL = _resolve_backend()

matmul_accum = _IMPL["matmul_accum"]
matmul_abt_accum = _IMPL["matmul_abt_accum"]
requant_shift = _IMPL["requant_shift"]
sat_add = _IMPL["sat_add"]


def active_backend() -> str:
    return BACKEND
