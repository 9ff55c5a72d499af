"""Point-sampling kernels: nearest, multilinear, and cubic Lagrange.

The semi-Lagrangian solvers evaluate fields at millions of off-grid points
per time step, so these gathers are the package's hot loop. Each kernel has
a numba ``@njit`` implementation and a vectorized numpy twin; set the
environment variable ``FLOWREG_NO_NUMBA=1`` (or run without numba installed)
to select the numpy path. ``bench/interp_bench.py`` compares the two.

Query coordinates are fractional array indices, wrapped periodically inside
the kernels, so callers may pass any real value. All kernels reproduce grid
values exactly at integer query points.
"""
from __future__ import annotations

import os

import numpy as np

__all__ = ["USING_NUMBA", "sample_nd"]

_HAS_NUMBA = False
if os.environ.get("FLOWREG_NO_NUMBA", "").strip() not in ("1", "true", "yes"):
    try:
        import numba
        from numba import njit, prange

        _HAS_NUMBA = True
    except ImportError:  # pragma: no cover - exercised via env flag instead
        _HAS_NUMBA = False

USING_NUMBA = _HAS_NUMBA


def set_num_threads(n: int) -> None:
    if USING_NUMBA and n > 0:
        numba.set_num_threads(n)


def _cubic_weights_np(t):
    """Lagrange cubic weights for nodes at offsets (-1, 0, 1, 2)."""
    w0 = -t * (t - 1.0) * (t - 2.0) / 6.0
    w1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0
    w2 = -(t + 1.0) * t * (t - 2.0) / 2.0
    w3 = (t + 1.0) * t * (t - 1.0) / 6.0
    return w0, w1, w2, w3


# ---------------------------------------------------------------------------
# numpy fallbacks
# ---------------------------------------------------------------------------


def _nearest_np(values, qs, out):
    n = values.shape
    idx = tuple(np.floor(qs[i] + 0.5).astype(np.int64) % n[i] for i in range(len(n)))
    out[:] = values[idx]


def _linear_np(values, qs, out):
    d = len(values.shape)
    n = values.shape
    base = [np.floor(qs[i]).astype(np.int64) for i in range(d)]
    frac = [qs[i] - base[i] for i in range(d)]
    out[:] = 0.0
    for corner in range(1 << d):
        w = 1.0
        idx = []
        for i in range(d):
            bit = (corner >> i) & 1
            w = w * (frac[i] if bit else (1.0 - frac[i]))
            idx.append((base[i] + bit) % n[i])
        out += w * values[tuple(idx)]


def _cubic_np(values, qs, out):
    d = len(values.shape)
    n = values.shape
    base = [np.floor(qs[i]).astype(np.int64) for i in range(d)]
    weights = [_cubic_weights_np(qs[i] - base[i]) for i in range(d)]
    idx = [
        [(base[i] + off - 1) % n[i] for off in range(4)]
        for i in range(d)
    ]
    out[:] = 0.0
    if d == 2:
        for a in range(4):
            for b in range(4):
                out += weights[0][a] * weights[1][b] * values[idx[0][a], idx[1][b]]
    else:
        for a in range(4):
            for b in range(4):
                wab = weights[0][a] * weights[1][b]
                for c in range(4):
                    out += wab * weights[2][c] * values[idx[0][a], idx[1][b], idx[2][c]]


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

if _HAS_NUMBA:

    @njit(cache=True, parallel=True)
    def _nearest_2d(values, q0, q1, out):
        n0, n1 = values.shape
        for p in prange(q0.shape[0]):
            i = np.int64(np.floor(q0[p] + 0.5)) % n0
            j = np.int64(np.floor(q1[p] + 0.5)) % n1
            out[p] = values[i, j]

    @njit(cache=True, parallel=True)
    def _nearest_3d(values, q0, q1, q2, out):
        n0, n1, n2 = values.shape
        for p in prange(q0.shape[0]):
            i = np.int64(np.floor(q0[p] + 0.5)) % n0
            j = np.int64(np.floor(q1[p] + 0.5)) % n1
            k = np.int64(np.floor(q2[p] + 0.5)) % n2
            out[p] = values[i, j, k]

    @njit(cache=True, parallel=True)
    def _linear_2d(values, q0, q1, out):
        n0, n1 = values.shape
        for p in prange(q0.shape[0]):
            f0 = np.floor(q0[p])
            f1 = np.floor(q1[p])
            t0 = q0[p] - f0
            t1 = q1[p] - f1
            i0 = np.int64(f0) % n0
            j0 = np.int64(f1) % n1
            i1 = (i0 + 1) % n0
            j1 = (j0 + 1) % n1
            out[p] = (
                (1.0 - t0) * ((1.0 - t1) * values[i0, j0] + t1 * values[i0, j1])
                + t0 * ((1.0 - t1) * values[i1, j0] + t1 * values[i1, j1])
            )

    @njit(cache=True, parallel=True)
    def _linear_3d(values, q0, q1, q2, out):
        n0, n1, n2 = values.shape
        for p in prange(q0.shape[0]):
            f0 = np.floor(q0[p])
            f1 = np.floor(q1[p])
            f2 = np.floor(q2[p])
            t0 = q0[p] - f0
            t1 = q1[p] - f1
            t2 = q2[p] - f2
            i0 = np.int64(f0) % n0
            j0 = np.int64(f1) % n1
            k0 = np.int64(f2) % n2
            i1 = (i0 + 1) % n0
            j1 = (j0 + 1) % n1
            k1 = (k0 + 1) % n2
            c00 = (1.0 - t2) * values[i0, j0, k0] + t2 * values[i0, j0, k1]
            c01 = (1.0 - t2) * values[i0, j1, k0] + t2 * values[i0, j1, k1]
            c10 = (1.0 - t2) * values[i1, j0, k0] + t2 * values[i1, j0, k1]
            c11 = (1.0 - t2) * values[i1, j1, k0] + t2 * values[i1, j1, k1]
            out[p] = (
                (1.0 - t0) * ((1.0 - t1) * c00 + t1 * c01)
                + t0 * ((1.0 - t1) * c10 + t1 * c11)
            )

    @njit(cache=True, inline="always")
    def _cubic_w(t, w):
        w[0] = -t * (t - 1.0) * (t - 2.0) / 6.0
        w[1] = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0
        w[2] = -(t + 1.0) * t * (t - 2.0) / 2.0
        w[3] = (t + 1.0) * t * (t - 1.0) / 6.0

    @njit(cache=True, parallel=True)
    def _cubic_2d(values, q0, q1, out):
        n0, n1 = values.shape
        for p in prange(q0.shape[0]):
            f0 = np.floor(q0[p])
            f1 = np.floor(q1[p])
            w0 = np.empty(4)
            w1 = np.empty(4)
            _cubic_w(q0[p] - f0, w0)
            _cubic_w(q1[p] - f1, w1)
            b0 = np.int64(f0) - 1
            b1 = np.int64(f1) - 1
            acc = 0.0
            for a in range(4):
                ia = (b0 + a) % n0
                row = 0.0
                for b in range(4):
                    jb = (b1 + b) % n1
                    row += w1[b] * values[ia, jb]
                acc += w0[a] * row
            out[p] = acc

    @njit(cache=True, parallel=True)
    def _cubic_3d(values, q0, q1, q2, out):
        n0, n1, n2 = values.shape
        for p in prange(q0.shape[0]):
            f0 = np.floor(q0[p])
            f1 = np.floor(q1[p])
            f2 = np.floor(q2[p])
            w0 = np.empty(4)
            w1 = np.empty(4)
            w2 = np.empty(4)
            _cubic_w(q0[p] - f0, w0)
            _cubic_w(q1[p] - f1, w1)
            _cubic_w(q2[p] - f2, w2)
            b0 = np.int64(f0) - 1
            b1 = np.int64(f1) - 1
            b2 = np.int64(f2) - 1
            acc = 0.0
            for a in range(4):
                ia = (b0 + a) % n0
                plane = 0.0
                for b in range(4):
                    jb = (b1 + b) % n1
                    row = 0.0
                    for c in range(4):
                        kc = (b2 + c) % n2
                        row += w2[c] * values[ia, jb, kc]
                    plane += w1[b] * row
                acc += w0[a] * plane
            out[p] = acc


def sample_nd(values: np.ndarray, qs: list[np.ndarray], method: str) -> np.ndarray:
    """Sample ``values`` at fractional-index query points.

    ``qs`` holds one flat float array per axis. Returns a flat array with
    the dtype of ``values`` (nearest keeps integer dtypes intact).
    """
    d = values.ndim
    npts = qs[0].shape[0]
    if method == "nearest":
        out = np.empty(npts, dtype=values.dtype)
        if USING_NUMBA:
            (_nearest_2d if d == 2 else _nearest_3d)(values, *qs, out)
        else:
            _nearest_np(values, qs, out)
        return out
    out_dtype = values.dtype if values.dtype.kind == "f" else np.dtype(np.float64)
    out = np.empty(npts, dtype=out_dtype)
    if method == "linear":
        if USING_NUMBA:
            (_linear_2d if d == 2 else _linear_3d)(values, *qs, out)
        else:
            _linear_np(values, qs, out)
    elif method == "cubic":
        if USING_NUMBA:
            (_cubic_2d if d == 2 else _cubic_3d)(values, *qs, out)
        else:
            _cubic_np(values, qs, out)
    else:
        raise ValueError(f"unknown interpolation method {method!r}")
    return out
