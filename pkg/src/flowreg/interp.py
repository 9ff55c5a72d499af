"""Interpolation of fields at arbitrary (periodically wrapped) points."""
from __future__ import annotations

import numpy as np

from . import _kernels
from .fields import Grid, ScalarField, VectorField

__all__ = ["INTERP_METHODS", "interpolate", "fractional_index", "sample_values"]

INTERP_METHODS = ("nearest", "linear", "cubic")


def check_method(method: str) -> str:
    if method == "cubic-lagrange":
        method = "cubic"
    if method not in INTERP_METHODS:
        raise ValueError(f"unknown interpolation method {method!r}")
    return method


def fractional_index(grid: Grid, points: np.ndarray) -> list[np.ndarray]:
    """Map physical coordinates (d, ...) to flat fractional array indices.

    Index j along an axis holds x = (n/2 - (j+1)) * h, so q = n/2 - 1 - x/h.
    Wrapping is left to the sampling kernels.
    """
    if points.shape[0] != grid.d:
        raise ValueError(f"points have {points.shape[0]} components on a {grid.d}D grid")
    qs = []
    for i in range(grid.d):
        q = (grid.n[i] / 2.0 - 1.0) - points[i] / grid.h[i]
        qs.append(np.ascontiguousarray(q.ravel(), dtype=np.float64))
    return qs


def sample_values(values: np.ndarray, qs: list[np.ndarray], method: str) -> np.ndarray:
    """Sample a voxel array at precomputed fractional indices (flat output)."""
    return _kernels.sample_nd(values, qs, method)


def interpolate(u: ScalarField, points: VectorField, method: str = "cubic") -> ScalarField:
    """Value of the chosen interpolant of ``u`` at each point.

    Points may hold any real coordinates; they wrap modulo 2*pi. All
    methods reproduce grid values exactly at the nodes.
    """
    method = check_method(method)
    if u.grid != points.grid:
        raise ValueError("field and points live on different grids")
    qs = fractional_index(u.grid, points.data)
    out = sample_values(u.values, qs, method)
    return ScalarField(u.grid, out.reshape(u.grid.n).astype(u.grid.dtype))


def interpolate_vector(v: VectorField, points: VectorField, method: str = "cubic") -> VectorField:
    method = check_method(method)
    qs = fractional_index(v.grid, points.data)
    out = np.empty_like(v.data)
    for i in range(v.grid.d):
        out[i] = sample_values(v.data[i], qs, method).reshape(v.grid.n)
    return VectorField(v.grid, out)
