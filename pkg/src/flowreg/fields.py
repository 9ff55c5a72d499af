"""Periodic grid geometry and field containers.

All fields live on a rectangular mesh over the periodic box [-pi, pi)^d.
Node coordinates follow x_l = ((n/2) - l) * h for 1-based multi-indices l,
so coordinates *decrease* as the array index grows. Every operator in this
package that cares about orientation (derivatives, interpolation, departure
points) is written against this convention; see :func:`Grid.axis_coords`.

Pseudo-time lives on [0, 1] split into ``n_t`` uniform steps of size
``h_t = 1/n_t``. Time integrals use the trapezoidal rule.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField",
    "TimeSeriesField",
    "TensorField",
    "mesh_coordinates",
    "l2_inner",
    "norm_l2",
    "norm_inf",
    "time_integral",
    "set_sequential_reduction",
]

TWO_PI = 2.0 * np.pi

# Reduction mode for inner products. "pairwise" uses numpy's deterministic
# pairwise summation; "sequential" pins a strict left-to-right accumulation
# so results can be reproduced by a naive loop bit for bit.
_REDUCTION = "pairwise"


def set_sequential_reduction(enabled: bool) -> None:
    """Pin inner-product reductions to strict sequential order."""
    global _REDUCTION
    _REDUCTION = "sequential" if enabled else "pairwise"


def _sequential_sum(a: np.ndarray) -> float:
    acc = 0.0
    for x in a.ravel(order="C"):
        acc = acc + float(x)
    return acc


@dataclass(frozen=True)
class Grid:
    """Periodic rectangular mesh: voxel counts, spacings, and time steps.

    n_i must be even and >= 8 so the box is split symmetrically around the
    origin; h_i * n_i = 2*pi. ``dtype`` is the working precision for every
    field allocated on this grid.
    """

    n: tuple[int, ...]
    n_t: int = 4
    dtype: np.dtype = field(default=np.dtype(np.float64))

    def __post_init__(self):
        n = tuple(int(v) for v in self.n)
        object.__setattr__(self, "n", n)
        if len(n) not in (2, 3):
            raise ValueError(f"grid must be 2D or 3D, got d={len(n)}")
        for ni in n:
            if ni < 8 or ni % 2 != 0:
                raise ValueError(f"voxel counts must be even and >= 8, got {ni}")
        if self.n_t < 1:
            raise ValueError(f"n_t must be >= 1, got {self.n_t}")
        dt = np.dtype(self.dtype)
        if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
            raise ValueError(f"dtype must be float32 or float64, got {dt}")
        object.__setattr__(self, "dtype", dt)

    @property
    def d(self) -> int:
        return len(self.n)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(TWO_PI / ni for ni in self.n)

    @property
    def h_t(self) -> float:
        return 1.0 / self.n_t

    @property
    def cell_volume(self) -> float:
        vol = 1.0
        for hi in self.h:
            vol *= hi
        return vol

    @property
    def num_voxels(self) -> int:
        return int(np.prod(self.n))

    def axis_coords(self, axis: int) -> np.ndarray:
        """Node coordinates along ``axis`` in array-index order.

        Index j holds x = (n/2 - (j+1)) * h, i.e. coordinates run from
        pi - h down to -pi.
        """
        ni = self.n[axis]
        hi = TWO_PI / ni
        j = np.arange(ni, dtype=self.dtype)
        return ((ni // 2) - (j + 1.0)) * np.asarray(hi, dtype=self.dtype)

    def coord_arrays(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per axis."""
        return list(
            np.meshgrid(*[self.axis_coords(i) for i in range(self.d)], indexing="ij", sparse=True)
        )

    def with_time_steps(self, n_t: int) -> "Grid":
        return Grid(self.n, n_t=n_t, dtype=self.dtype)

    def with_dtype(self, dtype) -> "Grid":
        return Grid(self.n, n_t=self.n_t, dtype=np.dtype(dtype))

    def coarsen(self) -> "Grid":
        """Half-resolution grid (per axis); requires n_i divisible by 4."""
        for ni in self.n:
            if ni % 4 != 0:
                raise ValueError(f"coarsening requires n_i divisible by 4, got {ni}")
        return Grid(tuple(ni // 2 for ni in self.n), n_t=self.n_t, dtype=self.dtype)


def mesh_coordinates(grid: Grid, l: Sequence[int]) -> np.ndarray:
    """Physical coordinates of the node at 1-based multi-index ``l``."""
    l = tuple(int(v) for v in l)
    if len(l) != grid.d:
        raise ValueError(f"index has {len(l)} entries for a {grid.d}D grid")
    for li, ni in zip(l, grid.n):
        if not (1 <= li <= ni):
            raise IndexError(f"mesh index {li} outside [1, {ni}]")
    return np.array(
        [((ni // 2) - li) * hi for li, ni, hi in zip(l, grid.n, grid.h)], dtype=grid.dtype
    )


def _check_values(grid: Grid, values: np.ndarray, what: str) -> np.ndarray:
    values = np.asarray(values)
    if values.shape != grid.n:
        raise ValueError(f"{what} shape {values.shape} does not match grid {grid.n}")
    if values.dtype != grid.dtype:
        values = values.astype(grid.dtype)
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains non-finite values")
    return values


@dataclass
class ScalarField:
    """Voxel scalar values on a grid (C-order, last axis fastest)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = _check_values(self.grid, self.values, "scalar field")

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.n, dtype=grid.dtype))

    @classmethod
    def full(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.n, value, dtype=grid.dtype))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ScalarField":
        """Sample ``fn(*coords)`` at the mesh nodes."""
        coords = grid.coord_arrays()
        return cls(grid, np.broadcast_to(fn(*coords), grid.n).astype(grid.dtype))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


@dataclass
class VectorField:
    """d-component vector field; ``data`` has shape (d, *n)."""

    grid: Grid
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.shape != (self.grid.d, *self.grid.n):
            raise ValueError(
                f"vector field shape {data.shape} does not match (d, *n)={(self.grid.d, *self.grid.n)}"
            )
        if data.dtype != self.grid.dtype:
            data = data.astype(self.grid.dtype)
        if not np.all(np.isfinite(data)):
            raise ValueError("vector field contains non-finite values")
        self.data = data

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, np.zeros((grid.d, *grid.n), dtype=grid.dtype))

    @classmethod
    def from_components(cls, components: Sequence[ScalarField]) -> "VectorField":
        grid = components[0].grid
        if len(components) != grid.d:
            raise ValueError(f"need {grid.d} components, got {len(components)}")
        for c in components:
            if c.grid != grid:
                raise ValueError("all components must share one grid")
        return cls(grid, np.stack([c.values for c in components]))

    @classmethod
    def constant(cls, grid: Grid, vec: Sequence[float]) -> "VectorField":
        data = np.empty((grid.d, *grid.n), dtype=grid.dtype)
        for i, c in enumerate(vec):
            data[i].fill(c)
        return cls(grid, data)

    def component(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.data[i].copy())

    def copy(self) -> "VectorField":
        return VectorField(self.grid, self.data.copy())


@dataclass
class TimeSeriesField:
    """Scalar field stored at the n_t+1 time points t_j = j * h_t."""

    grid: Grid
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.shape != (self.grid.n_t + 1, *self.grid.n):
            raise ValueError(
                f"time series shape {data.shape} does not match (n_t+1, *n)="
                f"{(self.grid.n_t + 1, *self.grid.n)}"
            )
        if data.dtype != self.grid.dtype:
            data = data.astype(self.grid.dtype)
        if not np.all(np.isfinite(data)):
            raise ValueError("time series contains non-finite values")
        self.data = data

    @classmethod
    def from_slices(cls, grid: Grid, slices: Iterable[ScalarField]) -> "TimeSeriesField":
        arrs = [s.values.copy() for s in slices]
        return cls(grid, np.stack(arrs))

    @property
    def num_slices(self) -> int:
        return self.data.shape[0]

    def slice(self, j: int) -> ScalarField:
        return ScalarField(self.grid, self.data[j].copy())

    def final(self) -> ScalarField:
        return self.slice(self.num_slices - 1)


@dataclass
class TensorField:
    """d x d tensor per voxel; ``data`` has shape (d, d, *n)."""

    grid: Grid
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        d = self.grid.d
        if data.shape != (d, d, *self.grid.n):
            raise ValueError(
                f"tensor field shape {data.shape} does not match (d, d, *n)={(d, d, *self.grid.n)}"
            )
        if data.dtype != self.grid.dtype:
            data = data.astype(self.grid.dtype)
        if not np.all(np.isfinite(data)):
            raise ValueError("tensor field contains non-finite values")
        self.data = data

    @classmethod
    def identity(cls, grid: Grid) -> "TensorField":
        d = grid.d
        data = np.zeros((d, d, *grid.n), dtype=grid.dtype)
        for i in range(d):
            data[i, i] = 1.0
        return cls(grid, data)

    def entry(self, i: int, j: int) -> ScalarField:
        return ScalarField(self.grid, self.data[i, j].copy())

    def determinant(self) -> ScalarField:
        a = self.data
        if self.grid.d == 2:
            det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        else:
            det = (
                a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
                - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
                + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0])
            )
        return ScalarField(self.grid, det)


def _same_grid(a, b) -> None:
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


def l2_inner(a, b) -> float:
    """Discrete L2 inner product: sum(a*b) times the uniform cell volume.

    Accepts scalar or vector fields (vector fields sum over components).
    """
    _same_grid(a, b)
    if isinstance(a, VectorField) != isinstance(b, VectorField):
        raise ValueError("cannot mix scalar and vector fields")
    x = a.data if isinstance(a, VectorField) else a.values
    y = b.data if isinstance(b, VectorField) else b.values
    prod = x * y
    if _REDUCTION == "sequential":
        total = _sequential_sum(prod)
    else:
        total = float(np.sum(prod))
    return total * a.grid.cell_volume


def norm_l2(a) -> float:
    return float(np.sqrt(max(l2_inner(a, a), 0.0)))


def norm_inf(a) -> float:
    x = a.data if isinstance(a, VectorField) else a.values
    return float(np.max(np.abs(x)))


def time_integral(series):
    """Trapezoidal integral over [0, 1] of a sequence of field slices.

    Accepts a TimeSeriesField (returns a ScalarField) or a sequence of
    ScalarFields / VectorFields (returns a field of the same kind). Weights
    are (h_t/2, h_t, ..., h_t, h_t/2), exact for slice data affine in t_j.
    """
    if isinstance(series, TimeSeriesField):
        slices = [series.data[j] for j in range(series.num_slices)]
        grid = series.grid
        wrap = lambda arr: ScalarField(grid, arr)
    else:
        slices_f = list(series)
        if len(slices_f) < 2:
            raise ValueError("time integral needs at least 2 slices")
        grid = slices_f[0].grid
        if isinstance(slices_f[0], VectorField):
            slices = [s.data for s in slices_f]
            wrap = lambda arr: VectorField(grid, arr)
        else:
            slices = [s.values for s in slices_f]
            wrap = lambda arr: ScalarField(grid, arr)
        for s in slices_f:
            if s.grid != grid:
                raise ValueError("slices live on different grids")
    m = len(slices)
    if m < 2:
        raise ValueError("time integral needs at least 2 slices")
    h_t = 1.0 / (m - 1)
    acc = 0.5 * h_t * (slices[0] + slices[-1])
    for j in range(1, m - 1):
        acc = acc + h_t * slices[j]
    return wrap(acc)
