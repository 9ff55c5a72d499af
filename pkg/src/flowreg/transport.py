"""Semi-Lagrangian solvers for the transport equations of the pipeline.

Every equation is reduced to d_t u = f along characteristics of the
stationary velocity; one step traces the characteristic backward with an
RK2 (midpoint-of-endpoints) rule and integrates the source with a Heun
corrector u(t+, x) = u(t, y) + h_t*(f0 + f1)/2. Homogeneous transport is a
pure interpolation step. Backward-in-time solves reuse the forward
departure-point routine with the velocity negated; since the velocity is
stationary, one departure map serves every time step.

Source-term fields (divergence, gradients, Jacobians) are always evaluated
on the regular mesh and interpolated to departure points, never
differentiated off-grid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffops import divergence, gradient, jacobian
from .fields import Grid, ScalarField, TensorField, TimeSeriesField, VectorField
from .interp import check_method, fractional_index, interpolate_vector, sample_values

__all__ = [
    "Trajectory",
    "departure_points",
    "solve_state",
    "solve_adjoint",
    "solve_inc_state",
    "solve_inc_adjoint_gn",
    "solve_deformation_tensor",
    "compose_trajectory",
]


def departure_points(v: VectorField, h_t: float, method: str = "cubic") -> VectorField:
    """One-step departure points: y = x - (h_t/2) * (v(x) + v(x - h_t v(x)))."""
    grid = v.grid
    coords = grid.coord_arrays()
    x = np.stack([np.broadcast_to(c, grid.n) for c in coords]).astype(grid.dtype)
    ytilde = VectorField(grid, x - h_t * v.data)
    v_at = interpolate_vector(v, ytilde, method)
    y = x - 0.5 * h_t * (v.data + v_at.data)
    return VectorField(grid, y)


@dataclass
class Trajectory:
    """Departure maps for one velocity: per-step and composed over [0, 1].

    The per-step map is shared by all steps (stationary velocity). With
    v = 0 both maps equal the mesh itself.
    """

    grid: Grid
    step_points: VectorField
    composed: VectorField | None = None

    @classmethod
    def compute(cls, v: VectorField, method: str = "cubic") -> "Trajectory":
        return cls(v.grid, departure_points(v, v.grid.h_t, method))


class _StepSampler:
    """Caches fractional indices of one departure map for repeated gathers."""

    def __init__(self, points: VectorField, method: str):
        self.grid = points.grid
        self.method = check_method(method)
        self.qs = fractional_index(self.grid, points.data)

    def scalar(self, values: np.ndarray) -> np.ndarray:
        return sample_values(values, self.qs, self.method).reshape(self.grid.n)

    def stack(self, arrays: np.ndarray) -> np.ndarray:
        out = np.empty_like(arrays)
        for idx in np.ndindex(arrays.shape[: arrays.ndim - self.grid.d]):
            out[idx] = self.scalar(arrays[idx])
        return out


def solve_state(
    m0: ScalarField,
    v: VectorField,
    method: str = "cubic",
    trajectory: Trajectory | None = None,
) -> TimeSeriesField:
    """Transport ``m0`` with d_t m = 0; stores all n_t + 1 slices."""
    grid = m0.grid
    if trajectory is None:
        trajectory = Trajectory.compute(v, method)
    sampler = _StepSampler(trajectory.step_points, method)
    out = np.empty((grid.n_t + 1, *grid.n), dtype=grid.dtype)
    out[0] = m0.values
    for j in range(grid.n_t):
        out[j + 1] = sampler.scalar(out[j])
    return TimeSeriesField(grid, out)


def _negated(v: VectorField) -> VectorField:
    return VectorField(v.grid, -v.data)


def solve_adjoint(
    final: ScalarField,
    v: VectorField,
    method: str = "cubic",
    scheme: str = "fd8",
    back_trajectory: Trajectory | None = None,
    div_v: ScalarField | None = None,
) -> TimeSeriesField:
    """Continuity-equation transport of a final condition backward in time.

    Marches tau = 1 - t forward with velocity -v and source u * div(v); the
    returned slices are ordered by t, slice j at t_j, slice n_t = final.
    """
    grid = final.grid
    if back_trajectory is None:
        back_trajectory = Trajectory.compute(_negated(v), method)
    if div_v is None:
        div_v = divergence(v, scheme=scheme)
    sampler = _StepSampler(back_trajectory.step_points, method)
    div_at_y = sampler.scalar(div_v.values)
    div_at_x = div_v.values
    h_t = grid.h_t
    out = np.empty((grid.n_t + 1, *grid.n), dtype=grid.dtype)
    out[grid.n_t] = final.values
    for j in range(grid.n_t, 0, -1):
        u_y = sampler.scalar(out[j])
        f0 = u_y * div_at_y
        u_pred = u_y + h_t * f0
        f1 = u_pred * div_at_x
        out[j - 1] = u_y + 0.5 * h_t * (f0 + f1)
    return TimeSeriesField(grid, out)


def state_gradients(mseries: TimeSeriesField, scheme: str = "fd8") -> list[VectorField]:
    """Regular-mesh spatial gradients of every state slice."""
    grid = mseries.grid
    return [
        gradient(ScalarField(grid, mseries.data[j]), scheme=scheme)
        for j in range(mseries.num_slices)
    ]


def solve_inc_state(
    mseries: TimeSeriesField,
    v: VectorField,
    vtilde: VectorField,
    method: str = "cubic",
    scheme: str = "fd8",
    trajectory: Trajectory | None = None,
    grad_slices: list[VectorField] | None = None,
) -> TimeSeriesField:
    """Linearized state transport: d_t m~ = -grad(m) . v~, m~(0) = 0."""
    grid = mseries.grid
    if mseries.grid != v.grid or v.grid != vtilde.grid:
        raise ValueError("state series and velocities live on different grids")
    if trajectory is None:
        trajectory = Trajectory.compute(v, method)
    if grad_slices is None:
        grad_slices = state_gradients(mseries, scheme)
    if len(grad_slices) != mseries.num_slices:
        raise ValueError("need one gradient slice per state slice")
    sampler = _StepSampler(trajectory.step_points, method)
    vt_at_y = sampler.stack(vtilde.data)
    h_t = grid.h_t
    out = np.empty((grid.n_t + 1, *grid.n), dtype=grid.dtype)
    out[0] = 0.0
    for j in range(grid.n_t):
        gm_y = sampler.stack(grad_slices[j].data)
        f0 = -np.sum(gm_y * vt_at_y, axis=0)
        f1 = -np.sum(grad_slices[j + 1].data * vtilde.data, axis=0)
        out[j + 1] = sampler.scalar(out[j]) + 0.5 * h_t * (f0 + f1)
    return TimeSeriesField(grid, out)


def solve_inc_adjoint_gn(
    final: ScalarField,
    v: VectorField,
    method: str = "cubic",
    scheme: str = "fd8",
    back_trajectory: Trajectory | None = None,
    div_v: ScalarField | None = None,
) -> TimeSeriesField:
    """Incremental dual transport under the Gauss-Newton approximation.

    Dropping the dual-variable source leaves the same continuity equation
    as the adjoint solve; only the final condition differs.
    """
    return solve_adjoint(
        final, v, method=method, scheme=scheme, back_trajectory=back_trajectory, div_v=div_v
    )


def solve_deformation_tensor(
    v: VectorField,
    method: str = "cubic",
    scheme: str = "fd8",
    trajectory: Trajectory | None = None,
) -> TensorField:
    """Endpoint of d_t F = (grad v) F with F(0) = I, entrywise SL + Heun."""
    grid = v.grid
    if trajectory is None:
        trajectory = Trajectory.compute(v, method)
    sampler = _StepSampler(trajectory.step_points, method)
    jac = jacobian(v, scheme=scheme)
    jac_y = sampler.stack(jac)
    h_t = grid.h_t
    d = grid.d
    F = np.zeros((d, d, *grid.n), dtype=grid.dtype)
    for i in range(d):
        F[i, i] = 1.0
    for _ in range(grid.n_t):
        F_y = sampler.stack(F)
        f0 = np.einsum("ik...,kj...->ij...", jac_y, F_y)
        F_pred = F_y + h_t * f0
        f1 = np.einsum("ik...,kj...->ij...", jac, F_pred)
        F = F_y + 0.5 * h_t * (f0 + f1)
    return TensorField(grid, F)


def compose_trajectory(
    v: VectorField, method: str = "cubic", trajectory: Trajectory | None = None
) -> VectorField:
    """Full-interval departure map: the per-step map composed n_t times.

    The per-step displacement (smooth and periodic) is interpolated at the
    running point set; interpolating the map itself would wrap its identity
    part discontinuously.
    """
    grid = v.grid
    if trajectory is None:
        trajectory = Trajectory.compute(v, method)
    coords = grid.coord_arrays()
    x = np.stack([np.broadcast_to(c, grid.n) for c in coords]).astype(grid.dtype)
    disp = trajectory.step_points.data - x
    points = x + disp
    for _ in range(grid.n_t - 1):
        qs = fractional_index(grid, points)
        step = np.empty_like(disp)
        for i in range(grid.d):
            step[i] = sample_values(disp[i], qs, check_method(method)).reshape(grid.n)
        points = points + step
    trajectory.composed = VectorField(grid, points)
    return trajectory.composed
