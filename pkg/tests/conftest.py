import numpy as np
import pytest

from flowreg.fields import ScalarField, VectorField


def coords(grid):
    return [np.broadcast_to(c, grid.n) for c in grid.coord_arrays()]


def bump_image(grid, kappa=2.0, centers=None, amp=1.0):
    """Smooth periodic bump (product of von Mises factors)."""
    if centers is None:
        centers = [0.0] * grid.d
    vals = np.full(grid.n, amp, dtype=np.float64)
    for c, x in zip(centers, coords(grid)):
        vals = vals * np.exp(kappa * (np.cos(x - c) - 1.0))
    return ScalarField(grid, vals)


def vortex_velocity(grid, amp=1.0, phases=(0.0, 0.0)):
    """Divergence-free single-cell vortex from a cosine stream function."""
    x = coords(grid)
    p0, p1 = phases
    data = np.zeros((grid.d, *grid.n))
    data[0] = -amp * np.cos(x[0] - p0) * np.sin(x[1] - p1)
    data[1] = amp * np.sin(x[0] - p0) * np.cos(x[1] - p1)
    return VectorField(grid, data)


def bandlimited_vector(grid, rng, amp=1.0, kmax=3, modes=6):
    """Random velocity with spectral content only below ``kmax``."""
    data = np.zeros((grid.d, *grid.n))
    for i in range(grid.d):
        spec = np.zeros(grid.n, dtype=complex)
        for _ in range(modes):
            k = tuple(int(rng.integers(0, kmax + 1)) for _ in range(grid.d))
            spec[k] = rng.standard_normal() + 1j * rng.standard_normal()
        f = np.fft.ifftn(spec).real
        peak = np.abs(f).max()
        if peak > 0:
            f /= peak
        data[i] = amp * f
    return VectorField(grid, data)


def rk4_flow(points, v_field, t_total, steps, method="cubic"):
    """Reference flow-map integrator: dy/dt = v(y) with RK4 at tiny steps.

    ``points`` has shape (d, N); interpolates the velocity with the chosen
    method at every stage.
    """
    from flowreg.interp import fractional_index, sample_values

    grid = v_field.grid
    y = points.astype(np.float64).copy()
    dt = t_total / steps

    def vel(p):
        qs = fractional_index(grid, p)
        return np.stack(
            [sample_values(v_field.data[i], qs, method) for i in range(grid.d)]
        ).reshape(p.shape)

    for _ in range(steps):
        k1 = vel(y)
        k2 = vel(y + 0.5 * dt * k1)
        k3 = vel(y + 0.5 * dt * k2)
        k4 = vel(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
