"""Synthetic registration problems with known ground-truth velocities.

Each case builds a smooth periodic template (a sum of bump functions), a
band-limited velocity, and a reference image produced by a high-accuracy
transport of the template (64 time steps, cubic interpolation). The
rotation and swirl velocities derive from stream functions, so they are
divergence-free and volume preserving; the compress case is a strong
gradient flow built to break the determinant bounds at eps_det = 0.1.
"""
from __future__ import annotations

import numpy as np

from .fields import Grid, ScalarField, VectorField
from .transport import solve_state

__all__ = ["SYNTH_CASES", "synth_case"]

SYNTH_CASES = ("translation", "rotation", "swirl", "compress")

_REFERENCE_STEPS = 64

# det F(1) along the compressive axis reaches exp(-amp) at the sink, well
# below the 0.1 determinant bound
COMPRESS_AMPLITUDE = 3.0


def _bump_image(grid: Grid, rng: np.random.Generator, bumps: int = 6) -> ScalarField:
    coords = grid.coord_arrays()
    vals = np.zeros(grid.n, dtype=np.float64)
    for _ in range(bumps):
        centers = rng.uniform(-np.pi, np.pi, size=grid.d)
        kappa = rng.uniform(1.0, 2.5)
        amp = rng.uniform(0.4, 1.0)
        bump = np.ones(grid.n, dtype=np.float64)
        for c, x in zip(centers, coords):
            bump = bump * np.exp(kappa * (np.cos(x - c) - 1.0))
        vals += amp * bump
    vals -= vals.min()
    peak = vals.max()
    if peak > 0:
        vals /= peak
    return ScalarField(grid, vals.astype(grid.dtype))


def _rotation_velocity(grid: Grid, amp: float, phases=(0.0, 0.0)) -> VectorField:
    # stream function amp*cos(x1 - p0)*cos(x2 - p1): a single vortex cell,
    # divergence free by construction
    coords = grid.coord_arrays()
    x0 = np.broadcast_to(coords[0], grid.n)
    x1 = np.broadcast_to(coords[1], grid.n)
    p0, p1 = phases
    v0 = -amp * np.cos(x0 - p0) * np.sin(x1 - p1)
    v1 = amp * np.sin(x0 - p0) * np.cos(x1 - p1)
    data = np.zeros((grid.d, *grid.n), dtype=grid.dtype)
    data[0] = v0
    data[1] = v1
    if grid.d == 3:
        x2 = np.broadcast_to(coords[2], grid.n)
        mod = 1.0 + 0.3 * np.cos(x2)
        data[0] *= mod
        data[1] *= mod
    return VectorField(grid, data)


def _swirl_velocity(grid: Grid, amp: float, rng: np.random.Generator) -> VectorField:
    # two superposed vortex cells with seeded phases, modes <= 2
    v = _rotation_velocity(grid, amp, phases=tuple(rng.uniform(-np.pi, np.pi, size=2)))
    coords = grid.coord_arrays()
    x0 = np.broadcast_to(coords[0], grid.n)
    x1 = np.broadcast_to(coords[1], grid.n)
    q0, q1 = rng.uniform(-np.pi, np.pi, size=2)
    b = 0.5 * amp
    data = v.data.copy()
    data[0] += -b * 0.5 * np.cos(2.0 * (x0 - q0)) * np.sin(x1 - q1)
    data[1] += b * np.sin(2.0 * (x0 - q0)) * np.cos(x1 - q1)
    return VectorField(grid, data)


def _compress_velocity(grid: Grid, amp: float) -> VectorField:
    coords = grid.coord_arrays()
    x0 = np.broadcast_to(coords[0], grid.n)
    data = np.zeros((grid.d, *grid.n), dtype=grid.dtype)
    data[0] = amp * np.sin(x0)
    return VectorField(grid, data)


def synth_case(name: str, n: int, seed: int = 0, d: int = 2, n_t: int = 4):
    """Deterministic synthetic pair: (template, reference, true velocity).

    ``n`` must be a power of two >= 32. The reference is the template
    transported under the true velocity with 64 time steps and cubic
    interpolation; the returned fields live on a grid with ``n_t`` steps.
    """
    if name not in SYNTH_CASES:
        raise ValueError(f"unknown synthetic case {name!r}")
    if n < 32 or (n & (n - 1)) != 0:
        raise ValueError(f"n must be a power of two >= 32, got {n}")
    rng = np.random.default_rng(seed)
    grid = Grid((n,) * d, n_t=n_t)
    m0 = _bump_image(grid, rng)

    if name == "translation":
        shift = rng.uniform(0.3, 0.7, size=d) * rng.choice((-1.0, 1.0), size=d)
        v = VectorField.constant(grid, shift)
    elif name == "rotation":
        v = _rotation_velocity(grid, 0.7)
    elif name == "swirl":
        v = _swirl_velocity(grid, 0.6, rng)
    else:
        v = _compress_velocity(grid, COMPRESS_AMPLITUDE)

    fine = grid.with_time_steps(_REFERENCE_STEPS)
    m0_fine = ScalarField(fine, m0.values)
    v_fine = VectorField(fine, v.data)
    m1_fine = solve_state(m0_fine, v_fine, method="cubic").final()
    m1 = ScalarField(grid, m1_fine.values)
    return m0, m1, v
