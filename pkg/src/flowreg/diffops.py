"""Spectral and finite-difference differential operators.

First derivatives come in two flavors: an 8th-order centered finite
difference stencil with periodic wrap (the default inside the transport
solvers) and an exact pseudo-spectral derivative. Higher-order operators
(regularization symbols, inverse Laplacians, the divergence projection,
restriction/prolongation, band filters) are all spectral.

Sign convention: node coordinates decrease with array index (see
``fields.Grid``), so a physical mode exp(i*k*x) sits in DFT bin -k. First
derivatives therefore carry the multiplier -i*m per DFT bin m; even-order
symbols are unaffected.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Grid, ScalarField, VectorField

__all__ = [
    "RegOperatorSpec",
    "IncompressibilityMode",
    "spectral_gradient",
    "fd8_gradient",
    "gradient",
    "divergence",
    "laplacian",
    "apply_reg_operator",
    "apply_inv_reg_operator",
    "apply_inv_sqrt_reg_operator",
    "reg_symbol",
    "incompressibility_multiplier",
    "project_body_force",
    "restrict",
    "prolong",
    "low_pass",
    "high_pass",
    "low_pass_mask",
]


def _int_freqs(grid: Grid, axis: int) -> np.ndarray:
    ni = grid.n[axis]
    return np.fft.fftfreq(ni, d=1.0 / ni)


def _freq_grids(grid: Grid) -> list[np.ndarray]:
    """Broadcastable integer DFT frequencies per axis."""
    return list(
        np.meshgrid(*[_int_freqs(grid, i) for i in range(grid.d)], indexing="ij", sparse=True)
    )


def _deriv_multiplier(grid: Grid, axis: int) -> np.ndarray:
    """Spectral multiplier for d/dx_axis; Nyquist mode zeroed."""
    ni = grid.n[axis]
    m = _int_freqs(grid, axis)
    mult = -1j * m
    mult[ni // 2] = 0.0
    shape = [1] * grid.d
    shape[axis] = ni
    return mult.reshape(shape)


def spectral_gradient(u: ScalarField) -> VectorField:
    grid = u.grid
    uh = np.fft.fftn(u.values)
    out = np.empty((grid.d, *grid.n), dtype=grid.dtype)
    for i in range(grid.d):
        out[i] = np.fft.ifftn(_deriv_multiplier(grid, i) * uh).real
    return VectorField(grid, out)


# 8th-order centered first-derivative weights over 840*h.
_FD8_W = (3.0, -32.0, 168.0, -672.0)


def _shift(values: np.ndarray, axis: int, steps: int) -> np.ndarray:
    """Field values at x + steps*h along ``axis`` (periodic wrap).

    Coordinates decrease with index, so the +h neighbor of index j is j-1;
    np.roll by +steps delivers it.
    """
    return np.roll(values, steps, axis=axis)


def _fd8_axis(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    acc = np.zeros_like(values)
    for k, w in enumerate(_FD8_W):
        s = 4 - k
        acc += w * _shift(values, axis, -s)  # u(x - s*h)
        acc -= w * _shift(values, axis, s)  # u(x + s*h)
    return acc / (840.0 * h)


def fd8_gradient(u: ScalarField) -> VectorField:
    grid = u.grid
    for ni in grid.n:
        if ni < 9:
            raise ValueError(f"8th-order stencil needs n_i >= 9, got {ni}")
    out = np.empty((grid.d, *grid.n), dtype=grid.dtype)
    for i in range(grid.d):
        out[i] = _fd8_axis(u.values, i, grid.h[i])
    return VectorField(grid, out)


def gradient(u: ScalarField, scheme: str = "fd8") -> VectorField:
    if scheme == "fd8":
        return fd8_gradient(u)
    if scheme == "spectral":
        return spectral_gradient(u)
    raise ValueError(f"unknown derivative scheme {scheme!r}")


def divergence(v: VectorField, scheme: str = "spectral") -> ScalarField:
    grid = v.grid
    acc = np.zeros(grid.n, dtype=grid.dtype)
    if scheme == "spectral":
        for i in range(grid.d):
            vh = np.fft.fftn(v.data[i])
            acc += np.fft.ifftn(_deriv_multiplier(grid, i) * vh).real
    elif scheme == "fd8":
        for i in range(grid.d):
            acc += _fd8_axis(v.data[i], i, grid.h[i])
    else:
        raise ValueError(f"unknown derivative scheme {scheme!r}")
    return ScalarField(grid, acc)


def jacobian(v: VectorField, scheme: str = "fd8") -> np.ndarray:
    """Per-voxel Jacobian J[i, j] = d v_i / d x_j, shape (d, d, *n)."""
    grid = v.grid
    out = np.empty((grid.d, grid.d, *grid.n), dtype=grid.dtype)
    for i in range(grid.d):
        gi = gradient(ScalarField(grid, v.data[i]), scheme=scheme)
        out[i] = gi.data
    return out


def laplacian(u: ScalarField) -> ScalarField:
    grid = u.grid
    freqs = _freq_grids(grid)
    ksq = sum(f * f for f in freqs)
    uh = np.fft.fftn(u.values)
    return ScalarField(grid, np.fft.ifftn(-ksq * uh).real)


@dataclass(frozen=True)
class RegOperatorSpec:
    """Sobolev regularization operator choice.

    order=1 with seminorm=True is the default (vector Laplacian, symbol
    |k|^2 per component); order o gives |k|^(2o) for the seminorm and
    (1 + |k|^2)^o for the full norm.
    """

    order: int = 1
    seminorm: bool = True

    def __post_init__(self):
        if self.order not in (1, 2, 3):
            raise ValueError(f"order must be 1, 2 or 3, got {self.order}")


def reg_symbol(grid: Grid, spec: RegOperatorSpec) -> np.ndarray:
    freqs = _freq_grids(grid)
    ksq = sum(f * f for f in freqs)
    ksq = np.broadcast_to(ksq, grid.n)
    if spec.seminorm:
        return ksq**spec.order
    return (1.0 + ksq) ** spec.order


def _apply_symbol(v: VectorField, symbol: np.ndarray) -> VectorField:
    grid = v.grid
    out = np.empty_like(v.data)
    for i in range(grid.d):
        out[i] = np.fft.ifftn(symbol * np.fft.fftn(v.data[i])).real
    return VectorField(grid, out)


def apply_reg_operator(v: VectorField, spec: RegOperatorSpec, alpha: float) -> VectorField:
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return _apply_symbol(v, alpha * reg_symbol(v.grid, spec))


def apply_inv_reg_operator(b: VectorField, spec: RegOperatorSpec, alpha: float) -> VectorField:
    """Spectral inverse of alpha*L; zero-symbol modes divide by alpha."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    sym = reg_symbol(b.grid, spec).copy()
    sym[sym == 0.0] = 1.0
    return _apply_symbol(b, 1.0 / (alpha * sym))


def apply_inv_sqrt_reg_operator(b: VectorField, spec: RegOperatorSpec, alpha: float) -> VectorField:
    """Spectral (alpha*L)^(-1/2) with the same kernel rule as the inverse."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    sym = reg_symbol(b.grid, spec).copy()
    sym[sym == 0.0] = 1.0
    return _apply_symbol(b, 1.0 / np.sqrt(alpha * sym))


@dataclass(frozen=True)
class IncompressibilityMode:
    """Divergence control: none, hard (Leray), or relaxed with weight beta."""

    mode: str = "none"
    beta: float = 1e-4

    def __post_init__(self):
        if self.mode not in ("none", "incompressible", "near-incompressible"):
            raise ValueError(f"unknown incompressibility mode {self.mode!r}")
        if self.mode == "near-incompressible" and self.beta <= 0:
            raise ValueError("beta must be positive for the relaxed mode")


def incompressibility_multiplier(
    ksq, mode: IncompressibilityMode, alpha: float
) -> np.ndarray:
    """Scalar factor applied to the longitudinal part of a body force.

    Composed mode by mode, left to right, from the eliminated optimality
    system: for the hard constraint the factor is 1 (full Leray removal);
    for the relaxed constraint it is
    beta*(1 + |k|^2) / (alpha*|k|^2 + beta*(1 + |k|^2)).
    Exposed for auditing; ``ksq`` is |k|^2 (> 0).
    """
    ksq = np.asarray(ksq, dtype=np.float64)
    if mode.mode == "incompressible":
        return np.ones_like(ksq)
    if mode.mode == "near-incompressible":
        b = mode.beta
        # chain: alpha * inv(beta*(inv(-Lap) + id)) + id, then inverted;
        # inv(-Lap) has symbol 1/|k|^2.
        inner = b * (1.0 / ksq + 1.0)
        return 1.0 / (alpha / inner + 1.0)
    raise ValueError("no projection for mode 'none'")


def project_body_force(
    b: VectorField, mode: IncompressibilityMode, alpha: float
) -> VectorField:
    """Remove (part of) the longitudinal component of a body force.

    Output spectrum: b_hat - M(k) * k (k . b_hat) / |k|^2. M = 1 kills pure
    gradients (Leray); the relaxed M only damps them. The zero mode passes
    through untouched, as do Nyquist bands: the frequency -n/2 is its own
    alias, so no real-valued longitudinal split exists there (first
    derivatives zero those bands for the same reason).
    """
    if mode.mode == "none":
        return b.copy()
    grid = b.grid
    # build the chain from the discrete first-derivative symbol (Nyquist
    # zeroed), so the output's spectral divergence vanishes identically and
    # real fields stay real
    freqs = []
    for i, f in enumerate(_freq_grids(grid)):
        eff = np.broadcast_to(f, grid.n).copy()
        eff[np.abs(eff) == grid.n[i] // 2] = 0.0
        freqs.append(eff)
    ksq = sum(f * f for f in freqs)
    safe_ksq = np.where(ksq == 0.0, 1.0, ksq)
    mult = incompressibility_multiplier(safe_ksq, mode, alpha)
    mult = np.where(ksq == 0.0, 0.0, mult)

    bh = [np.fft.fftn(b.data[i]) for i in range(grid.d)]
    # longitudinal projection is even in k, so the index-frequency sign
    # convention cancels
    kdotb = sum(f * bhi for f, bhi in zip(freqs, bh))
    factor = mult * kdotb / safe_ksq
    out = np.empty_like(b.data)
    for i in range(grid.d):
        out[i] = np.fft.ifftn(bh[i] - freqs[i] * factor).real
    return VectorField(grid, out)


def low_pass_mask(grid: Grid) -> np.ndarray:
    """Cut-off mask keeping |k_i| < n_i/4 on every axis."""
    freqs = _freq_grids(grid)
    mask = np.ones(grid.n, dtype=bool)
    for i, f in enumerate(freqs):
        mask &= np.broadcast_to(np.abs(f) < grid.n[i] / 4, grid.n)
    return mask


def _filter(u: ScalarField, mask: np.ndarray) -> ScalarField:
    return ScalarField(u.grid, np.fft.ifftn(np.fft.fftn(u.values) * mask).real)


def low_pass(u: ScalarField) -> ScalarField:
    return _filter(u, low_pass_mask(u.grid))


def high_pass(u: ScalarField) -> ScalarField:
    return _filter(u, ~low_pass_mask(u.grid))


def _coarse_slices(n_fine: int) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays mapping retained fine DFT bins onto coarse bins."""
    nc = n_fine // 2
    kept = np.concatenate([np.arange(0, nc // 2), np.arange(n_fine - nc // 2 + 1, n_fine)])
    coarse = np.concatenate([np.arange(0, nc // 2), np.arange(nc - nc // 2 + 1, nc)])
    return kept, coarse


def restrict(u: ScalarField) -> ScalarField:
    """Spectral restriction to the half-resolution grid.

    Truncates to modes |k_i| < n_i/4 (the coarse Nyquist band is dropped)
    and rescales so mode amplitudes are preserved.
    """
    grid = u.grid
    coarse_grid = grid.coarsen()
    uh = np.fft.fftn(u.values)
    ch = np.zeros(coarse_grid.n, dtype=complex)
    src = np.ix_(*[_coarse_slices(grid.n[i])[0] for i in range(grid.d)])
    dst = np.ix_(*[_coarse_slices(grid.n[i])[1] for i in range(grid.d)])
    ch[dst] = uh[src]
    scale = coarse_grid.num_voxels / grid.num_voxels
    return ScalarField(coarse_grid, np.fft.ifftn(ch * scale).real)


def prolong(u: ScalarField, fine_grid: Grid) -> ScalarField:
    """Spectral prolongation (zero padding) onto ``fine_grid``."""
    grid = u.grid
    if tuple(2 * ni for ni in grid.n) != fine_grid.n:
        raise ValueError("prolongation target must have exactly twice the resolution")
    uh = np.fft.fftn(u.values)
    fh = np.zeros(fine_grid.n, dtype=complex)
    src = np.ix_(*[_coarse_slices(fine_grid.n[i])[1] for i in range(grid.d)])
    dst = np.ix_(*[_coarse_slices(fine_grid.n[i])[0] for i in range(grid.d)])
    fh[dst] = uh[src]
    scale = fine_grid.num_voxels / grid.num_voxels
    return ScalarField(fine_grid, np.fft.ifftn(fh * scale).real)


def restrict_vector(v: VectorField) -> VectorField:
    comps = [restrict(ScalarField(v.grid, v.data[i])) for i in range(v.grid.d)]
    return VectorField.from_components(comps)


def prolong_vector(v: VectorField, fine_grid: Grid) -> VectorField:
    comps = [prolong(ScalarField(v.grid, v.data[i]), fine_grid) for i in range(v.grid.d)]
    return VectorField.from_components(comps)


def low_pass_vector(v: VectorField) -> VectorField:
    mask = low_pass_mask(v.grid)
    out = np.empty_like(v.data)
    for i in range(v.grid.d):
        out[i] = np.fft.ifftn(np.fft.fftn(v.data[i]) * mask).real
    return VectorField(v.grid, out)


def high_pass_vector(v: VectorField) -> VectorField:
    mask = ~low_pass_mask(v.grid)
    out = np.empty_like(v.data)
    for i in range(v.grid.d):
        out[i] = np.fft.ifftn(np.fft.fftn(v.data[i]) * mask).real
    return VectorField(v.grid, out)
