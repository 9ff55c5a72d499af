"""Image similarity measures and the transport final conditions they induce.

Each measure supplies three pieces: its value, the final condition of the
dual transport (minus the gradient with respect to the deformed image), and
the Gauss-Newton final condition of the incremental dual (minus the action
of its second derivative on an image perturbation).
"""
from __future__ import annotations

from .fields import ScalarField, l2_inner

__all__ = [
    "DISTANCE_KINDS",
    "ZeroNormError",
    "dist_value",
    "adjoint_final",
    "incremental_final_gn",
]

DISTANCE_KINDS = ("ssd", "ncc")


class ZeroNormError(ValueError):
    """Normalized correlation is undefined for a zero-norm image."""


def _check(mdef: ScalarField, mref: ScalarField, kind: str):
    if mdef.grid != mref.grid:
        raise ValueError("images live on different grids")
    if kind not in DISTANCE_KINDS:
        raise ValueError(f"unknown distance measure {kind!r}")


def _ncc_moments(mdef: ScalarField, mref: ScalarField):
    a = l2_inner(mref, mdef)
    b = l2_inner(mdef, mdef)
    c = l2_inner(mref, mref)
    if b <= 0.0 or c <= 0.0:
        raise ZeroNormError("normalized cross correlation needs nonzero images")
    return a, b, c


def dist_value(mdef: ScalarField, mref: ScalarField, kind: str = "ssd") -> float:
    """Mismatch between the deformed image and the reference.

    ssd: half the squared L2 distance. ncc: 1 - <mdef, mref>^2 normalized,
    scale invariant in both arguments, in [0, 1].
    """
    _check(mdef, mref, kind)
    if kind == "ssd":
        diff = ScalarField(mdef.grid, mdef.values - mref.values)
        return 0.5 * l2_inner(diff, diff)
    a, b, c = _ncc_moments(mdef, mref)
    return 1.0 - (a * a) / (b * c)


def adjoint_final(mdef: ScalarField, mref: ScalarField, kind: str = "ssd") -> ScalarField:
    """Final condition of the dual: minus the mismatch gradient in mdef."""
    _check(mdef, mref, kind)
    grid = mdef.grid
    if kind == "ssd":
        return ScalarField(grid, -(mdef.values - mref.values))
    a, b, c = _ncc_moments(mdef, mref)
    vals = -2.0 * (a / (b * c)) * ((a / b) * mdef.values - mref.values)
    return ScalarField(grid, vals)


def incremental_final_gn(
    mtilde: ScalarField, mdef: ScalarField, mref: ScalarField, kind: str = "ssd"
) -> ScalarField:
    """Gauss-Newton final condition of the incremental dual.

    Equals minus the second derivative of the mismatch (in mdef) applied to
    ``mtilde``; linear in ``mtilde``. The sign of the reference-image term
    is fixed by differentiating the adjoint final condition (and is checked
    against a finite-difference Hessian in the tests).
    """
    _check(mdef, mref, kind)
    grid = mdef.grid
    if mtilde.grid != grid:
        raise ValueError("perturbation lives on a different grid")
    if kind == "ssd":
        return ScalarField(grid, -mtilde.values)
    a, b, c = _ncc_moments(mdef, mref)
    mm = l2_inner(mdef, mtilde)
    rm = l2_inner(mref, mtilde)
    q1 = 2.0 * a * mm / b**2 - rm / b
    q2 = 4.0 * a * a * mm / b**3 - 2.0 * a * rm / b**2
    q3 = a * a / b**2
    vals = (2.0 / c) * (-q1 * mref.values + q2 * mdef.values - q3 * mtilde.values)
    return ScalarField(grid, vals)
