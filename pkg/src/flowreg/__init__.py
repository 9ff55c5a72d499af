"""Velocity-field diffeomorphic image registration on periodic grids.

Registers a template image to a reference by finding a stationary velocity
field that minimizes a regularized image mismatch under hyperbolic
transport, solved with an inexact Gauss-Newton-Krylov method,
semi-Lagrangian time integration, and spectral preconditioning.
"""
from .diffops import IncompressibilityMode, RegOperatorSpec
from .fields import (
    Grid,
    ScalarField,
    TensorField,
    TimeSeriesField,
    VectorField,
    l2_inner,
    mesh_coordinates,
    time_integral,
)
from .kkt import KktState, PrecondKind, RegConfig
from .optimizer import OptimizerConfig, SolveReport, register
from .continuation import SearchConfig, continuation_solve, det_bounds_ok, search_alpha
from .metrics import LabelVolume, detgrad_stats, dice, relative_mismatch, transport_labels
from .synth import synth_case
from .volio import read_volume, write_volume

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField",
    "TimeSeriesField",
    "TensorField",
    "mesh_coordinates",
    "l2_inner",
    "time_integral",
    "RegOperatorSpec",
    "IncompressibilityMode",
    "RegConfig",
    "PrecondKind",
    "KktState",
    "OptimizerConfig",
    "SolveReport",
    "register",
    "SearchConfig",
    "search_alpha",
    "continuation_solve",
    "det_bounds_ok",
    "LabelVolume",
    "dice",
    "transport_labels",
    "detgrad_stats",
    "relative_mismatch",
    "synth_case",
    "read_volume",
    "write_volume",
    "__version__",
]
