"""Inexact Gauss-Newton-Krylov registration driver.

Outer loop: evaluate the reduced gradient, solve the Newton system
inexactly with preconditioned CG (tolerance from the forcing sequence),
globalize with an Armijo backtracking line search, repeat until the
max-norm of the gradient drops below eps_opt relative to its starting
value or below the absolute floor.

The PCG stopping test measures the residual in the (quadrature-weighted)
2-norm against eta times the gradient norm; eta itself comes from the
max-norm forcing formula. Both norms land in the per-iteration trace.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .fields import ScalarField, VectorField, l2_inner, norm_inf, norm_l2
from .kkt import KktState, PrecondKind, RegConfig
from .transport import solve_deformation_tensor

__all__ = [
    "OptimizerConfig",
    "SolveReport",
    "DescentDirectionError",
    "forcing_tolerance",
    "pcg_newton_step",
    "armijo_line_search",
    "register",
]


class DescentDirectionError(ValueError):
    """Line search requires a direction with negative gradient inner product."""


@dataclass(frozen=True)
class OptimizerConfig:
    eps_opt: float = 5e-2
    grad_abs_tol: float = 1e-6
    max_outer: int = 50
    forcing: str = "superlinear"
    armijo_c1: float = 1e-4
    armijo_factor: float = 0.5
    armijo_max_trials: int = 20
    pcg_max_iterations: int = 500

    def __post_init__(self):
        if min(self.eps_opt, self.grad_abs_tol, self.armijo_c1) <= 0:
            raise ValueError("tolerances must be positive")
        if self.forcing not in ("superlinear", "quadratic"):
            raise ValueError(f"unknown forcing mode {self.forcing!r}")


@dataclass
class SolveReport:
    """Counters and diagnostics of one registration solve."""

    iterations: int = 0
    matvecs: int = 0
    pde_solves: int = 0
    mismatch: float = 1.0
    gradient: float = 1.0
    runtime: float = 0.0
    status: str = "converged"
    exit_reason: str = ""
    line_search_evals: int = 0
    precond_fallbacks: int = 0
    detgrad_min: float = 1.0
    detgrad_mean: float = 1.0
    detgrad_max: float = 1.0
    divergence_energy: float = 0.0
    trace: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def forcing_tolerance(gnorm_inf: float, mode: str = "superlinear") -> float:
    """Inexact-solve tolerance: min(1/2, sqrt(g)) or min(1/2, g)."""
    if gnorm_inf < 0:
        raise ValueError("gradient norm must be nonnegative")
    if mode == "superlinear":
        return min(0.5, float(np.sqrt(gnorm_inf)))
    if mode == "quadratic":
        return min(0.5, float(gnorm_inf))
    raise ValueError(f"unknown forcing mode {mode!r}")


def pcg_newton_step(
    state: KktState,
    g: VectorField,
    precond: PrecondKind,
    eta: float,
    config: OptimizerConfig | None = None,
):
    """Solve H vtilde = -g inexactly with preconditioned CG.

    Starts from zero; stops once the 2-norm of the residual falls below
    eta times the 2-norm of g, on non-positive curvature (previous iterate
    returned, flagged), or at the iteration cap (best iterate, flagged).
    Returns (vtilde, iterations, info).
    """
    config = config or OptimizerConfig()
    grid = state.grid
    vt = VectorField.zeros(grid)
    info = {"flag": "converged", "residual_2": 0.0, "residual_inf": 0.0}
    gnorm2 = norm_l2(g)
    if gnorm2 == 0.0:
        return vt, 0, info
    target = eta * gnorm2
    r = VectorField(grid, -g.data)
    z = state.apply_precond(r, precond, eta)
    s = z.copy()
    rz = l2_inner(r, z)
    it = 0
    while it < config.pcg_max_iterations:
        hs = state.hessian_matvec(s)
        curv = l2_inner(s, hs)
        if not np.isfinite(curv) or curv <= 0.0:
            info["flag"] = "negative_curvature"
            break
        kappa = rz / curv
        vt = VectorField(grid, vt.data + kappa * s.data)
        r = VectorField(grid, r.data - kappa * hs.data)
        it += 1
        if norm_l2(r) < target:
            break
        z = state.apply_precond(r, precond, eta)
        rz_new = l2_inner(z, r)
        mu = rz_new / rz
        rz = rz_new
        s = VectorField(grid, z.data + mu * s.data)
    else:
        info["flag"] = "max_iterations"
    info["residual_2"] = norm_l2(r)
    info["residual_inf"] = norm_inf(r)
    return vt, it, info


def armijo_line_search(
    state: KktState,
    vtilde: VectorField,
    g: VectorField,
    config: OptimizerConfig | None = None,
):
    """Backtrack gamma in {1, 1/2, ...} until the Armijo inequality holds.

    Returns (gamma, trials, trial_objective); gamma is None if no step was
    admissible within the trial budget.
    """
    config = config or OptimizerConfig()
    slope = l2_inner(g, vtilde)
    if slope >= 0.0:
        raise DescentDirectionError(f"not a descent direction: <g, v~> = {slope:.3e}")
    j0 = state.objective()
    gamma = 1.0
    for trial in range(1, config.armijo_max_trials + 1):
        cand = VectorField(state.grid, state.v.data + gamma * vtilde.data)
        j_trial = state.objective_at(cand)
        if j_trial <= j0 + config.armijo_c1 * gamma * slope:
            return gamma, trial, j_trial
        gamma *= config.armijo_factor
    return None, config.armijo_max_trials, j0


def _detgrad_stats(v: VectorField, method: str, scheme: str):
    det = solve_deformation_tensor(v, method=method, scheme=scheme).determinant().values
    return float(det.min()), float(det.mean()), float(det.max())


def register(
    m0: ScalarField,
    m1: ScalarField,
    config: OptimizerConfig | None = None,
    reg: RegConfig | None = None,
    distance: str = "ssd",
    precond: PrecondKind | None = None,
    method: str = "cubic",
    scheme: str = "fd8",
    v0: VectorField | None = None,
    compute_detgrad: bool = True,
):
    """Full registration solve; returns (velocity, SolveReport).

    The initial guess is zero unless ``v0`` warm-starts the solve. The
    deformation-determinant stats in the report are post-solve diagnostics
    and are not counted as PDE solves.
    """
    config = config or OptimizerConfig()
    reg = reg or RegConfig()
    precond = precond or PrecondKind()
    t_start = time.perf_counter()

    state = KktState(
        m0, m1, reg, distance=distance, method=method, scheme=scheme, v_init=v0
    )
    report = SolveReport()

    g = state.gradient()
    gnorm = norm_inf(g)
    g0norm = gnorm
    obj = state.objective()
    report.trace.append(
        {
            "iteration": 0,
            "objective": obj,
            "mismatch": state.mismatch(),
            "gnorm_inf": gnorm,
            "step": 0.0,
            "pcg_iterations": 0,
            "eta": 0.0,
            "pcg_residual_2": 0.0,
            "pcg_residual_inf": 0.0,
        }
    )

    status, exit_reason = "max_iterations", ""
    iterations = 0
    if gnorm <= config.grad_abs_tol:
        status, exit_reason = "converged", "absolute_gradient"
    else:
        while iterations < config.max_outer:
            eta = forcing_tolerance(gnorm, config.forcing)
            vtilde, pcg_iters, pcg_info = pcg_newton_step(state, g, precond, eta, config)
            try:
                gamma, trials, obj_trial = armijo_line_search(state, vtilde, g, config)
            except DescentDirectionError:
                status, exit_reason = "line_search_failed", "no_descent_direction"
                break
            report.line_search_evals += trials
            if gamma is None:
                status, exit_reason = "line_search_failed", "armijo_exhausted"
                break
            v = VectorField(state.grid, state.v.data + gamma * vtilde.data)
            state.refresh(v)
            g = state.gradient()
            gnorm = norm_inf(g)
            new_obj = state.objective()
            if new_obj > obj + 1e-10 * max(1.0, abs(obj)):
                raise RuntimeError("objective increased across an accepted step")
            obj = new_obj
            iterations += 1
            report.trace.append(
                {
                    "iteration": iterations,
                    "objective": obj,
                    "mismatch": state.mismatch(),
                    "gnorm_inf": gnorm,
                    "step": gamma,
                    "pcg_iterations": pcg_iters,
                    "eta": eta,
                    "pcg_residual_2": pcg_info["residual_2"],
                    "pcg_residual_inf": pcg_info["residual_inf"],
                }
            )
            # relative test first, absolute floor second; record which fired
            if gnorm <= config.eps_opt * g0norm:
                status, exit_reason = "converged", "relative_gradient"
                break
            if gnorm <= config.grad_abs_tol:
                status, exit_reason = "converged", "absolute_gradient"
                break

    report.iterations = iterations
    report.matvecs = state.matvecs
    report.pde_solves = state.pde_solves
    report.precond_fallbacks = state.precond_fallbacks
    report.mismatch = state.mismatch()
    report.gradient = 0.0 if g0norm == 0.0 else gnorm / g0norm
    report.status = status
    report.exit_reason = exit_reason
    report.divergence_energy = state.divergence_energy()
    if compute_detgrad:
        report.detgrad_min, report.detgrad_mean, report.detgrad_max = _detgrad_stats(
            state.v, method, scheme
        )
    report.runtime = time.perf_counter() - t_start
    return state.v, report
