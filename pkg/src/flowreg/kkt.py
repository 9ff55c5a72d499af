"""Reduced-space objective, gradient, Gauss-Newton matvec, preconditioners.

The control is the stationary velocity; the transported image and its dual
are eliminated through PDE solves. A ``KktState`` owns everything tied to
the current velocity (departure maps, state/dual trajectories, stored state
gradients) plus the matvec / PDE-solve counters; call :meth:`KktState.refresh`
whenever the velocity changes.

The Hessian is always the Gauss-Newton approximation (dual-variable terms
dropped), so it is positive semidefinite by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffops import (
    IncompressibilityMode,
    RegOperatorSpec,
    apply_inv_reg_operator,
    apply_inv_sqrt_reg_operator,
    apply_reg_operator,
    divergence,
    gradient,
    high_pass_vector,
    low_pass_vector,
    project_body_force,
    prolong_vector,
    reg_symbol,
    restrict,
    restrict_vector,
)
from .distance import adjoint_final, dist_value, incremental_final_gn
from .fields import Grid, ScalarField, VectorField, l2_inner, norm_l2, time_integral
from .transport import (
    Trajectory,
    solve_adjoint,
    solve_inc_adjoint_gn,
    solve_inc_state,
    solve_state,
    state_gradients,
)

__all__ = [
    "RegConfig",
    "PrecondKind",
    "KktState",
    "evaluate_objective",
    "evaluate_gradient",
    "hessian_matvec_gn",
    "apply_precond",
]


@dataclass(frozen=True)
class RegConfig:
    """Regularization weight, operator, and divergence-control mode."""

    alpha: float = 1e-2
    operator: RegOperatorSpec = field(default_factory=RegOperatorSpec)
    incomp: IncompressibilityMode = field(
        default_factory=lambda: IncompressibilityMode("near-incompressible", 1e-4)
    )

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


_PRECOND_ALIASES = {
    "reg": "reg",
    "regularization": "reg",
    "h0": "h0",
    "2level": "2level",
    "h0-two-level": "2level",
}


@dataclass(frozen=True)
class PrecondKind:
    """Preconditioner choice plus the nested-solve budget for h0 variants."""

    kind: str = "2level"
    inner_tol_factor: float = 0.1
    inner_max_iterations: int = 50

    def __post_init__(self):
        k = _PRECOND_ALIASES.get(self.kind)
        if k is None:
            raise ValueError(f"unknown preconditioner {self.kind!r}")
        object.__setattr__(self, "kind", k)


def _vec_add(a: VectorField, b: VectorField, s: float = 1.0) -> VectorField:
    return VectorField(a.grid, a.data + s * b.data)


def _inner_pcg(apply_op, rhs: VectorField, apply_pre, tol_rel: float, max_it: int):
    """Plain PCG for the nested preconditioner solves.

    Returns (solution, iterations, breakdown). Breakdown = non-positive
    curvature or non-finite numbers; the caller falls back in that case.
    """
    grid = rhs.grid
    x = VectorField.zeros(grid)
    r = rhs.copy()
    rhs_norm = norm_l2(rhs)
    if rhs_norm == 0.0:
        return x, 0, False
    z = apply_pre(r)
    s = z.copy()
    rz = l2_inner(r, z)
    it = 0
    while it < max_it:
        op_s = apply_op(s)
        s_op_s = l2_inner(s, op_s)
        if not np.isfinite(s_op_s) or s_op_s <= 0.0:
            return x, it, True
        kappa = rz / s_op_s
        x = _vec_add(x, s, kappa)
        r = _vec_add(r, op_s, -kappa)
        it += 1
        if norm_l2(r) <= tol_rel * rhs_norm:
            break
        z = apply_pre(r)
        rz_new = l2_inner(r, z)
        if not np.isfinite(rz_new) or rz_new <= 0.0:
            return x, it, True
        mu = rz_new / rz
        rz = rz_new
        s = _vec_add(z, s, mu)
    return x, it, False


class KktState:
    """Velocity iterate plus every PDE byproduct needed by the optimizer."""

    def __init__(
        self,
        m0: ScalarField,
        m1: ScalarField,
        reg: RegConfig,
        distance: str = "ssd",
        method: str = "cubic",
        scheme: str = "fd8",
        v_init: VectorField | None = None,
    ):
        if m0.grid != m1.grid:
            raise ValueError("images live on different grids")
        self.grid: Grid = m0.grid
        self.m0 = m0
        self.m1 = m1
        self.reg = reg
        self.distance = distance
        self.method = method
        self.scheme = scheme
        self.matvecs = 0
        self.pde_solves = 0
        self.precond_fallbacks = 0
        self.initial_mismatch = dist_value(m0, m1, distance)
        self.refresh(v_init if v_init is not None else VectorField.zeros(self.grid))

    # -- state management ---------------------------------------------------

    def refresh(self, v: VectorField) -> None:
        """Rebuild trajectories, state, dual, and stored state gradients."""
        if v.grid != self.grid:
            raise ValueError("velocity lives on a different grid")
        self.v = v
        self.trajectory = Trajectory.compute(v, self.method)
        self.back_trajectory = Trajectory.compute(VectorField(self.grid, -v.data), self.method)
        self.div_v = divergence(v, scheme=self.scheme)
        self.mseries = solve_state(self.m0, v, method=self.method, trajectory=self.trajectory)
        self.grad_slices = state_gradients(self.mseries, self.scheme)
        lam_final = adjoint_final(self.mseries.final(), self.m1, self.distance)
        self.lamseries = solve_adjoint(
            lam_final,
            v,
            method=self.method,
            scheme=self.scheme,
            back_trajectory=self.back_trajectory,
            div_v=self.div_v,
        )
        self.pde_solves += 2
        self._deformed_grad = None
        self._coarse_cache = None

    def deformed_image(self) -> ScalarField:
        return self.mseries.final()

    # -- objective / gradient / matvec ---------------------------------------

    def _reg_energy(self, v: VectorField) -> float:
        lv = apply_reg_operator(v, self.reg.operator, self.reg.alpha)
        return 0.5 * l2_inner(lv, v)

    def objective(self) -> float:
        return dist_value(self.deformed_image(), self.m1, self.distance) + self._reg_energy(self.v)

    def objective_at(self, v_trial: VectorField) -> float:
        """Objective for a trial velocity; costs one state solve."""
        mseries = solve_state(self.m0, v_trial, method=self.method)
        self.pde_solves += 1
        return dist_value(mseries.final(), self.m1, self.distance) + self._reg_energy(v_trial)

    def divergence_energy(self) -> float:
        """Diagnostic weighted divergence energy of the current velocity.

        Reported alongside the objective in the relaxed divergence-control
        mode; it is not part of the minimized functional.
        """
        incomp = self.reg.incomp
        if incomp.mode != "near-incompressible":
            return 0.0
        w = self.div_v
        gw = gradient(w, scheme="spectral")
        return 0.5 * incomp.beta * (l2_inner(w, w) + l2_inner(gw, gw))

    def _project(self, b: VectorField) -> VectorField:
        if self.reg.incomp.mode == "none":
            return b
        return project_body_force(b, self.reg.incomp, self.reg.alpha)

    def _body_force(self, dual_series) -> VectorField:
        slices = []
        for j in range(dual_series.num_slices):
            slices.append(
                VectorField(self.grid, dual_series.data[j] * self.grad_slices[j].data)
            )
        return time_integral(slices)

    def gradient(self) -> VectorField:
        lv = apply_reg_operator(self.v, self.reg.operator, self.reg.alpha)
        return _vec_add(lv, self._project(self._body_force(self.lamseries)))

    def hessian_matvec(self, vtilde: VectorField) -> VectorField:
        """Gauss-Newton Hessian action; two PDE solves per call."""
        mt = solve_inc_state(
            self.mseries,
            self.v,
            vtilde,
            method=self.method,
            scheme=self.scheme,
            trajectory=self.trajectory,
            grad_slices=self.grad_slices,
        )
        final = incremental_final_gn(mt.final(), self.deformed_image(), self.m1, self.distance)
        lt = solve_inc_adjoint_gn(
            final,
            self.v,
            method=self.method,
            scheme=self.scheme,
            back_trajectory=self.back_trajectory,
            div_v=self.div_v,
        )
        self.matvecs += 1
        self.pde_solves += 2
        lv = apply_reg_operator(vtilde, self.reg.operator, self.reg.alpha)
        return _vec_add(lv, self._project(self._body_force(lt)))

    def mismatch(self) -> float:
        if self.initial_mismatch == 0.0:
            return 0.0
        return dist_value(self.deformed_image(), self.m1, self.distance) / self.initial_mismatch

    # -- preconditioners ------------------------------------------------------

    def _h0_gradient(self) -> np.ndarray:
        if self._deformed_grad is None:
            self._deformed_grad = gradient(self.deformed_image(), scheme=self.scheme).data
        return self._deformed_grad

    def _apply_h0(self, s: VectorField) -> VectorField:
        """Zero-velocity Hessian surrogate built from the current deformed image.

        The regularization block uses the kernel-completed symbol (zero
        symbols replaced by one), the exact inverse of the kernel rule in
        the spectral preconditioner; with the raw seminorm the operator
        would be singular on constants whenever the image term vanishes.
        """
        gm = self._h0_gradient()
        sym = reg_symbol(self.grid, self.reg.operator).copy()
        sym[sym == 0.0] = 1.0
        data = np.empty_like(s.data)
        for i in range(self.grid.d):
            data[i] = np.fft.ifftn(self.reg.alpha * sym * np.fft.fftn(s.data[i])).real
        data += np.sum(gm * s.data, axis=0) * gm
        return VectorField(self.grid, data)

    def _coarse_pieces(self):
        if self._coarse_cache is None:
            coarse_m = restrict(self.deformed_image())
            g_c = gradient(coarse_m, scheme=self.scheme).data
            self._coarse_cache = (coarse_m.grid, g_c)
        return self._coarse_cache

    def _apply_coarse_smoothed(self, w: VectorField) -> VectorField:
        """Coarse two-level operator: identity plus smoothed image term."""
        _, g_c = self._coarse_pieces()
        sw = apply_inv_sqrt_reg_operator(w, self.reg.operator, self.reg.alpha)
        data = np.sum(g_c * sw.data, axis=0) * g_c
        term = apply_inv_sqrt_reg_operator(
            VectorField(w.grid, data), self.reg.operator, self.reg.alpha
        )
        return _vec_add(w, term)

    def apply_precond(self, r: VectorField, kind: PrecondKind, outer_tol: float) -> VectorField:
        spec, alpha = self.reg.operator, self.reg.alpha
        if kind.kind == "reg":
            return apply_inv_reg_operator(r, spec, alpha)
        tol = kind.inner_tol_factor * outer_tol
        if kind.kind == "h0":
            sol, _, broke = _inner_pcg(
                self._apply_h0,
                r,
                lambda x: apply_inv_reg_operator(x, spec, alpha),
                tol,
                kind.inner_max_iterations,
            )
            if broke:
                self.precond_fallbacks += 1
                return apply_inv_reg_operator(r, spec, alpha)
            return sol
        # two-level: smooth, solve the coarse low band, pass the high band
        # through, smooth again
        u = apply_inv_sqrt_reg_operator(r, spec, alpha)
        u_low = restrict_vector(low_pass_vector(u))
        sol_c, _, broke = _inner_pcg(
            self._apply_coarse_smoothed,
            u_low,
            lambda x: x.copy(),
            tol,
            kind.inner_max_iterations,
        )
        if broke:
            self.precond_fallbacks += 1
            return apply_inv_reg_operator(r, spec, alpha)
        s_fine = low_pass_vector(prolong_vector(sol_c, self.grid))
        s = _vec_add(s_fine, high_pass_vector(u))
        return apply_inv_sqrt_reg_operator(s, spec, alpha)


# -- functional aliases matching the operation map ---------------------------


def evaluate_objective(state: KktState, v: VectorField | None = None) -> float:
    if v is None:
        return state.objective()
    return state.objective_at(v)


def evaluate_gradient(state: KktState) -> VectorField:
    return state.gradient()


def hessian_matvec_gn(state: KktState, vtilde: VectorField) -> VectorField:
    return state.hessian_matvec(vtilde)


def apply_precond(
    r: VectorField, kind: PrecondKind, state: KktState, outer_tol: float = 1e-6
) -> VectorField:
    return state.apply_precond(r, kind, outer_tol)
