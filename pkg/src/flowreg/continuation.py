"""Regularization-weight search and warm-started parameter continuation.

The search sweeps alpha down by decades from 1 until the determinant
bounds eps_det < det F(1) < 1/eps_det break, then runs a fixed-depth
linear bisection inside the bracket. Every trial warm-starts from the
velocity of the previous trial; a warm start is dropped (and flagged) if
it would begin above the cold-start objective at the new alpha.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .diffops import apply_reg_operator
from .distance import dist_value
from .fields import ScalarField, VectorField, l2_inner
from .kkt import PrecondKind, RegConfig
from .optimizer import OptimizerConfig, SolveReport, register
from .transport import solve_deformation_tensor, solve_state

__all__ = [
    "SearchConfig",
    "TrialRecord",
    "SearchResult",
    "det_bounds_ok",
    "search_alpha",
    "cascade_alphas",
    "continuation_solve",
    "write_trials_csv",
]


@dataclass(frozen=True)
class SearchConfig:
    eps_det: float = 0.1
    alpha_start: float = 1.0
    decade_factor: float = 10.0
    bisection_depth: int = 6
    alpha_floor: float = 1e-6

    def __post_init__(self):
        if not (0.0 < self.eps_det < 1.0):
            raise ValueError("eps_det must lie in (0, 1)")
        if self.decade_factor <= 1.0:
            raise ValueError("decade factor must exceed 1")


@dataclass
class TrialRecord:
    alpha: float
    passed: bool
    det_min: float
    det_max: float
    det_mean: float
    mismatch: float
    iterations: int
    warm_started: bool
    warm_start_dropped: bool
    phase: str  # "sweep" or "bisection"


@dataclass
class SearchResult:
    alpha: float | None
    velocity: VectorField | None
    trials: list[TrialRecord]
    status: str  # "ok" | "violated_at_start" | "floor_reached"
    anomalies: list[str] = field(default_factory=list)


def det_bounds_ok(
    v: VectorField, eps_det: float, method: str = "cubic", scheme: str = "fd8"
):
    """Check eps_det < det F(1) < 1/eps_det voxelwise.

    Returns (ok, det_min, det_max, det_mean).
    """
    det = solve_deformation_tensor(v, method=method, scheme=scheme).determinant().values
    det_min = float(det.min())
    det_max = float(det.max())
    ok = (det_min > eps_det) and (det_max < 1.0 / eps_det)
    return ok, det_min, det_max, float(det.mean())


def _run_trial(
    m0,
    m1,
    alpha,
    v_warm,
    base_reg: RegConfig,
    cfg: SearchConfig,
    opt: OptimizerConfig,
    distance: str,
    precond: PrecondKind,
    method: str,
    scheme: str,
    phase: str,
):
    reg = replace(base_reg, alpha=alpha)
    warm_started = v_warm is not None
    warm_dropped = False
    v0 = v_warm
    if v_warm is not None:
        # the warm start must not begin above the cold start's objective;
        # at v = 0 the objective is just the raw image mismatch
        j_cold = dist_value(m0, m1, distance)
        deformed = solve_state(m0, v_warm, method=method).final()
        lv = apply_reg_operator(v_warm, reg.operator, reg.alpha)
        j_warm = dist_value(deformed, m1, distance) + 0.5 * l2_inner(lv, v_warm)
        if j_warm > j_cold:
            v0 = None
            warm_started = False
            warm_dropped = True
    v, report = register(
        m0,
        m1,
        config=opt,
        reg=reg,
        distance=distance,
        precond=precond,
        method=method,
        scheme=scheme,
        v0=v0,
        compute_detgrad=False,
    )
    ok, det_min, det_max, det_mean = det_bounds_ok(v, cfg.eps_det, method, scheme)
    record = TrialRecord(
        alpha=alpha,
        passed=ok,
        det_min=det_min,
        det_max=det_max,
        det_mean=det_mean,
        mismatch=report.mismatch,
        iterations=report.iterations,
        warm_started=warm_started,
        warm_start_dropped=warm_dropped,
        phase=phase,
    )
    return v, record


def search_alpha(
    m0: ScalarField,
    m1: ScalarField,
    cfg: SearchConfig | None = None,
    reg: RegConfig | None = None,
    opt: OptimizerConfig | None = None,
    distance: str = "ssd",
    precond: PrecondKind | None = None,
    method: str = "cubic",
    scheme: str = "fd8",
) -> SearchResult:
    """Smallest regularization weight whose solution keeps the determinant
    bounds, found by a decade sweep plus fixed-depth linear bisection."""
    cfg = cfg or SearchConfig()
    reg = reg or RegConfig()
    opt = opt or OptimizerConfig()
    precond = precond or PrecondKind()
    common = dict(
        base_reg=reg, cfg=cfg, opt=opt, distance=distance,
        precond=precond, method=method, scheme=scheme,
    )

    trials: list[TrialRecord] = []
    alpha = cfg.alpha_start
    v_prev: VectorField | None = None
    best_alpha: float | None = None
    best_v: VectorField | None = None
    fail_alpha: float | None = None

    while True:
        v, rec = _run_trial(m0, m1, alpha, v_prev, phase="sweep", **common)
        trials.append(rec)
        v_prev = v
        if rec.passed:
            best_alpha, best_v = alpha, v
            if rec.iterations == 0 and np.max(np.abs(v.data)) == 0.0:
                # already registered: the solution stays at rest for every
                # smaller alpha, so there is nothing to bracket
                return SearchResult(best_alpha, best_v, trials, "ok")
            next_alpha = alpha / cfg.decade_factor
            if next_alpha < cfg.alpha_floor:
                return SearchResult(best_alpha, best_v, trials, "floor_reached")
            alpha = next_alpha
        else:
            fail_alpha = alpha
            break

    if best_alpha is None:
        return SearchResult(None, None, trials, "violated_at_start")

    lo, hi = fail_alpha, best_alpha
    for _ in range(cfg.bisection_depth):
        mid = 0.5 * (lo + hi)
        v, rec = _run_trial(m0, m1, mid, v_prev, phase="bisection", **common)
        trials.append(rec)
        v_prev = v
        if rec.passed:
            best_alpha, best_v = mid, v
            hi = mid
        else:
            lo = mid

    anomalies = _monotonicity_anomalies(trials)
    return SearchResult(best_alpha, best_v, trials, "ok", anomalies)


def _monotonicity_anomalies(trials: list[TrialRecord]) -> list[str]:
    """Pass/fail labels should be monotone in alpha; log any violation."""
    out = []
    by_alpha = sorted(trials, key=lambda t: t.alpha)
    largest_fail = max((t.alpha for t in by_alpha if not t.passed), default=None)
    if largest_fail is None:
        return out
    for t in by_alpha:
        if t.passed and t.alpha < largest_fail:
            out.append(
                f"alpha={t.alpha:.6e} passed below a failing alpha={largest_fail:.6e}"
            )
    return out


def cascade_alphas(alpha_target: float) -> list[float]:
    """Continuation schedule: decades from 1 down to the order of the
    target, then the target itself."""
    if not (0.0 < alpha_target <= 1.0):
        raise ValueError("alpha_target must lie in (0, 1]")
    alphas = [1.0]
    decade = int(np.floor(np.log10(alpha_target)))
    for p in range(-1, decade - 1, -1):
        alphas.append(10.0**p)
    if not np.isclose(alphas[-1], alpha_target, rtol=1e-12):
        alphas.append(alpha_target)
    return alphas


def continuation_solve(
    m0: ScalarField,
    m1: ScalarField,
    alpha_target: float,
    reg: RegConfig | None = None,
    opt: OptimizerConfig | None = None,
    distance: str = "ssd",
    precond: PrecondKind | None = None,
    method: str = "cubic",
    scheme: str = "fd8",
):
    """Warm-started cascade 1, 1e-1, ... down to the decade of
    ``alpha_target``, then one final solve at the target itself.

    Returns (velocity, aggregate report, per-stage reports); counters in
    the aggregate are summed over all stages.
    """
    reg = reg or RegConfig()
    opt = opt or OptimizerConfig()
    precond = precond or PrecondKind()
    alphas = cascade_alphas(alpha_target)

    v: VectorField | None = None
    stage_reports: list[SolveReport] = []
    total = SolveReport()
    for a in alphas:
        v, rep = register(
            m0,
            m1,
            config=opt,
            reg=replace(reg, alpha=a),
            distance=distance,
            precond=precond,
            method=method,
            scheme=scheme,
            v0=v,
            compute_detgrad=(a == alphas[-1]),
        )
        stage_reports.append(rep)
        total.iterations += rep.iterations
        total.matvecs += rep.matvecs
        total.pde_solves += rep.pde_solves
        total.line_search_evals += rep.line_search_evals
        total.precond_fallbacks += rep.precond_fallbacks
        total.runtime += rep.runtime
    last = stage_reports[-1]
    total.mismatch = last.mismatch
    total.gradient = last.gradient
    total.status = last.status
    total.exit_reason = last.exit_reason
    total.detgrad_min = last.detgrad_min
    total.detgrad_mean = last.detgrad_mean
    total.detgrad_max = last.detgrad_max
    total.trace = [row for rep in stage_reports for row in rep.trace]
    return v, total, stage_reports


_TRIAL_COLUMNS = (
    "alpha",
    "passed",
    "det_min",
    "det_max",
    "det_mean",
    "mismatch",
    "iterations",
    "warm_started",
    "warm_start_dropped",
    "phase",
)


def write_trials_csv(path, trials: list[TrialRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_TRIAL_COLUMNS)
        for t in trials:
            w.writerow(
                [
                    f"{t.alpha:.9e}",
                    int(t.passed),
                    f"{t.det_min:.6e}",
                    f"{t.det_max:.6e}",
                    f"{t.det_mean:.6e}",
                    f"{t.mismatch:.6e}",
                    t.iterations,
                    int(t.warm_started),
                    int(t.warm_start_dropped),
                    t.phase,
                ]
            )
