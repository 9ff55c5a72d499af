"""Command-line front end.

Subcommands: ``register``, ``search-alpha``, ``transport``, ``detgrad``,
``metrics dice``, ``synth``. Exit codes: 0 success, 1 usage, 2 data error,
3 solver failure (reports are still written on solver failure).

Images are rescaled to [0, 1] on ingestion; the scaling bounds land in
``report.json``. Identical invocations with ``--threads 1`` produce
bitwise-identical reports up to the ``runtime`` field.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .continuation import SearchConfig, search_alpha, write_trials_csv
from .diffops import IncompressibilityMode, RegOperatorSpec
from .fields import ScalarField, VectorField
from .kkt import PrecondKind, RegConfig
from .metrics import LabelVolume, dice, transport_labels, write_dice_csv
from .optimizer import OptimizerConfig, register
from .synth import SYNTH_CASES, synth_case
from .transport import solve_deformation_tensor, solve_state
from .volio import VolumeFormatError, read_volume, write_volume

__all__ = ["JobConfig", "main"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SOLVER = 3


@dataclass(frozen=True)
class JobConfig:
    """CLI-visible parameters with their stock defaults."""

    alpha: float = 1e-2
    beta: float = 1e-4
    distance: str = "ssd"
    precond: str = "2level"
    n_t: int = 4
    tol: float = 5e-2
    eps_det: float = 0.1
    maxit: int = 50
    interp: str = "cubic"
    forcing: str = "superlinear"
    seed: int = 0
    threads: int = 0
    precision: str = "f64"
    out_dir: str = "."


_DEFAULTS = JobConfig()


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_common(p: _Parser) -> None:
    p.add_argument("--out-dir", default=_DEFAULTS.out_dir)
    p.add_argument("--threads", type=int, default=_DEFAULTS.threads)
    p.add_argument("--precision", choices=("f32", "f64"), default=_DEFAULTS.precision)
    p.add_argument("--seed", type=int, default=_DEFAULTS.seed)


def _add_solver(p: _Parser) -> None:
    p.add_argument("--template", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--alpha", type=float, default=_DEFAULTS.alpha)
    p.add_argument("--beta", type=float, default=_DEFAULTS.beta)
    p.add_argument("--distance", choices=("ssd", "ncc"), default=_DEFAULTS.distance)
    p.add_argument("--precond", choices=("reg", "h0", "2level"), default=_DEFAULTS.precond)
    p.add_argument("--nt", type=int, default=_DEFAULTS.n_t)
    p.add_argument("--tol", type=float, default=_DEFAULTS.tol)
    p.add_argument("--eps-det", type=float, default=_DEFAULTS.eps_det)
    p.add_argument("--maxit", type=int, default=_DEFAULTS.maxit)
    p.add_argument("--interp", choices=("nearest", "linear", "cubic"), default=_DEFAULTS.interp)
    p.add_argument("--forcing", choices=("superlinear", "quadratic"), default=_DEFAULTS.forcing)


def build_parser() -> _Parser:
    parser = _Parser(prog="flowreg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_reg = sub.add_parser("register", help="register template to reference")
    _add_solver(p_reg)
    _add_common(p_reg)

    p_search = sub.add_parser("search-alpha", help="binary search for the regularization weight")
    _add_solver(p_search)
    _add_common(p_search)

    p_tr = sub.add_parser("transport", help="transport a volume along a velocity")
    p_tr.add_argument("volume")
    p_tr.add_argument("velocity")
    p_tr.add_argument("--nt", type=int, default=_DEFAULTS.n_t)
    p_tr.add_argument("--interp", choices=("nearest", "linear", "cubic"), default=_DEFAULTS.interp)
    _add_common(p_tr)

    p_det = sub.add_parser("detgrad", help="deformation-determinant statistics of a velocity")
    p_det.add_argument("velocity")
    p_det.add_argument("--nt", type=int, default=_DEFAULTS.n_t)
    p_det.add_argument("--interp", choices=("nearest", "linear", "cubic"), default=_DEFAULTS.interp)
    _add_common(p_det)

    p_met = sub.add_parser("metrics", help="registration quality metrics")
    met_sub = p_met.add_subparsers(dest="metric", required=True, parser_class=_Parser)
    p_dice = met_sub.add_parser("dice", help="per-label and union Dice overlap")
    p_dice.add_argument("moving_labels")
    p_dice.add_argument("fixed_labels")
    p_dice.add_argument("velocity", nargs="?", default=None)
    p_dice.add_argument("--nt", type=int, default=_DEFAULTS.n_t)
    _add_common(p_dice)

    p_synth = sub.add_parser("synth", help="generate a synthetic problem")
    p_synth.add_argument("case", choices=SYNTH_CASES)
    p_synth.add_argument("n", type=int)
    p_synth.add_argument("dim", type=int, nargs="?", default=2, choices=(2, 3))
    p_synth.add_argument("--nt", type=int, default=_DEFAULTS.n_t)
    _add_common(p_synth)

    return parser


def _dtype_of(args) -> np.dtype:
    return np.dtype(np.float32 if args.precision == "f32" else np.float64)


def _rescale(field: ScalarField) -> tuple[ScalarField, float, float]:
    lo = float(field.values.min())
    hi = float(field.values.max())
    if hi > lo:
        vals = (field.values - lo) / (hi - lo)
    else:
        vals = np.zeros_like(field.values)
    return ScalarField(field.grid, vals), lo, hi


def _load_pair(args):
    dtype = _dtype_of(args)
    m0 = read_volume(args.template, n_t=args.nt, dtype=dtype)
    m1 = read_volume(args.reference, n_t=args.nt, dtype=dtype)
    if not isinstance(m0, ScalarField) or not isinstance(m1, ScalarField):
        raise VolumeFormatError("register expects scalar image volumes")
    if m0.grid.n != m1.grid.n:
        raise VolumeFormatError(
            f"image dims differ: {m0.grid.n} vs {m1.grid.n}"
        )
    m0s, lo0, hi0 = _rescale(m0)
    m1s, lo1, hi1 = _rescale(m1)
    intensity = {
        "template_min": lo0,
        "template_max": hi0,
        "reference_min": lo1,
        "reference_max": hi1,
    }
    return m0s, m1s, intensity


def _configs(args):
    opt = OptimizerConfig(
        eps_opt=args.tol,
        max_outer=args.maxit,
        forcing=args.forcing,
    )
    reg = RegConfig(
        alpha=args.alpha,
        operator=RegOperatorSpec(),
        incomp=IncompressibilityMode("near-incompressible", args.beta),
    )
    precond = PrecondKind(args.precond)
    return opt, reg, precond


def _config_echo(args) -> dict:
    keep = (
        "alpha", "beta", "distance", "precond", "nt", "tol", "eps_det",
        "maxit", "interp", "forcing", "seed", "threads", "precision",
    )
    out = {}
    for k in keep:
        if hasattr(args, k.replace("-", "_")):
            out[k] = getattr(args, k.replace("-", "_"))
    return out


def _write_report(out_dir: Path, payload: dict) -> None:
    with open(out_dir / "report.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _residual(a: ScalarField, b: ScalarField) -> ScalarField:
    return ScalarField(a.grid, np.abs(a.values - b.values))


def _cmd_register(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    m0, m1, intensity = _load_pair(args)
    opt, reg, precond = _configs(args)
    v, report = register(
        m0, m1, config=opt, reg=reg, distance=args.distance,
        precond=precond, method=args.interp,
    )
    deformed = solve_state(m0, v, method=args.interp).final()
    write_volume(v, out_dir / "velocity.clf")
    write_volume(deformed, out_dir / "deformed.clf")
    write_volume(_residual(m0, m1), out_dir / "residual-before.clf")
    write_volume(_residual(deformed, m1), out_dir / "residual-after.clf")
    payload = report.to_dict()
    payload["config"] = _config_echo(args)
    payload["intensity"] = intensity
    _write_report(out_dir, payload)
    return EXIT_OK if report.status == "converged" else EXIT_SOLVER


def _cmd_search_alpha(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    m0, m1, intensity = _load_pair(args)
    opt, reg, precond = _configs(args)
    cfg = SearchConfig(eps_det=args.eps_det)
    result = search_alpha(
        m0, m1, cfg=cfg, reg=reg, opt=opt, distance=args.distance,
        precond=precond, method=args.interp,
    )
    write_trials_csv(out_dir / "trials.csv", result.trials)
    payload = {
        "status": result.status,
        "alpha": result.alpha,
        "anomalies": result.anomalies,
        "trials": len(result.trials),
        "config": _config_echo(args),
        "intensity": intensity,
    }
    if result.velocity is not None:
        write_volume(result.velocity, out_dir / "velocity.clf")
        deformed = solve_state(m0, result.velocity, method=args.interp).final()
        write_volume(deformed, out_dir / "deformed.clf")
        write_volume(_residual(m0, m1), out_dir / "residual-before.clf")
        write_volume(_residual(deformed, m1), out_dir / "residual-after.clf")
    _write_report(out_dir, payload)
    return EXIT_OK if result.status in ("ok", "floor_reached") else EXIT_SOLVER


def _cmd_transport(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dtype = _dtype_of(args)
    vol = read_volume(args.volume, n_t=args.nt, dtype=dtype)
    vel = read_volume(args.velocity, n_t=args.nt, dtype=dtype)
    if not isinstance(vel, VectorField):
        raise VolumeFormatError("velocity file must hold a vector field")
    if isinstance(vol, LabelVolume):
        moved = transport_labels(vol, vel, method=args.interp)
    elif isinstance(vol, ScalarField):
        if vol.grid.n != vel.grid.n:
            raise VolumeFormatError("volume and velocity dims differ")
        moved = solve_state(vol, vel, method=args.interp).final()
    else:
        raise VolumeFormatError("transport expects a scalar or label volume")
    write_volume(moved, out_dir / "deformed.clf")
    return EXIT_OK


def _cmd_detgrad(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dtype = _dtype_of(args)
    vel = read_volume(args.velocity, n_t=args.nt, dtype=dtype)
    if not isinstance(vel, VectorField):
        raise VolumeFormatError("velocity file must hold a vector field")
    det = solve_deformation_tensor(vel, method=args.interp).determinant()
    stats = {
        "det_min": float(det.values.min()),
        "det_mean": float(det.values.mean()),
        "det_max": float(det.values.max()),
    }
    write_volume(det, out_dir / "detgrad.clf")
    with open(out_dir / "detgrad.json", "w") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(stats, sort_keys=True))
    return EXIT_OK


def _cmd_dice(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    moving = read_volume(args.moving_labels, n_t=args.nt)
    fixed = read_volume(args.fixed_labels, n_t=args.nt)
    if not isinstance(moving, LabelVolume) or not isinstance(fixed, LabelVolume):
        raise VolumeFormatError("dice expects label volumes (dtype code 3)")
    if args.velocity is not None:
        vel = read_volume(args.velocity, n_t=args.nt)
        if not isinstance(vel, VectorField):
            raise VolumeFormatError("velocity file must hold a vector field")
        moving = transport_labels(moving, vel)
    result = dice(moving, fixed)
    write_dice_csv(out_dir / "dice.csv", {k: [s] for k, s in result.per_id.items()})
    print(json.dumps({"union": result.union, "labels": len(result.per_id)}, sort_keys=True))
    return EXIT_OK


def _cmd_synth(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    m0, m1, v = synth_case(args.case, args.n, seed=args.seed, d=args.dim, n_t=args.nt)
    if args.precision == "f32":
        grid = m0.grid.with_dtype(np.float32)
        m0 = ScalarField(grid, m0.values)
        m1 = ScalarField(grid, m1.values)
        v = VectorField(grid, v.data)
    write_volume(m0, out_dir / "m0.clf")
    write_volume(m1, out_dir / "m1.clf")
    write_volume(v, out_dir / "vtrue.clf")
    return EXIT_OK


_COMMANDS = {
    "register": _cmd_register,
    "search-alpha": _cmd_search_alpha,
    "transport": _cmd_transport,
    "detgrad": _cmd_detgrad,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.threads and args.threads > 0:
        _kernels.set_num_threads(args.threads)
    try:
        if args.command == "metrics":
            return _cmd_dice(args)
        return _COMMANDS[args.command](args)
    except (VolumeFormatError, FileNotFoundError, IsADirectoryError, ValueError) as exc:
        print(f"flowreg: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
