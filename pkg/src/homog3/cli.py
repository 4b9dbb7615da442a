"""Command-line entry point.

Exit status is 0 on success, 1 for invalid input and 2 when a computation
cannot meet its accuracy contract.  Diagnostics are a single line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Any, Sequence

import numpy as np

from .cheeger import SWEEP_COLUMNS, UNIT_LATTICE, box_ratio_sweep, quotient_end_report
from .errors import NumericalError, UnsupportedModelError, ValidationError
from .geodesics import cylinder_ratio, geodesic_ball
from .invariant_geometry import cheeger_report, curvature_report, leaf_shape, model_curvature
from .jacobi import PERTURBATIONS, TorusGrid, cmc_continue, jacobi_operator, jacobi_potential, kernel_basis
from .models import Matrix2, ProductS2R, SemidirectModel, frame_data, metric_spec, parse_metric_spec
from .surfaces import (
    divergence_balance,
    horizontal_leaf,
    killing_field,
    normal_field,
    surface_geometry,
)

BALL_COLUMNS = ("r", "volume", "area", "ratio")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit with status 2
        raise ValidationError(message)


# --------------------------------------------------------------------------
# argument parsing helpers


def _floats(text: str, count: int | None = None, what: str = "value") -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ValidationError(f"could not parse {what} {text!r} as comma-separated numbers") from None
    if count is not None and len(vals) != count:
        raise ValidationError(f"{what} needs {count} comma-separated numbers, got {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise ValidationError(f"{what} must be finite")
    return vals


def _ints(text: str, what: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",")]
    except ValueError:
        raise ValidationError(f"could not parse {what} {text!r} as comma-separated integers") from None
    if any(v < 1 for v in vals):
        raise ValidationError(f"{what} must be positive")
    return vals


def _lattice(text: str | None):
    if text is None:
        return UNIT_LATTICE
    v = _floats(text, 4, "lattice")
    return ((v[0], v[1]), (v[2], v[3]))


def _model(args) -> Any:
    if getattr(args, "A", None) is not None:
        return _semidirect(args)
    if args.metric is None:
        raise ValidationError("--metric is required")
    return parse_metric_spec(args.metric)


def _semidirect(args) -> SemidirectModel:
    """Model from ``--A a,b,c,d`` or a semidirect ``--metric``."""
    if getattr(args, "A", None) is not None:
        if args.metric is not None:
            raise ValidationError("give either --A or --metric, not both")
        return SemidirectModel(Matrix2(*_floats(args.A, 4, "A")))
    model = _model(args)
    if not isinstance(model, SemidirectModel):
        raise UnsupportedModelError("this command needs a semidirect model")
    return model


def _finite_arg(value: float, what: str, positive: bool = False) -> float:
    if not math.isfinite(value) or (positive and value <= 0):
        raise ValidationError(f"{what} must be {'positive and ' if positive else ''}finite")
    return value


# --------------------------------------------------------------------------
# commands: a dict for JSON output, or (rows, columns) for tables


def cmd_describe(args):
    model = _model(args)
    out = {"metric": metric_spec(model)}
    out.update(cheeger_report(model))
    return out


def cmd_curvature(args):
    model = _model(args)
    out = {"metric": metric_spec(model)}
    out.update(model_curvature(model).to_dict())
    return out


def cmd_leaf(args):
    m = _semidirect(args)
    z = _finite_arg(args.z, "--z")
    mesh = surface_geometry(m, **horizontal_leaf(z, args.grid))
    shape = leaf_shape(m.A)
    ric = curvature_report(frame_data(m)).ricci[2, 2]
    return {
        "metric": metric_spec(m),
        "z": z,
        "grid": args.grid,
        "mean_curvature": shape.H,
        "mean_curvature_numeric_max_error": float(np.max(np.abs(mesh.mean_curvature - shape.H))),
        "shape_norm_sq": shape.norm_sq,
        "shape_norm_sq_numeric_max_error": float(np.max(np.abs(mesh.shape_norm_sq - shape.norm_sq))),
        "ricci_normal": float(ric),
        "jacobi_potential": jacobi_potential(m.A),
        "second_fundamental_form": shape.sigma.tolist(),
    }


def _mesh(text: str) -> tuple[int, int, int]:
    try:
        parts = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ValidationError(f"mesh must look like 16x32x8, got {text!r}") from None
    if len(parts) != 3:
        raise ValidationError(f"mesh must look like 16x32x8, got {text!r}")
    return parts


def cmd_ball(args):
    m = _semidirect(args)
    center = _floats(args.center, 3, "center")
    r = _finite_arg(args.r, "--r", positive=True)
    rep = geodesic_ball(m, center, r, _mesh(args.mesh), h=_finite_arg(args.h, "--h", positive=True))
    return [dict(zip(BALL_COLUMNS, (rep.r, rep.volume, rep.area, rep.ratio)))], BALL_COLUMNS


def _field(m: SemidirectModel, text: str):
    if text == "normal":
        return normal_field()
    if text.startswith("killing:"):
        w1, w2, s = _floats(text[len("killing:"):], 3, "killing field")
        return killing_field(m, (w1, w2), s)
    raise ValidationError(f"field must be 'normal' or 'killing:w1,w2,s', got {text!r}")


def cmd_divergence(args):
    m = _semidirect(args)
    box = _floats(args.box, 6, "box")
    bal = divergence_balance(m, box, _field(m, args.field), n=args.n)
    out = {"metric": metric_spec(m), "box": box, "field": args.field}
    out.update(bal.to_dict())
    if args.field == "normal":
        out["expected_volume_integral"] = -m.trace * bal.volume
    return out


def cmd_cheeger_box(args):
    m = _semidirect(args)
    ns = _ints(args.ns, "--ns")
    t0s = _floats(args.t0s, None, "--t0s")
    if any(t <= 0 for t in t0s):
        raise ValidationError("--t0s must be positive")
    reports = box_ratio_sweep(m.A, _lattice(args.lattice), ns, t0s)
    return [r.row() for r in reports], SWEEP_COLUMNS


def cmd_quotient_end(args):
    m = _semidirect(args)
    T = _finite_arg(args.T, "--T")
    lattice = _lattice(args.lattice)
    rep = quotient_end_report(m.A, lattice, T)
    nxt = quotient_end_report(m.A, lattice, T + 1.0)
    out = {"metric": metric_spec(m), "lattice": [list(a) for a in lattice]}
    out.update(rep.to_dict())
    out["area_decay_factor"] = nxt.area_quadrature / rep.area_quadrature
    return out


def cmd_jacobi(args):
    m = _semidirect(args)
    grid = TorusGrid(m.A, args.grid, _lattice(args.lattice), _finite_arg(args.z0, "--z0"))
    L = jacobi_operator(grid)
    kern = kernel_basis(L)
    rng = np.random.default_rng(args.seed)
    u, v = rng.standard_normal((2, grid.n * grid.n))
    sym = abs(L.inner(L.apply(u), v) - L.inner(u, L.apply(v))) / (np.linalg.norm(u) * np.linalg.norm(v))
    return {
        "metric": metric_spec(m),
        "grid": grid.n,
        "potential": jacobi_potential(m.A),
        "kernel_dimension": kern.dimension,
        "kernel_mean": [L.integral(f) / grid.area for f in kern.functions],
        "kernel_threshold": kern.threshold,
        "second_eigenvalue": kern.second_eigenvalue,
        "self_adjointness_residual": float(sym),
        "seed": args.seed,
    }


def cmd_continue_cmc(args):
    m = _semidirect(args)
    state = cmc_continue(
        m.A,
        _lattice(args.lattice),
        args.pert,
        eps=_finite_arg(args.eps, "--eps"),
        n=args.grid,
        tol=_finite_arg(args.tol, "--tol", positive=True),
        t=_finite_arg(args.t, "--t"),
    )
    out = {"metric": metric_spec(m), "pert": args.pert, "grid": args.grid}
    out.update(state.to_dict())
    return out


def cmd_cylinder_ratio(args):
    model = _model(args)
    if not isinstance(model, ProductS2R):
        raise UnsupportedModelError("cylinder-ratio needs an s2xr model")
    return {"metric": metric_spec(model), "R": args.R, "ratio": cylinder_ratio(model, args.R)}


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="homog3", description="Geometry of homogeneous 3-manifolds given as metric Lie groups.")
    p.add_argument("--seed", type=int, default=0, help="seed for any randomized checks (default 0)")
    p.add_argument("--out", help="write output to this file instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), help="output format (default per command)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_text, metric=True, A=False):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(func=fn)
        if metric:
            sp.add_argument("--metric", help="JSON metric spec")
        if A:
            sp.add_argument("--A", help="semidirect matrix entries a,b,c,d (row-major)")
        # also accept the global options after the subcommand
        sp.add_argument("--out", default=argparse.SUPPRESS)
        sp.add_argument("--format", choices=("json", "csv"), default=argparse.SUPPRESS)
        sp.add_argument("--seed", type=int, default=argparse.SUPPRESS)
        return sp

    add("describe", cmd_describe, "model summary with Cheeger constant", A=True)
    add("curvature", cmd_curvature, "Ricci tensor, eigenvalues and sectional curvatures", A=True)
    s = add("leaf", cmd_leaf, "geometry of the horizontal leaf at height z", A=True)
    s.add_argument("--z", type=float, default=0.0)
    s.add_argument("--grid", type=int, default=32)
    s = add("ball", cmd_ball, "geodesic ball volume, area and normalized ratio (CSV)", A=True)
    s.add_argument("--r", type=float, required=True)
    s.add_argument("--mesh", default="16x32x8", help="n_theta x n_phi x n_r")
    s.add_argument("--center", default="0,0,0")
    s.add_argument("--h", type=float, default=1e-3, help="RK4 step")
    s = add("divergence", cmd_divergence, "divergence theorem balance on a cuboid", A=True)
    s.add_argument("--box", required=True, help="x0,x1,y0,y1,z0,z1")
    s.add_argument("--field", default="normal", help="normal | killing:w1,w2,s")
    s.add_argument("--n", type=int, default=16, help="Gauss-Legendre nodes per axis")
    s = add("cheeger-box", cmd_cheeger_box, "box-domain isoperimetric ratio sweep (CSV)", A=True)
    s.add_argument("--ns", default="4,8,16,32,64")
    s.add_argument("--t0s", default="1,2,4,8")
    s.add_argument("--lattice", help="a1x,a1y,a2x,a2y (default unit square)")
    s = add("quotient-end", cmd_quotient_end, "volume and boundary area of a quotient end", A=True)
    s.add_argument("--T", type=float, default=0.0)
    s.add_argument("--lattice")
    s = add("jacobi", cmd_jacobi, "discrete Jacobi operator of the leaf torus", A=True)
    s.add_argument("--grid", type=int, default=32)
    s.add_argument("--lattice")
    s.add_argument("--z0", type=float, default=0.0)
    s = add("continue-cmc", cmd_continue_cmc, "Newton continuation of a CMC torus", A=True)
    s.add_argument("--eps", type=float, default=0.01)
    s.add_argument("--pert", default="cos", choices=sorted(PERTURBATIONS))
    s.add_argument("--grid", type=int, default=32)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--t", type=float, default=0.0)
    s.add_argument("--lattice")
    s = add("cylinder-ratio", cmd_cylinder_ratio, "area/volume of S^2 x [0, R]")
    s.add_argument("--R", type=float, required=True)
    return p


TABLE_COMMANDS = {"ball", "cheeger-box"}


def _render(payload, columns, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for row in payload:
        w.writerow({k: repr(float(v)) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def run(argv: Sequence[str] | None = None) -> str:
    """Parse, dispatch and render; raises package errors on failure."""
    args = build_parser().parse_args(argv)
    result = args.func(args)
    if args.command in TABLE_COMMANDS:
        payload, columns = result
        fmt = args.format or "csv"
    else:
        payload, columns = result, None
        fmt = args.format or "json"
        if fmt == "csv":
            raise ValidationError(f"{args.command} only supports JSON output")
    text = _render(payload, columns, fmt)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        return ""
    return text


def main(argv: Sequence[str] | None = None) -> int:
    try:
        text = run(argv)
    except ValidationError as exc:
        print(f"homog3: error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"homog3: numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:  # e.g. JSON serialization of a non-finite result
        print(f"homog3: numerical failure: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
