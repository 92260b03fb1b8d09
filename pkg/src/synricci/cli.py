"""Command-line interface.

Every command writes one JSON report (to ``--out`` or stdout) holding the
resolved configuration, the library version and the result.  Exit codes:
0 success, 1 internal error, 2 invalid input, 3 a numeric-confidence flag.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bochner import GeometryBudget, theorem15_bound, theorem17_delta
from .curvature import cd_convexity_check, sturm_bounds_for_pair, theta_plus, theta_star, time_window
from .heat import build_witten, heat_flow
from .isometry import covering_number, enumerate_isometries, injection_map, pigeonhole_bound, rigidity_scan
from .mms import GeometryError, ModelManifold, dirac, discretize, parse_config, read_model, read_space, validate

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_CONFIDENCE = 0, 1, 2, 3

log = logging.getLogger("synricci")


class InputError(ValueError):
    """User input that cannot be used; maps to exit code 2."""


# ---------------------------------------------------------------------------
# argument parsing helpers


def _pair(text: str) -> tuple[int, int]:
    try:
        i, j = (int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'i,j', got {text!r}") from None
    return i, j


def _floats(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _tgrid(text: str) -> list[float]:
    kind, _, body = text.partition(":")
    try:
        if kind == "geometric":
            t0, t1, k = body.split(",")
            return np.geomspace(float(t0), float(t1), int(k)).tolist()
        if kind == "linear":
            t0, t1, k = body.split(",")
            return np.linspace(float(t0), float(t1), int(k)).tolist()
        if kind == "list":
            return _floats(body)
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(
        f"expected 'geometric:t0,t1,k', 'linear:t0,t1,k' or 'list:t1,t2,...', got {text!r}"
    )


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="synricci", description="Synthetic Ricci bounds on finite metric measure spaces.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, space=True):
        if space:
            sp.add_argument("--space", help="distance/weight CSV of a finite space")
            sp.add_argument("--edges", help="edge list 'i,j,length[,conductance]' for --space")
            sp.add_argument("--model", help="model manifold config (key=value)")
            sp.add_argument("--resolution", help="override the model resolution (N or NxM)")
        sp.add_argument("--out", help="write the JSON report here instead of stdout")
        sp.add_argument("--seed", type=int, default=0, help="recorded for reproducibility")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("validate", help="check metric measure space invariants")
    common(sp)
    sp.add_argument("--tol", type=float, default=1e-9)

    sp = sub.add_parser("theta", help="estimate the contraction rate of one pair")
    common(sp)
    sp.add_argument("--pair", type=_pair, required=True)
    sp.add_argument("--tgrid", type=_tgrid)
    sp.add_argument("--order", type=int, default=1)
    sp.add_argument("--csv", help="write the contraction curve as CSV")

    sp = sub.add_parser("theta-star", help="localised max of theta over shrinking balls")
    common(sp)
    sp.add_argument("--center", type=int, required=True)
    sp.add_argument("--radii", type=_floats, required=True)
    sp.add_argument("--points", type=int, default=4)
    sp.add_argument("--order", type=int, default=1)

    sp = sub.add_parser("sturm-verify", help="compare theta with the two-sided model bounds")
    common(sp)
    sp.add_argument("--pair", type=_pair, action="append", required=True)
    sp.add_argument("--tgrid", type=_tgrid)
    sp.add_argument("--order", type=int, default=1)
    sp.add_argument("--tol", type=float, help="absolute slack (default max(0.1|theta|, 0.05))")

    sp = sub.add_parser("iso-group", help="enumerate measure-preserving isometries")
    common(sp)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--cover", type=float, help="cover radius a for the pigeonhole certificate")
    sp.add_argument("--node-budget", type=int, default=2_000_000)

    sp = sub.add_parser("bochner-bound", help="evaluate the isometry-group constants")
    common(sp, space=False)
    sp.add_argument("--budget", required=True)

    sp = sub.add_parser("cd-check", help="entropy convexity along a transport interpolation")
    common(sp)
    sp.add_argument("--pair", type=_pair, required=True)
    sp.add_argument("--K", type=float, required=True)
    sp.add_argument("--ts", type=_floats, default=[0.0, 0.25, 0.5, 0.75, 1.0])
    sp.add_argument("--smooth", type=float, default=None, help="heat time used to smooth the Diracs")
    sp.add_argument("--allowance", type=float)
    return p


# ---------------------------------------------------------------------------
# inputs


def _load(args) -> tuple:
    """Return ``(space, model)``; ``model`` is None for CSV spaces."""
    if bool(args.space) == bool(args.model):
        raise InputError("give exactly one of --space or --model")
    if args.space:
        for path in (args.space, args.edges):
            if path and not Path(path).is_file():
                raise InputError(f"file not found: {path}")
        return read_space(args.space, args.edges), None
    if not Path(args.model).is_file():
        raise InputError(f"file not found: {args.model}")
    model, resolution = read_model(args.model)
    if args.resolution:
        parts = [int(p) for p in args.resolution.lower().split("x")]
        resolution = parts[0] if len(parts) == 1 else tuple(parts)
    if resolution is None:
        raise InputError(f"{args.model}: no resolution given (set resolution= or --resolution)")
    return discretize(model, resolution), model


def _check_index(space, *idx):
    for i in idx:
        if not 0 <= i < space.n:
            raise InputError(f"point index {i} out of range for a space with {space.n} points")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return obj


def _config(args) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("verbose",)}
    if getattr(args, "model", None):
        cfg["model_config"] = dict(parse_config(Path(args.model).read_text(), args.model))
    if getattr(args, "budget", None):
        cfg["budget_config"] = dict(parse_config(Path(args.budget).read_text(), args.budget))
    return cfg


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args):
    space, _ = _load(args)
    problems = validate(space, tol=args.tol)
    result = {"n": space.n, "valid": not problems, "problems": problems}
    return result, (EXIT_OK if not problems else EXIT_INPUT)


def _operator(space):
    if not space.has_mesh:
        raise InputError("this command needs mesh edges (use --edges or a model)")
    return build_witten(space)


def _window_grid(space, x, y, tgrid, order):
    """Keep the requested times inside the admissible window of the pair."""
    if tgrid is None:
        return None, []
    lo, hi = time_window(space, x, y)
    kept = [t for t in tgrid if lo * (1 - 1e-12) <= t <= hi * (1 + 1e-12)]
    dropped = [t for t in tgrid if t not in kept]
    if dropped:
        log.warning("dropped %d times outside [%.4g, %.4g] for pair (%d, %d)", len(dropped), lo, hi, x, y)
    if len(kept) < order + 1:
        raise InputError(
            f"only {len(kept)} requested times fall inside [{lo:.4g}, {hi:.4g}] for pair ({x}, {y}); "
            f"an order-{order} fit needs {order + 1}"
        )
    return kept, dropped


def cmd_theta(args):
    space, model = _load(args)
    x, y = args.pair
    _check_index(space, x, y)
    if x == y:
        raise InputError("--pair needs two distinct points")
    grid, dropped = _window_grid(space, x, y, args.tgrid, args.order)
    est = theta_plus(space, _operator(space), x, y, t_grid=grid, order=args.order)
    result = est.to_dict()
    result["dropped_times"] = dropped
    if model is not None:
        result["bounds"] = sturm_bounds_for_pair(model, space, x, y).to_dict()
    if args.csv:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "W", "raw_quotient"])
        for t, W, q in zip(est.t_grid, est.W, est.raw):
            writer.writerow([repr(t), repr(W), repr(q)])
        Path(args.csv).write_text(buf.getvalue())
    return result, (EXIT_CONFIDENCE if est.low_confidence else EXIT_OK)


def cmd_theta_star(args):
    space, _ = _load(args)
    _check_index(space, args.center)
    star = theta_star(
        space, _operator(space), args.center, args.radii, points=args.points, order=args.order, workers=args.workers
    )
    result = star.to_dict()
    low = [list(p) for p, e in sorted(star.estimates.items()) if e.low_confidence and p in star.argmax]
    result["low_confidence_argmax"] = low
    return result, (EXIT_CONFIDENCE if low else EXIT_OK)


def cmd_sturm_verify(args):
    space, model = _load(args)
    if model is None:
        raise InputError("sturm-verify needs --model (bounds are closed-form on model manifolds)")
    op = _operator(space)
    rows, ok = [], True
    for x, y in args.pair:
        _check_index(space, x, y)
        grid, _ = _window_grid(space, x, y, args.tgrid, args.order)
        est = theta_plus(space, op, x, y, t_grid=grid, order=args.order)
        bounds = sturm_bounds_for_pair(model, space, x, y)
        tol = args.tol if args.tol is not None else max(0.1 * abs(est.value), 0.05)
        inside = bounds.contains(est.value, tol)
        ok &= inside
        rows.append({"pair": [x, y], "theta": est.value, "fit_residual": est.fit_residual,
                     "bounds": bounds.to_dict(), "tol": tol, "inside": inside})
    return {"pairs": rows, "all_inside": ok}, (EXIT_OK if ok else EXIT_CONFIDENCE)


def cmd_iso_group(args):
    space, _ = _load(args)
    group = enumerate_isometries(space, tol=args.tol, node_budget=args.node_budget)
    scan = rigidity_scan(space, None, group)
    result = group.to_dict(rigidity_lambda=scan.lam)
    result["rigidity_witness"] = list(scan.witness) if scan.witness else None
    code = EXIT_OK
    if args.cover is not None:
        N, centers = covering_number(space, args.cover)
        cert = injection_map(space, group, centers, args.cover)
        bound = pigeonhole_bound(N)
        result["pigeonhole"] = {
            "a": args.cover, "N": N, "centers": centers, "bound": bound,
            "order_within_bound": group.order <= bound, **cert.to_dict(),
        }
        if not cert.injective:
            code = EXIT_CONFIDENCE
    return result, code


BUDGET_EXTRAS = ("delta1", "C_G")


def cmd_bochner_bound(args):
    if not Path(args.budget).is_file():
        raise InputError(f"file not found: {args.budget}")
    cfg = parse_config(Path(args.budget).read_text(), args.budget)
    extras = {}
    for key in BUDGET_EXTRAS:
        if key in cfg:
            try:
                extras[key] = float(cfg.pop(key))
            except ValueError:
                raise InputError(f"{cfg.where(key)}: {key} must be a number") from None
    try:
        budget = GeometryBudget.from_mapping(cfg, args.budget)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    result = {"group_order": theorem15_bound(budget).to_dict()}
    if len(extras) == 2:
        result["weighted"] = theorem17_delta(budget, extras["delta1"], extras["C_G"])
    elif extras:
        raise InputError(f"{args.budget}: delta1 and C_G must be given together")
    return result, EXIT_OK


def cmd_cd_check(args):
    space, model = _load(args)
    x, y = args.pair
    _check_index(space, x, y)
    op = _operator(space)
    smooth = args.smooth if args.smooth is not None else 4 * space.mesh_h**2
    mu0 = heat_flow(op, dirac(space, x), smooth).density
    mu1 = heat_flow(op, dirac(space, y), smooth).density
    report = cd_convexity_check(space, model, mu0, mu1, args.K, args.ts, allowance=args.allowance)
    result = report.to_dict()
    result["smooth_time"] = smooth
    return result, EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "theta": cmd_theta,
    "theta-star": cmd_theta_star,
    "sturm-verify": cmd_sturm_verify,
    "iso-group": cmd_iso_group,
    "bochner-bound": cmd_bochner_bound,
    "cd-check": cmd_cd_check,
}


def run(argv=None, stdout=None) -> int:
    """Parse ``argv``, run the command and return its exit code."""
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        result, code = COMMANDS[args.command](args)
        report = {"command": args.command, "version": __version__, "config": _config(args), "result": result}
        text = json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"
    except (InputError, GeometryError, ValueError, IndexError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    if args.out:
        Path(args.out).write_text(text)
    else:
        stdout.write(text)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
