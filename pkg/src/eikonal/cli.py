"""Command-line front end.

Subcommands: verify-ops, eval, residual, transform, fmm-compare.  Exit codes:
0 success, 1 verification failure, 2 unreadable or invalid input.  Every
artifact carries the tool version, a hash of the effective configuration and
the seed in its header so runs can be reproduced byte for byte.
"""
from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .algebra import PolyParseError, parse_poly, tau_names
from .grid import GridField, GridFormatError, atomic_write, read_grid, write_grid

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

BUNDLED = {
    "symmeik1": "symmeik1_n3.json",
    "negative": "negative_controls_n3.json",
}


class InputError(Exception):
    """Invalid spec or input file; maps to exit code 2."""


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def header_lines(command: str, config: dict, seed) -> list[str]:
    return [
        f"eikonal {__version__}",
        f"command={command} config={config_hash(config)} seed={seed}",
        "config " + json.dumps(config, sort_keys=True, separators=(",", ":"), default=str),
    ]


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_json(path, payload: dict) -> None:
    """Non-finite numbers become ``null`` so the output stays strict JSON."""
    text = json.dumps(_json_safe(payload), indent=2, sort_keys=True, allow_nan=False)
    atomic_write(path, text + "\n")


# -- verify-ops --------------------------------------------------------------------


def cmd_verify_ops(args) -> int:
    from .symmetry import is_symmetry, load_catalog, multiplier_text, sampled_symmetry_check

    if args.spec:
        source = args.spec
    else:
        source = json.loads(resources.files("eikonal.data").joinpath(BUNDLED[args.bundled]).read_text())
    try:
        problem, ops = load_catalog(source)
    except (ValueError, OSError) as exc:
        raise InputError(str(exc)) from exc

    rows = []
    ok_all = True
    for fld, expect in ops:
        verdict = is_symmetry(fld, problem)
        got = "yes" if verdict.holds else "no"
        row = {"name": fld.name, "verdict": got, "expect": expect, "as_expected": got == expect}
        if verdict.holds:
            row["multiplier"] = multiplier_text(verdict, problem.n)
        else:
            row["violated"] = verdict.violated
        if args.samples:
            row["sampled_residual"] = sampled_symmetry_check(fld, problem, samples=args.samples, seed=args.seed)
        ok_all &= row["as_expected"]
        rows.append(row)
        detail = f"lambda = {row['multiplier']}" if verdict.holds else f"violates {row['violated']}"
        note = "" if row["as_expected"] else "  UNEXPECTED"
        if not verdict.holds and expect == "no":
            note = "  (expected failure)"
        print(f"{fld.name:8s} {got:3s} {detail}{note}")
    passed = sum(r["verdict"] == "yes" for r in rows)
    print(f"{passed} yes / {len(rows) - passed} no; {'all as expected' if ok_all else 'MISMATCH'}")
    if args.out:
        config = {"catalog": str(args.spec or args.bundled), "n": problem.n, "c": problem.c, "samples": args.samples}
        _write_json(args.out, {"header": header_lines("verify-ops", config, args.seed), "operators": rows,
                               "ok": ok_all})
    return EXIT_OK if ok_all else EXIT_FAIL


# -- eval --------------------------------------------------------------------------


def _parse_grid(spec: dict) -> GridField:
    try:
        g = spec["grid"]
        shape = [int(s) for s in g["shape"]]
        return GridField(g["origin"], g["spacing"], np.zeros(shape))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad grid block: {exc}") from exc


def _build_solution(spec: dict):
    from .solutions import Euclid2Solution, ParametricSolution, Rank0Solution

    try:
        if spec.get("metric", "minkowski") == "euclidean":
            return Euclid2Solution(parse_poly(spec.get("psi", "0"), tau_names(1)))
        n, rank = int(spec["n"]), int(spec["rank"])
        if int(spec.get("c", 1)) != 1:
            raise InputError("only c = 1 parametric solutions are available")
        if rank == 0:
            lin = spec["linear"]
            return Rank0Solution(tuple(lin["c"]), float(lin.get("c0", 0.0)))
        return ParametricSolution.from_strings(n, rank, spec.get("psi", "0"), spec.get("w", []))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad solution spec: {exc}") from exc


def _eval_rows(sol, pts, branch, seed):
    """Rows of (x..., u, residual, branch_id, newton_iters) plus the degenerate count."""
    from .solutions import (Euclid2Solution, Rank0Solution, eval_rank0, envelope_residual,
                            select_branch, solve_envelope_many, _euclid_box)

    if isinstance(sol, Rank0Solution):
        u = eval_rank0(sol, pts)
        g = sol.gradient
        res = abs(float(g[0] ** 2 - g[1:] @ g[1:]) - 1.0)
        return [(*x, ui, res, 0, 0) for x, ui in zip(pts, np.atleast_1d(u))], 0
    box = _euclid_box(None) if isinstance(sol, Euclid2Solution) else None
    roots = solve_envelope_many(sol, pts, box, seed=seed, on_degenerate="mark")
    rows, degenerate = [], 0
    for x, rs in zip(pts, roots):
        if rs is None:
            degenerate += 1
        chosen = select_branch(rs, branch)
        if not chosen:
            rows.append((*x, math.nan, math.nan, -1, 0))
        for r in chosen:
            rows.append((*x, r.u, envelope_residual(sol, r), r.branch_id, r.newton_iters))
    return rows, degenerate


def cmd_eval(args) -> int:
    spec = _load_json(args.spec)
    branch = args.branch or spec.get("branch", "min-u")
    if branch not in ("min-u", "max-u", "all"):
        raise InputError(f"unknown branch policy {branch!r}")
    seed = args.seed if args.seed is not None else int(spec.get("seed", 0))
    sol = _build_solution(spec)
    geom = _parse_grid(spec)
    if geom.d != sol_dim(sol):
        raise InputError(f"grid has {geom.d} axes, solution needs {sol_dim(sol)}")
    pts = geom.nodes().reshape(-1, geom.d)
    rows, degenerate = _eval_rows(sol, pts, branch, seed)

    euclid = spec.get("metric", "minkowski") == "euclidean"
    coords = [f"x{i + 1}" for i in range(geom.d)] if euclid else [f"x{i}" for i in range(geom.d)]
    config = dict(spec, branch=branch, seed=seed, tol=args.tol)
    buf = io.StringIO()
    for line in header_lines("eval", config, seed):
        buf.write(f"# {line}\n")
    buf.write(",".join(coords + ["u", "residual", "branch_id", "newton_iters"]) + "\n")
    for r in rows:
        buf.write(",".join([repr(float(v)) for v in r[:-2]] + [str(int(r[-2])), str(int(r[-1]))]) + "\n")
    if args.out:
        atomic_write(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())

    res = np.array([r[-3] for r in rows], dtype=float)
    finite = res[np.isfinite(res)]
    worst = float(finite.max()) if finite.size else math.nan
    missing = int(np.sum(~np.isfinite(res)))
    print(f"max residual {worst:.3e} over {finite.size} roots; {missing} nodes without a root; "
          f"{degenerate} degenerate", file=sys.stderr)
    return EXIT_OK if finite.size and worst <= args.tol else EXIT_FAIL


def sol_dim(sol) -> int:
    return sol.n + 1 if hasattr(sol, "n") else len(sol.c)


# -- residual ----------------------------------------------------------------------


def _read_field(path) -> GridField:
    try:
        return read_grid(path)
    except (GridFormatError, OSError) as exc:
        raise InputError(str(exc)) from exc


def cmd_residual(args) -> int:
    from .solutions import residual
    from .transforms import verify_hj

    field = _read_field(args.field)
    try:
        if args.equation == "hj":
            dev = verify_hj(field)
        else:
            sig = (1,) * field.d if args.equation == "euclidean" else None
            dev = residual(field, c=args.c, signature=sig)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    print(f"max deviation {dev:.3e} ({args.equation})")
    if args.out:
        config = {"field": str(args.field), "equation": args.equation, "c": args.c, "tol": args.tol}
        _write_json(args.out, {"header": header_lines("residual", config, args.seed), "max_deviation": dev})
    return EXIT_OK if dev <= args.tol else EXIT_FAIL


# -- transform ---------------------------------------------------------------------


def cmd_transform(args) -> int:
    from .transforms import (TransformError, hodograph, inverse_legendre_1var, legendre_1var,
                             verify_eikonal_image, verify_linearized_ode)

    field = _read_field(args.input)
    target = tuple(args.target) if args.target else None
    if target is not None:
        target = (float(target[0]), float(target[1]), int(target[2]))
    try:
        if args.kind == "legendre":
            out = legendre_1var(field, target)
            metric, label = verify_linearized_ode(out), "linearized ODE deviation"
        elif args.kind == "inverse-legendre":
            out = inverse_legendre_1var(field, target)
            metric, label = None, None
        else:
            out = hodograph(field, target)
            metric, label = verify_eikonal_image(out), "image deviation |w_a w_a - 1|"
    except TransformError as exc:
        print(f"error: {exc} (index {exc.index})", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    config = {"kind": args.kind, "input": str(args.input), "target": target}
    write_grid(out, args.out, header_lines("transform", config, args.seed))
    if label:
        print(f"{label} {metric:.3e}")
    return EXIT_OK


# -- fmm-compare -------------------------------------------------------------------

DEFAULT_FMM = {
    "domain": [[-1.0, 1.0], [-1.0, 1.0]],
    "sizes": [65, 129],
    "sources": [[0.0, 0.0]],
    "values": None,
    "init_radius": 0.1,
    "mode": "fmm",
}


def cmd_fmm_compare(args) -> int:
    from . import fmm

    spec = dict(DEFAULT_FMM)
    if args.spec:
        spec.update(_load_json(args.spec))
    try:
        domain = np.asarray(spec["domain"], dtype=float)
        sizes = [int(s) for s in spec["sizes"]]
        sources = np.atleast_2d(np.asarray(spec["sources"], dtype=float))
        values = spec["values"]
        if domain.shape != (2, 2) or sources.shape[1] != 2 or len(sizes) < 2 or min(sizes) < 3:
            raise ValueError("need a 2-D domain, 2-D sources and at least two sizes >= 3")
        if spec["mode"] not in ("fmm", "self"):
            raise ValueError("mode must be 'fmm' or 'self'")
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad fmm spec: {exc}") from exc

    analytic = fmm.cone_evaluator(sources, values)

    def geometry(n):
        h = (domain[:, 1] - domain[:, 0]) / (n - 1)
        return GridField(domain[:, 0], h, np.zeros((n, n)))

    if spec["mode"] == "self":
        runs = []
        for n in sizes:
            g = geometry(n)
            rep = fmm.compare(g.with_values(analytic(g.nodes())), analytic)
            rep.update(size=n, h=float(g.spacing.max()))
            runs.append(rep)
        report = {"runs": runs, "linf": runs[-1]["linf"], "l2": runs[-1]["l2"], "order": math.nan}
    else:
        report = fmm.refinement_study(
            lambda n: fmm.FmmProblem.point_sources(geometry(n), sources, values, init_radius=spec["init_radius"]),
            analytic, sizes)
    report["backend"] = fmm.BACKEND
    report["header"] = header_lines("fmm-compare", spec, args.seed)
    print(f"linf {report['linf']:.3e}  l2 {report['l2']:.3e}  order {report['order']:.3f}")
    if args.out:
        _write_json(args.out, report)
    return EXIT_OK


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output path (written atomically)")
    common.add_argument("--seed", type=int, help="random seed (default: spec value or 0)")

    parser = argparse.ArgumentParser(prog="eikonal", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"eikonal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-ops", parents=[common], help="check operators against the eikonal equation")
    p.add_argument("--spec", help="catalog JSON; defaults to a bundled catalog")
    p.add_argument("--bundled", choices=sorted(BUNDLED), default="symmeik1")
    p.add_argument("--samples", type=int, default=0, help="also run the sampled check at this many points")
    p.set_defaults(func=cmd_verify_ops)

    p = sub.add_parser("eval", parents=[common], help="evaluate a parametric solution over a grid")
    p.add_argument("--spec", required=True, help="problem spec JSON")
    p.add_argument("--branch", choices=["min-u", "max-u", "all"])
    p.add_argument("--tol", type=float, default=1e-8, help="maximum accepted residual")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("residual", parents=[common], help="finite-difference residual of a grid field")
    p.add_argument("field", help="grid field file")
    p.add_argument("--equation", choices=["minkowski", "euclidean", "hj"], default="minkowski")
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_residual)

    p = sub.add_parser("transform", parents=[common], help="Legendre or hodograph transform of a grid field")
    p.add_argument("kind", choices=["legendre", "inverse-legendre", "hodograph"])
    p.add_argument("input", help="grid field file")
    p.add_argument("--target", nargs=3, metavar=("ORIGIN", "SPACING", "COUNT"),
                   help="lattice for the new first axis")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("fmm-compare", parents=[common], help="fast marching against the analytic cone")
    p.add_argument("--spec", help="JSON overriding domain, sizes, sources, values, init_radius, mode")
    p.set_defaults(func=cmd_fmm_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is None and args.command != "eval":
        args.seed = 0
    if args.command == "transform" and not args.out:
        parser.error("transform needs --out")
    try:
        return args.func(args)
    except (InputError, PolyParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
