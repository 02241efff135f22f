"""Command line front end: convergence studies, element inspection and verification suites.

Exit codes: 0 on success, 1 on numerical or verification failure, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .element import geometry_report, parse_space
from .errors import HexDivError
from .geometry import Hexahedron
from .mesh import Mesh
from .solver import StudyResult, StudyRow, run_single, run_study
from .verify import SUITES, seed_from_env


def _n_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid n list {text!r}") from None
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("n values must be positive integers")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise argparse.ArgumentTypeError("n values must be strictly increasing")
    return values


def _space(text):
    try:
        return parse_space(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser():
    parser = argparse.ArgumentParser(prog="hexdiv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    st = sub.add_parser("study", help="run a convergence study and write an error table")
    st.add_argument("--mesh", choices=["cube", "trapezoid", "pillar", "file"], default="cube")
    st.add_argument("--mesh-file", help="JSON mesh for --mesh file")
    st.add_argument("--n", type=_n_list, default=[2, 6], help="comma separated, e.g. 2,6,12")
    st.add_argument("--space", type=_space, default="at0",
                    help="at0 | at0g | at1 | at1red | atr:<r>[:red] | rt0 | rt1 | bddf1")
    st.add_argument("--at1-mode", choices=["auto", "symmetric", "nonsymmetric"], default="auto")
    st.add_argument("--cnu-threshold", type=float, default=1e-8,
                    help="relative det(C∘H) below which symmetric AT1 is refused")
    st.add_argument("--format", choices=["csv", "md"], default="csv")
    st.add_argument("--output", "-o", help="output file (default: stdout)")
    st.add_argument("--rtol", type=float, default=1e-12, help="CG relative residual")

    ce = sub.add_parser("check-element", help="print the geometry report of one hexahedron")
    ce.add_argument("path", help='JSON file with {"vertices": [[x, y, z] * 8]}')

    ve = sub.add_parser("verify", help="run a property suite")
    ve.add_argument("suite", choices=sorted(SUITES))
    ve.add_argument("--seed", type=int, default=None, help="default: $HEXDIV_SEED or built-in")
    ve.add_argument("--count", type=int, default=None, help="number of random instances")
    return parser


def _write(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_study(args):
    if args.mesh == "file":
        if not args.mesh_file:
            raise _UsageError("--mesh file needs --mesh-file")
        mesh = Mesh.load(args.mesh_file)
        sol, (ep, eu, ed), secs = run_single(mesh, args.space, args.at1_mode, args.rtol,
                                             args.cnu_threshold)
        n = round(mesh.n_cells ** (1 / 3))
        result = StudyResult(args.space, "file", [StudyRow("file", n, mesh.n_cells,
                                                           sol.system.n_multipliers, ep, eu, ed,
                                                           seconds=secs)])
    else:
        if args.mesh in ("trapezoid", "pillar") and any(n % 2 for n in args.n):
            raise _UsageError(f"--mesh {args.mesh} needs even n values")
        result = run_study(args.space, args.mesh, args.n, args.at1_mode, args.rtol,
                           cnu_threshold=args.cnu_threshold)
    text = result.to_csv() if args.format == "csv" else result.to_markdown()
    _write(text, args.output)
    return 0


def cmd_check_element(args):
    with open(args.path) as fh:
        data = json.load(fh)
    verts = data["vertices"] if isinstance(data, dict) else data
    hexa = Hexahedron(np.asarray(verts, dtype=float))
    rep = geometry_report(hexa)
    minors = ", ".join(f"{''.join(str(i + 1) for i in k)}: {v:.6g}" for k, v in rep.H_minors.items())
    print(f"parallel face pairs: {rep.parallel_pairs}")
    print(f"truncated pillar: {str(rep.is_truncated_pillar).lower()}")
    print(f"principal minors of H: {minors}")
    print(f"det(C∘H): {rep.cnu_det:.12g}")
    print(f"cond(C∘H): {rep.cnu_condition:.6g}")
    print(f"relative det(C∘H): {rep.cnu_relative_det:.6g}")
    print(f"recommended AT1 mode: {rep.recommended_mode}")
    return 0


def cmd_verify(args):
    seed = seed_from_env() if args.seed is None else args.seed
    kwargs = {"seed": seed}
    if args.count is not None:
        kwargs["count"] = args.count
    report = SUITES[args.suite](**kwargs)
    print(f"seed {seed}")
    print(report.summary())
    for msg in report.failures:
        print(f"  FAIL {msg}")
    return 0 if report.ok else 1


class _UsageError(Exception):
    pass


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"study": cmd_study, "check-element": cmd_check_element, "verify": cmd_verify}
    try:
        return handlers[args.command](args)
    except _UsageError as exc:
        parser.error(str(exc))
    except (HexDivError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
