"""Command line entry points.

Subcommands: ``mesh gen`` (write a fixture to OFF), ``spectrum``
(certified low eigenvalues of one pencil), ``audit`` (inequality suite
with a two-refinement discretization allowance), ``heisenberg`` (Kohn
sublaplacian spectrum and audit on a box), ``lemma-check`` (randomized
commutator identity trials).

Exit status: 0 when everything passed, 2 when at least one audit record
or identity trial failed, 1 for usage or runtime errors.

``SPECTRA_THREADS`` in the environment caps the linear algebra thread
pools (the package honors it on first import).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .audit import (AUDIT_TOL, audit_closed, audit_dirichlet, closed_spectra,
                    discretization_allowance, emit_report)
from .commutator import run_trials
from .dec import dirichlet_laplacian, hodge_laplacian
from .eigensolve import solve_pair
from .heisenberg import audit_kohn, heisenberg_grid, kohn_spectrum
from .mesh import generate, load_mesh, save_mesh

# Relative residual allowed for the commutator identity trials, and the
# degenerate-eigenspace coupling allowed after adaptation.
LEMMA_TOL = 1e-9
COUPLING_TOL = 1e-10

M_DIM = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; reserve 2 for audit failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# -- fixture names ---------------------------------------------------------

_FIXTURES = {
    "icosphere": ("closed", lambda r: generate("icosphere", radius=1.0, refinement=r)),
    "clifford": ("closed", lambda n: generate("clifford_torus", n_u=n, n_v=n)),
    "square": ("dirichlet", lambda n: generate("flat_rectangle", a=1.0, b=1.0, n_x=n, n_y=n)),
    "cap": ("dirichlet", lambda r: generate("geodesic_cap", angle=np.pi / 3.0, refinement=r)),
}


def _parse_fixture(name):
    """Split a fixture name like icosphere4 or clifford64 into family and level."""
    for family in _FIXTURES:
        if name.startswith(family) and name[len(family):].isdigit():
            return family, int(name[len(family):])
    raise ValueError(
        f"unknown fixture {name!r}; expected one of "
        + ", ".join(f"{f}<level>" for f in _FIXTURES))


def _build_fixture(family, level):
    suite, builder = _FIXTURES[family]
    return builder(level), suite


def _coarser_level(family, level):
    """Next coarser refinement level used for the Richardson allowance."""
    if family == "clifford" or family == "square":
        if level % 2:
            raise ValueError(f"{family} level {level} has no half-size coarsening")
        coarse = level // 2
    else:
        coarse = level - 1
    if coarse < 1:
        raise ValueError(f"{family}{level} is too coarse for a Richardson comparison")
    return coarse


def _load_potential(path, mesh):
    """Potential from CSV rows of (vertex index, value); absent vertices get 0."""
    table = np.loadtxt(path, dtype=float, delimiter=",", ndmin=2)
    if table.shape[1] != 2:
        raise ValueError("potential file must have rows of vertex_index,value")
    idx = table[:, 0]
    if (idx != np.round(idx)).any():
        raise ValueError("potential vertex indices must be integers")
    idx = idx.astype(int)
    if (idx < 0).any() or (idx >= mesh.num_vertices).any():
        raise ValueError(
            f"potential vertex index out of range 0..{mesh.num_vertices - 1}")
    if len(np.unique(idx)) != len(idx):
        raise ValueError("duplicate vertex index in potential file")
    q = np.zeros(mesh.num_vertices)
    q[idx] = table[:, 1]
    return q


def _parse_params(items):
    params = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ValueError(f"parameters must look like key=value, got {item!r}")
        try:
            params[key] = int(value)
        except ValueError:
            try:
                params[key] = float(value)
            except ValueError:
                raise ValueError(f"parameter {key}={value!r} is not a number") from None
    return params


def _write(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


# -- subcommands -------------------------------------------------------------


def _cmd_mesh(args):
    if args.action != "gen":
        raise ValueError(f"unknown mesh action {args.action!r}")
    mesh = generate(args.shape, **_parse_params(args.params))
    save_mesh(mesh, args.out)
    print(f"wrote {args.out}: {mesh.num_vertices} vertices, "
          f"{mesh.num_faces} faces, ambient R^{mesh.ambient_dim}")
    return 0


def _cmd_spectrum(args):
    try:
        family, level = _parse_fixture(args.mesh)
        mesh, _ = _build_fixture(family, level)
    except ValueError:
        mesh = load_mesh(args.mesh)
    if args.dirichlet:
        if args.p != 0:
            raise ValueError("the Dirichlet pencil is a 0-form problem; drop -p")
        q = _load_potential(args.q, mesh) if args.q else None
        pair = dirichlet_laplacian(mesh, q)
    else:
        if args.q:
            raise ValueError("--q requires --dirichlet")
        pair = hodge_laplacian(mesh, args.p)
    result = solve_pair(pair, k=args.k, tol=args.tol, seed=args.seed)
    payload = result.to_json_dict(args.p)
    payload["dirichlet"] = bool(args.dirichlet)
    _write(json.dumps(payload, indent=2, sort_keys=True) + "\n", args.out)
    return 0


def _cmd_audit(args):
    family, level = _parse_fixture(args.mesh)
    mesh, suite = _build_fixture(family, level)
    if args.suite != suite:
        raise ValueError(f"fixture {args.mesh} belongs to the {suite!r} suite")
    coarse_mesh, _ = _build_fixture(family, _coarser_level(family, level))
    k = args.j_max + M_DIM

    if suite == "closed":
        fine = closed_spectra(mesh, k, tol=args.tol, seed=args.seed)
        coarse = closed_spectra(coarse_mesh, k, tol=args.tol, seed=args.seed)
        allowance = discretization_allowance(fine, coarse)
        records, spectra = audit_closed(
            mesh, j_max=args.j_max, tol_audit=args.tol_audit,
            allowance=allowance, spectra=fine)
    else:
        q = _load_potential(args.q, mesh) if args.q else None
        ambient = args.ambient if args.ambient else ("sphere" if family == "cap" else "flat")
        fine_pair = dirichlet_laplacian(mesh, q)
        fine_spec = solve_pair(fine_pair, k=k, tol=args.tol, seed=args.seed)
        # The potential file matches the fine mesh only; the allowance is
        # estimated from the zero-potential pencils, whose discretization
        # error converges at the same rate.
        coarse_spec = solve_pair(dirichlet_laplacian(coarse_mesh, None),
                                 k=k, tol=args.tol, seed=args.seed)
        allowance = discretization_allowance({0: fine_spec}, {0: coarse_spec})
        records, spectrum = audit_dirichlet(
            mesh, potential=q, ambient=ambient, j_max=args.j_max,
            tol_audit=args.tol_audit, allowance=allowance, spectrum=fine_spec)
        spectra = {0: spectrum}

    text = emit_report(records, args.mesh, level, spectra=spectra, fmt=args.fmt)
    _write(text, args.out)
    failures = [r for r in records if not r["pass"]]
    for rec in failures:
        print(f"AUDIT FAILURE {rec['ineq']} p={rec['p']} j={rec['j']} "
              f"lhs={rec['lhs']!r} rhs={rec['rhs']!r}", file=sys.stderr)
    return 2 if failures else 0


def _cmd_heisenberg(args):
    if args.n not in (1, 2):
        raise ValueError(f"only n in {{1, 2}} is supported, got n={args.n}")
    grid = heisenberg_grid(args.n, args.box[0], args.box[1], args.grid)
    k = max(args.k, args.j_max + args.n)
    result = kohn_spectrum(grid, k=k, tol=args.tol, seed=args.seed)
    records = audit_kohn(result.eigenvalues, args.n, args.j_max,
                         tol_audit=args.tol_audit)
    name = f"heisenberg-n{args.n}"
    text = emit_report(records, name, args.grid,
                       spectra={"kohn": result}, fmt=args.fmt)
    _write(text, args.out)
    failures = [r for r in records if not r["pass"]]
    for rec in failures:
        print(f"AUDIT FAILURE {rec['ineq']} j={rec['j']} "
              f"lhs={rec['lhs']!r} rhs={rec['rhs']!r}", file=sys.stderr)
    return 2 if failures else 0


def _cmd_lemma_check(args):
    ok = True
    reports = []
    for degenerate, count in ((False, args.trials), (True, args.degenerate_trials)):
        if count <= 0:
            continue
        records = run_trials(count, dim_min=args.dim_min, dim_max=args.dim_max,
                             seed=args.seed + (1 if degenerate else 0),
                             degenerate=degenerate)
        rel = max(r["max_residual"] / r["scale"] for r in records)
        ok = ok and rel <= LEMMA_TOL
        run = {"degenerate": degenerate, "trials": count,
               "max_relative_residual": rel}
        if degenerate:
            coupling = max(r["max_coupling"] / r["coupling_scale"] for r in records)
            run["max_relative_coupling"] = coupling
            ok = ok and coupling <= COUPLING_TOL
        reports.append(run)
    payload = {"dim_min": args.dim_min, "dim_max": args.dim_max,
               "seed": args.seed, "tolerance": LEMMA_TOL,
               "coupling_tolerance": COUPLING_TOL,
               "runs": reports, "pass": bool(ok)}
    _write(json.dumps(payload, indent=2, sort_keys=True) + "\n", args.out)
    return 0 if ok else 2


# -- wiring ------------------------------------------------------------------


def _build_parser():
    parser = _Parser(prog="artifact",
                     description="spectral audits of curvature-eigenvalue inequalities")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_mesh = sub.add_parser("mesh", help="mesh fixtures")
    p_mesh.add_argument("action", choices=["gen"])
    p_mesh.add_argument("--shape", required=True,
                        choices=["icosphere", "clifford_torus", "flat_rectangle",
                                 "geodesic_cap"])
    p_mesh.add_argument("--params", nargs="*", default=[], metavar="KEY=VALUE")
    p_mesh.add_argument("--out", required=True)
    p_mesh.set_defaults(func=_cmd_mesh)

    p_spec = sub.add_parser("spectrum", help="certified low spectrum of one pencil")
    p_spec.add_argument("--mesh", required=True,
                        help="fixture name (icosphere4, clifford64, square32, cap4) or OFF path")
    p_spec.add_argument("-p", type=int, default=0, choices=[0, 1, 2])
    p_spec.add_argument("-k", type=int, default=12)
    p_spec.add_argument("--dirichlet", action="store_true")
    p_spec.add_argument("--q", help="CSV of vertex_index,value rows; missing vertices default to 0")
    p_spec.add_argument("--tol", type=float, default=1e-8)
    p_spec.add_argument("--seed", type=int, default=42)
    p_spec.add_argument("--out")
    p_spec.set_defaults(func=_cmd_spectrum)

    p_audit = sub.add_parser("audit", help="inequality audit suite")
    p_audit.add_argument("--mesh", required=True, help="fixture name, e.g. icosphere4")
    p_audit.add_argument("--suite", required=True, choices=["closed", "dirichlet"])
    p_audit.add_argument("--j-max", type=int, default=20)
    p_audit.add_argument("--ambient", choices=["flat", "sphere"])
    p_audit.add_argument("--q", help="CSV of vertex_index,value rows; missing vertices default to 0")
    p_audit.add_argument("--tol", type=float, default=1e-8)
    p_audit.add_argument("--tol-audit", type=float, default=AUDIT_TOL)
    p_audit.add_argument("--seed", type=int, default=42)
    p_audit.add_argument("--fmt", choices=["json", "csv"], default="json")
    p_audit.add_argument("--out")
    p_audit.set_defaults(func=_cmd_audit)

    p_heis = sub.add_parser("heisenberg", help="Kohn sublaplacian box spectrum and audit")
    p_heis.add_argument("--n", type=int, default=1)
    p_heis.add_argument("--box", type=float, nargs=2, default=[1.0, 1.0],
                        metavar=("A", "T"))
    p_heis.add_argument("--grid", type=int, default=32)
    p_heis.add_argument("-k", type=int, default=12)
    p_heis.add_argument("--j-max", type=int, default=5)
    p_heis.add_argument("--tol", type=float, default=1e-8)
    p_heis.add_argument("--tol-audit", type=float, default=AUDIT_TOL)
    p_heis.add_argument("--seed", type=int, default=42)
    p_heis.add_argument("--fmt", choices=["json", "csv"], default="json")
    p_heis.add_argument("--out")
    p_heis.set_defaults(func=_cmd_heisenberg)

    p_lemma = sub.add_parser("lemma-check", help="randomized commutator identity trials")
    p_lemma.add_argument("--trials", type=int, default=1000)
    p_lemma.add_argument("--degenerate-trials", type=int, default=None)
    p_lemma.add_argument("--dim-min", type=int, default=2)
    p_lemma.add_argument("--dim-max", type=int, default=30)
    p_lemma.add_argument("--seed", type=int, default=0)
    p_lemma.add_argument("--out")
    p_lemma.set_defaults(func=_cmd_lemma_check)

    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "degenerate_trials", None) is None and args.command == "lemma-check":
        args.degenerate_trials = args.trials // 10
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"artifact: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
