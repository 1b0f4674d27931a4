"""Command-line front door: run catalog experiments, solve ad-hoc systems,
evaluate bounds, construct prescribed-convergence systems, inspect matrices.

Exit codes: 0 on success, 1 on expected errors (bad files, unknown names),
2 on usage errors.
"""

import argparse
import json
import os
import sys

import numpy as np
import scipy.sparse

from . import analysis, constructions, experiments, io, krylov, linalg
from .precision import NATIVE, EXTENDED
from .problems import LinearSystem, Spectrum, normalized_ones


def _parse_set(pairs):
    """Turn repeated KEY=VALUE flags into an overrides dict; values are
    parsed as JSON when possible, kept as strings otherwise."""
    overrides = {}
    for item in pairs or []:
        if "=" not in item:
            raise ValueError(f"expected KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            overrides[key] = json.loads(raw)
        except json.JSONDecodeError:
            overrides[key] = raw
    return overrides


def _load_config(path):
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"config file {path!r} must hold a JSON object")
    return cfg


def _figure_slice(result, figure):
    """A shallow per-figure view of a result, for one output file per figure."""
    sub = [s for s in result.series if s.figure == figure]
    return experiments.ExperimentResult(name=result.name, series=sub,
                                        metadata=result.metadata)


def _write_result(result, out_dir, svg):
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for fig in result.figures:
        path = os.path.join(out_dir, f"{result.name}-{fig}.csv")
        io.write_csv(_figure_slice(result, fig), path)
        written.append(path)
    if svg:
        written.extend(io.write_svg(result, out_dir))
    return written


def _cmd_list(args):
    for entry in experiments.list_experiments():
        print(f"{entry.name:20s} {entry.figures:12s} {entry.description}")
    return 0


def _cmd_run(args):
    overrides = _parse_set(args.set)
    if args.config:
        cfg = _load_config(args.config)
        cfg.update(overrides)
        overrides = cfg
    if args.all:
        names = [e.name for e in experiments.list_experiments()]
        if overrides:
            raise ValueError("--set/--config apply to a single entry, not --all")
    elif args.name:
        names = [args.name]
    else:
        raise ValueError("run needs --name ID or --all")
    for name in names:
        spec = experiments.ExperimentSpec(name=name, seed=args.seed,
                                          overrides={} if args.all else overrides)
        result = experiments.run_experiment(spec)
        for path in _write_result(result, args.out, args.svg):
            print(path)
    return 0


def _read_system(args):
    A = io.read_matrix_market(args.matrix)
    dense = A.toarray() if scipy.sparse.issparse(A) else A
    n = dense.shape[0]
    if args.rhs:
        b = np.loadtxt(args.rhs, dtype=float).reshape(-1)
        if b.shape != (n,):
            raise ValueError(f"right-hand side has length {b.size}, matrix is {n}x{n}")
        return LinearSystem(A, b, label=os.path.basename(args.matrix))
    x = normalized_ones(n)
    return LinearSystem(A, dense @ x, x_ref=x, label=os.path.basename(args.matrix))


def _make_precond(kind, system):
    if kind is None or kind == "none":
        return None
    dense = system.operator
    if scipy.sparse.issparse(dense):
        dense = dense.toarray()
    if kind == "jacobi":
        return krylov.Preconditioner.diagonal(np.diag(dense))
    if kind.startswith("ic"):
        drop = float(kind.split(":", 1)[1]) if ":" in kind else 1e-2
        return krylov.Preconditioner.incomplete_cholesky(dense, drop)
    raise ValueError(f"unknown preconditioner {kind!r} (use none, jacobi, ic[:droptol])")


def _cmd_solve(args):
    system = _read_system(args)
    mode = EXTENDED if args.precision == "extended" else NATIVE
    precond = _make_precond(args.precond, system)
    if args.method == "cg":
        trace = krylov.cg(system, mode=mode, precond=precond, tol=args.tol,
                          maxit=args.maxit)
    else:
        gp = None if precond is None else ("left_exact", precond)
        trace = krylov.gmres(system, mode=mode, precond=gp, tol=args.tol,
                             maxit=args.maxit)
    rel = trace.rel_resnorm
    print(f"matrix: {system.label} (n={system.n})")
    print(f"method: {args.method} [{args.precision}]"
          + (f" precond={args.precond}" if precond else ""))
    print(f"iterations: {trace.iterations}")
    print(f"termination: {trace.termination}")
    print(f"relative residual: {rel[-1]:.6e}")
    if trace.true_resnorm:
        tr = np.asarray(trace.true_resnorm, dtype=float)
        print(f"true relative residual: {tr[-1] / tr[0]:.6e}")
    if trace.a_norm_error:
        ae = trace.rel_a_norm_error
        print(f"relative A-norm error: {ae[-1]:.6e}")
    return 0


def _cmd_bounds(args):
    values = np.loadtxt(args.spectrum, dtype=float).reshape(-1)
    report = analysis.bound_report(Spectrum(np.sort(values)), args.k)
    print(f"k: {report.k}")
    print(f"kappa_bound: {report.kappa_bound:.17g}")
    print(f"minmax_bound: {report.minmax_bound:.17g}")
    print(f"worstcase_formula: {report.worstcase_formula_value:.17g}")
    active = " ".join(f"{v:.17g}" for v in report.active_eigenvalues)
    print(f"active_eigenvalues: {active}")
    return 0


def _cmd_construct(args):
    data = np.loadtxt(args.curve, dtype=float, ndmin=2)
    if data.shape[1] == 1:
        curve = constructions.PrescribedCurve(data[:, 0])
    else:
        curve = constructions.PrescribedCurve(data[:, 0], data[:, 1])
    if args.kind == "cg":
        system = constructions.cg_prescribed(curve)
    else:
        if not args.eigs:
            raise ValueError("construct --kind gmres needs --eigs FILE")
        eigs = np.loadtxt(args.eigs, dtype=float).reshape(-1)
        system = constructions.gmres_prescribed(curve, eigs)
    base, _ = os.path.splitext(args.out)
    A = system.operator
    if hasattr(A, "to_native"):
        A = A.to_native()
    io.write_matrix_market(np.asarray(A, dtype=float), base + ".A.mtx",
                           comment=f"constructed {args.kind} system matrix")
    io.write_matrix_market(system.rhs.reshape(-1, 1), base + ".b.mtx",
                           comment=f"constructed {args.kind} right-hand side")
    print(base + ".A.mtx")
    print(base + ".b.mtx")
    return 0


def _estimated_kappa(A):
    dense = A.toarray() if scipy.sparse.issparse(A) else np.asarray(A, dtype=float)
    if dense.shape[0] != dense.shape[1]:
        return None
    if dense.shape[0] <= 2000:
        s = linalg.singular_values(dense)
        return float(s[0] / s[-1]) if s[-1] > 0 else np.inf
    lu = scipy.sparse.linalg.splu(scipy.sparse.csc_matrix(A))
    inv_norm = scipy.sparse.linalg.onenormest(
        scipy.sparse.linalg.LinearOperator(A.shape, matvec=lu.solve))
    return float(scipy.sparse.linalg.onenormest(A) * inv_norm)


def _cmd_mm_info(args):
    with open(args.file) as fh:
        banner = fh.readline()
    header = io._parse_banner(banner)
    A = io.read_matrix_market(args.file)
    print(f"format: {header.format}")
    print(f"field: {header.field}")
    print(f"symmetry: {header.symmetry}")
    print(f"size: {A.shape[0]} x {A.shape[1]}")
    if scipy.sparse.issparse(A):
        print(f"nonzeros: {A.nnz}")
    kappa = _estimated_kappa(A)
    if kappa is not None:
        print(f"estimated condition number: {kappa:.6e}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="krylovlab",
        description="Krylov subspace methods laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="list the experiment catalog")

    p_run = sub.add_parser("run", help="run catalog experiments")
    p_run.add_argument("--name", help="experiment id (see `list`)")
    p_run.add_argument("--all", action="store_true", help="run every entry")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="parameter override with dotted keys")
    p_run.add_argument("--config", help="JSON file of parameter overrides")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--svg", action="store_true", help="also emit SVG plots")

    p_solve = sub.add_parser("solve", help="solve a Matrix Market system")
    p_solve.add_argument("--matrix", required=True)
    p_solve.add_argument("--rhs", help="text file of right-hand-side entries "
                         "(default: b = A*ones/sqrt(n))")
    p_solve.add_argument("--method", choices=("cg", "gmres"), required=True)
    p_solve.add_argument("--precision", choices=("native", "extended"),
                         default="native")
    p_solve.add_argument("--precond", default="none",
                         help="none, jacobi, or ic[:droptol]")
    p_solve.add_argument("--tol", type=float, required=True)
    p_solve.add_argument("--maxit", type=int, default=None)

    p_bounds = sub.add_parser("bounds", help="evaluate the CG bound chain")
    p_bounds.add_argument("--spectrum", required=True,
                          help="text file of eigenvalues")
    p_bounds.add_argument("--k", type=int, required=True)

    p_con = sub.add_parser("construct",
                           help="build a system with prescribed convergence")
    p_con.add_argument("--kind", choices=("cg", "gmres"), required=True)
    p_con.add_argument("--curve", required=True,
                       help="text file: residual norms (optional second "
                       "column of A-norm error norms for cg)")
    p_con.add_argument("--eigs", help="text file of prescribed eigenvalues")
    p_con.add_argument("--out", required=True, help="output path stem")

    p_mm = sub.add_parser("mm-info", help="inspect a Matrix Market file")
    p_mm.add_argument("file")

    return parser


_HANDLERS = {
    "list": _cmd_list,
    "run": _cmd_run,
    "solve": _cmd_solve,
    "bounds": _cmd_bounds,
    "construct": _cmd_construct,
    "mm-info": _cmd_mm_info,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (OSError, ValueError, KeyError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        print(f"krylovlab: error: {exc}", file=sys.stderr)
        return 1


def entry():
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
