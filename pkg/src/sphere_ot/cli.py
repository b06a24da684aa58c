"""Command-line front end: gen, solve, extract, diagnose, mtw, report.

Exit codes: 0 success, 1 configuration error, 2 invariant violation,
3 solver failure, 4 I/O failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import maps as maps_mod
from . import measures as measures_mod
from . import pipeline as pipe
from . import regularity as reg_mod
from . import solver as solver_mod
from .errors import ConfigError, SolverError, SphereOTError


def _add_mesh_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, default=2, help="sphere dimension")
    p.add_argument("--mesh", type=int, default=200, help="atoms per mesh")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sphere-ot",
        description="Quadratic-cost transport between sphere measures: "
        "solve, extract the two-valued map, classify regions, run diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a measure JSON from a density spec")
    _add_mesh_args(g)
    g.add_argument("--density", default="uniform", help="uniform | cap:K | band:K")
    g.add_argument("--out", required=True, help="output measure JSON path")

    s = sub.add_parser("solve", help="run the full pipeline into an output directory")
    _add_mesh_args(s)
    s.add_argument("--mu", default="uniform", help="density spec or measure JSON path")
    s.add_argument("--nu", default="uniform", help="density spec or measure JSON path")
    s.add_argument("--solver", choices=("exact", "entropic"), default="exact")
    s.add_argument("--reg", type=float, default=0.01, help="entropic regularization")
    s.add_argument("--epsilon", type=float, default=None, help="suitability level")
    s.add_argument("--merge-tol", type=float, default=None)
    s.add_argument("--zero-tol", type=float, default=None)
    s.add_argument("--out", default="run", help="output directory")

    e = sub.add_parser("extract", help="re-extract maps from a solved run directory")
    e.add_argument("--run", required=True)
    e.add_argument("--merge-tol", type=float, default=None)
    e.add_argument("--zero-tol", type=float, default=None)

    d = sub.add_parser("diagnose", help="recompute regularity reports for a run")
    d.add_argument("--run", required=True)
    d.add_argument("--window", type=float, nargs=2, default=None, metavar=("RMIN", "RMAX"))

    m = sub.add_parser("mtw", help="structural-condition sweep for the sphere cost")
    m.add_argument("--n", type=int, default=2)
    m.add_argument("--samples", type=int, default=200)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--step", type=float, default=1e-3)
    m.add_argument("--out", default="mtw", help="output directory")

    r = sub.add_parser("report", help="aggregate run artifacts into one report")
    r.add_argument("--run", required=True)
    r.add_argument("--format", choices=("json", "csv"), default="json")

    return parser


def _cmd_gen(args) -> int:
    mesh = measures_mod.quasi_uniform_mesh(args.n, args.mesh, args.seed)
    measure = measures_mod.sample_density(pipe.builtin_density(args.density, args.n), mesh)
    measures_mod.save_measure(measure, args.out)
    print(f"wrote {measure.count} atoms to {args.out}")
    return pipe.EXIT_OK


def _cmd_solve(args) -> int:
    config = pipe.RunConfig(
        n=args.n,
        mesh_count=args.mesh,
        seed=args.seed,
        solver=args.solver,
        reg=args.reg,
        epsilon_suitable=args.epsilon,
        merge_tol=args.merge_tol,
        zero_tol=args.zero_tol,
        output_dir=Path(args.out),
    )
    result = pipe.run_pipeline(config, args.mu, args.nu)
    for check in result.checks:
        status = "pass" if check.passed else "FAIL"
        print(f"[{status}] {check.name}: {check.claim} "
              f"(value={check.value:.3e}, tolerance={check.tolerance:.3e})")
    print(f"regions: {result.summary['source_regions']} | "
          f"targets: {result.summary['target_regions']} | "
          f"cost: {result.summary['total_cost']:.6e}")
    if result.exit_code != 0:
        failed = ", ".join(c.name for c in result.failed_required())
        print(f"invariant violations: {failed}", file=sys.stderr)
    return result.exit_code


def _load_run(run_dir: Path):
    mu = measures_mod.load_measure(run_dir / "mu.json")
    nu = measures_mod.load_measure(run_dir / "nu.json")
    coupling = solver_mod.load_coupling_csv(run_dir / "coupling.csv", mu, nu)
    return mu, nu, coupling


def _cmd_extract(args) -> int:
    run_dir = Path(args.run)
    if not run_dir.is_dir():
        raise OSError(f"run directory {run_dir} does not exist")
    mu, nu, coupling = _load_run(run_dir)
    with open(run_dir / "summary.json") as fh:
        summary = json.load(fh)
    merge_tol = args.merge_tol or summary["merge_tol"]
    zero_tol = args.zero_tol or summary["zero_tol"]
    mm = maps_mod.extract_multimap(coupling, mu, nu, merge_tol)
    mm = maps_mod.classify_regions(mm, zero_tol)
    maps_mod.save_multimap_json(mm, run_dir / "multimap.json")
    print(f"regions: {mm.region_counts()} anomalies: {len(mm.anomalies)}")
    return pipe.EXIT_OK


def _cmd_diagnose(args) -> int:
    run_dir = Path(args.run)
    if not run_dir.is_dir():
        raise OSError(f"run directory {run_dir} does not exist")
    mu, nu, coupling = _load_run(run_dir)
    with open(run_dir / "summary.json") as fh:
        summary = json.load(fh)
    mm = maps_mod.extract_multimap(coupling, mu, nu, summary["merge_tol"])
    mm = maps_mod.classify_regions(mm, summary["zero_tol"])
    window = tuple(args.window) if args.window else None
    dot_plus = np.einsum("ij,ij->i", mm.source_points, mm.t_plus)
    s1 = np.nonzero((mm.region == "S1") & (np.abs(dot_plus) >= 0.2))[0]
    if len(s1) >= 2:
        rep = reg_mod.holder_fit(mm.source_points[s1], mm.t_plus[s1], window=window,
                                 region="outer_on_S1_interior")
        print(f"outer map exponent on interior S1: {rep.alpha_hat:.4f} "
              f"(C={rep.C_hat:.3f}, pairs={rep.pair_count})")
    s2 = mm.indices_in("S2")
    margins = -np.einsum("ij,ij->i", mm.source_points[s2], mm.t_minus[s2])
    usable = s2[margins > 0]
    if len(usable) >= 2:
        constants = reg_mod.region_constants(mm, usable, window)
        ratio = reg_mod.t_minus_bound_check(mm, usable, window, constants)
        print(f"bivalent constants: k={constants.k_U:.4f} C+={constants.C_plus:.4f} "
              f"C-(statement)={constants.C_minus_statement:.4f} "
              f"C-(proof)={constants.C_minus_proof:.4f} bound ratio={ratio:.4f}")
    else:
        print("no bivalent region to diagnose")
    return pipe.EXIT_OK


def _cmd_mtw(args) -> int:
    result = pipe.run_mtw_suite(args.n, Path(args.out), samples=args.samples,
                                seed=args.seed, h=args.step)
    for check in result.checks:
        status = "pass" if check.passed else "FAIL"
        print(f"[{status}] {check.name}: {check.claim} (value={check.value:.3e})")
    return result.exit_code


def _cmd_report(args) -> int:
    out = pipe.export_report(Path(args.run), args.format)
    print(f"wrote {out}")
    return pipe.EXIT_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "solve": _cmd_solve,
    "extract": _cmd_extract,
    "diagnose": _cmd_diagnose,
    "mtw": _cmd_mtw,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return pipe.EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return pipe.EXIT_SOLVER
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return pipe.EXIT_IO
    except SphereOTError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return pipe.EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
