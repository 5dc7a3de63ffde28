"""Command-line front end: solve, branch and verify.

Exit codes: 0 success, 1 invalid flags or parameters, 2 non-convergence,
3 partial branch sweep (points still written).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .energy import EnergyModel
from .mountain_pass import BoxError, mountain_pass
from .nehari import SolverError, make_record, minimize_on_nehari
from .params import ParameterError, RadialGrid, SolverConfig, default_ell, make_params
from .shooting import find_neumann_roots, plot_branch_svg, solve_G, trace_branch

EXIT_OK, EXIT_USAGE, EXIT_NOCONV, EXIT_PARTIAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _problem_flags(ap, with_q=True):
    ap.add_argument("--p", type=float, default=1.97)
    if with_q:
        ap.add_argument("--q", type=float, default=40.0)
    ap.add_argument("--N", type=int, default=1)
    ap.add_argument("--ell", type=float, default=None, help="truncation exponent (default midway to min(q, p*, p+2))")
    ap.add_argument("--s0", type=float, default=None, help="override the truncation threshold")
    ap.add_argument("--grid-n", type=int, default=2048, help="number of grid cells M")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="nehari-cone", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="compute one solution and write a JSON record")
    _problem_flags(s)
    s.add_argument("--config", type=Path, help="JSON file with p, q, N, ell, s0_override, c_emb, M")
    s.add_argument("--method", choices=("nehari", "shoot", "mp"), default="nehari")
    s.add_argument("--tol", type=float, default=1e-6, help="descent stopping tolerance")
    s.add_argument("--multistart", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", type=Path, default=Path("solution.json"))

    b = sub.add_parser("branch", help="trace solution branches over q")
    _problem_flags(b, with_q=False)
    b.add_argument("--q-min", type=float, default=3.0)
    b.add_argument("--q-max", type=float, default=100.0)
    b.add_argument("--q-steps", type=int, default=200)
    b.add_argument("--out", type=Path, default=Path("branch.csv"))
    b.add_argument("--json", type=Path, default=None)
    b.add_argument("--svg", type=Path, default=None)

    v = sub.add_parser("verify", help="run the verification suite and write a JSON report")
    _problem_flags(v, with_q=False)
    v.add_argument("--q-list", type=float, nargs="+", default=[40.0, 100.0, 200.0])
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--samples", type=int, default=500)
    v.add_argument("--out", type=Path, default=Path("report.json"))
    return ap


def _config(args) -> SolverConfig:
    if getattr(args, "config", None) is not None:
        return SolverConfig.from_file(args.config)
    return SolverConfig(p=args.p, q=args.q, N=args.N, ell=args.ell, s0_override=args.s0, M=args.grid_n)


def cmd_solve(args) -> int:
    cfg = _config(args)
    P, grid = cfg.params(), cfg.grid()
    model = EnergyModel(P, grid)
    if args.method == "shoot":
        shots = [s for s in find_neumann_roots(P, (0.0, 1.1), 200, grid=grid) if s.monotone]
        nonconst = [s for s in shots if s.e0 != 0.0]
        best = min(nonconst, key=lambda s: s.energy_gap) if nonconst else next(s for s in shots if s.e0 == 0.0)
        roots = [{"d": s.d, "e0": s.e0, "energy_gap": s.energy_gap, "u_end": s.u_end} for s in shots]
        rec = make_record(model, best.u, "shooting", roots=roots)
        status = EXIT_OK
    elif args.method == "nehari":
        try:
            rec = minimize_on_nehari(P, args.multistart, grid, seed=args.seed, stop=args.tol)
        except SolverError as exc:
            print(f"solve: {exc}", file=sys.stderr)
            return EXIT_NOCONV
        status = EXIT_OK if rec.accepted() else EXIT_NOCONV
    else:
        u_q = minimize_on_nehari(P, args.multistart, grid, seed=args.seed, stop=args.tol)
        try:
            surf, res, box = mountain_pass(P, u_q, grid)
        except BoxError as exc:
            print(f"solve: {exc}", file=sys.stderr)
            return EXIT_NOCONV
        if res.record is not None and res.accepted:
            rec, status = res.record, EXIT_OK
        else:
            rec = make_record(model, res.argmax, "mountain_pass", d_q=res.d_q, reason=res.reason)
            status = EXIT_NOCONV
            print(f"solve: mountain pass not accepted ({res.reason}); wrote the saddle estimate", file=sys.stderr)
        rec.meta.update({"box": list(box), "d_q": res.d_q})
    rec.save(args.out)
    print(f"{rec.provenance}: energy={rec.energy:.12g} u0={rec.u0:.10g} u1={rec.u1:.10g} -> {args.out}")
    return status


def cmd_branch(args) -> int:
    ell = args.ell if args.ell is not None else default_ell(args.p, args.q_min, args.N)
    P = make_params(args.p, args.q_max, args.N, ell, s0_override=args.s0)
    grid = RadialGrid.uniform(args.grid_n, args.N)
    br = trace_branch(P, (args.q_min, args.q_max), args.q_steps, grid=grid)
    args.out.write_text(br.to_csv())
    if args.json is not None:
        args.json.write_text(br.to_json())
    if args.svg is not None:
        plot_branch_svg(br, args.svg, g0=solve_G(P, grid).d)
    n = len(br.points) - len(br.by_label("constant"))
    fold = "none" if br.fold_q is None else f"{br.fold_q:.6g}"
    print(f"branch: {n} nonconstant points, fold at q={fold}, {len(br.missing)} missing -> {args.out}")
    return EXIT_PARTIAL if br.missing else EXIT_OK


def cmd_verify(args) -> int:
    from .report import verify

    grid = RadialGrid.uniform(args.grid_n, args.N)
    rep = verify(args.p, args.N, args.q_list, args.seed, grid, args.ell, n_samples=args.samples)
    args.out.write_text(rep.to_json())
    for c in rep.checks:
        print(f"{c.status:7s} {c.name}: {c.measured} (tol {c.tolerance}) {c.detail}")
    return EXIT_OK if rep.passed else EXIT_NOCONV


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return {"solve": cmd_solve, "branch": cmd_branch, "verify": cmd_verify}[args.command](args)
    except ParameterError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
