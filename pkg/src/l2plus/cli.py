"""Command-line front end.

Exit codes: 0 success, 1 domain or input error, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import fixtures
from .bounds import certify_small_gain, compute_bound, sweep
from .errors import L2PlusError
from .filterbank import PositiveFilterSpec, augment
from .linsys import StateSpace, hinf_norm, validate_for_analysis
from .sdp import assemble_primal

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _load_system(path: str) -> StateSpace:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise L2PlusError(f"--system: file not found: {path}") from None
    except OSError as exc:
        raise L2PlusError(f"--system: cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise L2PlusError(f"--system: invalid JSON in {path}: {exc}") from None
    return StateSpace.from_dict(data)


def _fmt(x) -> str:
    return "nan" if x is None else f"{x:.6f}"


def _add_common(p, *, alpha_many=False):
    p.add_argument("--system", required=True, help="JSON file with fields A, B, C, D")
    if alpha_many:
        p.add_argument("--alpha", type=float, action="append", help="filter pole (repeatable)")
    else:
        p.add_argument("--alpha", type=float, default=None, help="filter pole (negative)")
    p.add_argument("--tol", type=float, default=1e-10, help="solver tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="l2plus", description="Nonnegative-input L2 gain bounds for LTI systems.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("hinf", help="print the H-infinity norm")
    p.add_argument("--system", required=True)
    p.add_argument("--tol", type=float, default=1e-9, help="bisection tolerance")

    p = sub.add_parser("analyze", help="bound for one (alpha, degree)")
    _add_common(p)
    p.add_argument("--degree", type=int, default=0)
    p.add_argument("--dump", help="write the assembled problem in sparse text form")
    p.add_argument("--certified", action="store_true",
                   help="print the value of an exactly feasible point instead of the solver optimum")

    p = sub.add_parser("sweep", help="bounds over an alpha grid and degrees 0..max")
    _add_common(p, alpha_many=True)
    p.add_argument("--max-degree", type=int, default=15)
    p.add_argument("--out", help="output file (stdout when omitted)")
    p.add_argument("--format", choices=("json", "csv"), default=None,
                   help="defaults to the --out suffix, else json")
    p.add_argument("--seed", type=int, default=0, help="seed of the lower-bound sampler")
    p.add_argument("--trials", type=int, default=200, help="lower-bound samples (0 to skip)")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("smallgain", help="small-gain stability certificate")
    _add_common(p)
    p.add_argument("--degree", type=int, default=15)

    p = sub.add_parser("reproduce", help="rerun a built-in benchmark against published values")
    p.add_argument("case", choices=sorted(fixtures.CLI_CASES))
    p.add_argument("--tol", type=float, default=1e-10)
    return parser


def _cmd_hinf(args):
    print(_fmt(hinf_norm(_load_system(args.system), tol=args.tol)))


def _cmd_analyze(args):
    ss = _load_system(args.system)
    alpha = -1.0 if args.alpha is None else args.alpha
    if args.dump:
        validate_for_analysis(ss)
        prob = assemble_primal(augment(ss, PositiveFilterSpec(alpha, args.degree, ss.n_w)))
        with open(args.dump, "w", encoding="utf-8") as fp:
            prob.write_sparse_text(fp)
    print(_fmt(compute_bound(ss, alpha, args.degree, tol=args.tol, certified=args.certified)))


def _cmd_sweep(args):
    ss = _load_system(args.system)
    alphas = args.alpha or [-1.0, -1.2, -1.4]
    rep = sweep(ss, alphas, args.max_degree, system=args.system, lower_bound_trials=args.trials,
                seed=args.seed, workers=args.workers, tol=args.tol)
    fmt = args.format
    if fmt is None:
        fmt = "csv" if args.out and args.out.lower().endswith(".csv") else "json"
    text = rep.to_csv() if fmt == "csv" else rep.to_json() + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        best = rep.best()
        if best is not None:
            print(f"best bound {_fmt(best.gamma)} at alpha={best.alpha:g}, N={best.N}")
        print(f"H-infinity norm {_fmt(rep.hinf)}, sampled lower bound {_fmt(rep.lower_bound)}")
    else:
        sys.stdout.write(text)
    for c in rep.failed():
        print(f"warning: cell alpha={c.alpha:g}, N={c.N} {c.status}: {c.message}", file=sys.stderr)


def _cmd_smallgain(args):
    ss = _load_system(args.system)
    alpha = -1.4 if args.alpha is None else args.alpha
    cert = certify_small_gain(ss, alpha, args.degree)
    print(f"method {cert.method}")
    print(f"hinf {_fmt(cert.hinf)}")
    if cert.bound is not None:
        print(f"bound {_fmt(cert.bound)} (alpha={alpha:g}, N={args.degree})")
    print(f"gamma_used {_fmt(cert.gamma_used)}")


def _cmd_reproduce(args):
    key = fixtures.CLI_CASES[args.case]
    ref = fixtures.REFERENCE[key]
    ss = fixtures.FIXTURES[key]()
    tol = fixtures.REFERENCE_TOL
    hinf = hinf_norm(ss)
    g0 = compute_bound(ss, -1.0, 0, tol=args.tol)
    tails = {a: compute_bound(ss, a, 15, tol=args.tol) for a in (-1.0, -1.2, -1.4)}
    rows = [
        ("H-infinity norm", hinf, ref["hinf"], tol),
        ("bound N=0", g0, ref["unfiltered"], tol),
        ("bound alpha=-1.4 N=15", tails[-1.4], ref["best"], tol),
    ]
    print(f"{'quantity':<34}{'computed':>12}{'published':>12}{'tol':>10}  verdict")
    n_pass = 0
    for name, got, want, tl in rows:
        ok = abs(got - want) <= tl
        n_pass += ok
        print(f"{name:<34}{_fmt(got):>12}{want:>12.4f}{tl:>10.0e}  {'PASS' if ok else 'FAIL'}")
    checks = [
        ("bound N=0 <= H-infinity norm", g0 <= hinf + 1e-6),
        ("N=15: alpha=-1.2 <= alpha=-1.0", tails[-1.2] <= tails[-1.0] + 1e-3),
        ("N=15: alpha=-1.4 <= alpha=-1.2", tails[-1.4] <= tails[-1.2] + 1e-3),
    ]
    for name, ok in checks:
        n_pass += ok
        print(f"{name:<68}  {'PASS' if ok else 'FAIL'}")
    print(f"{n_pass}/{len(rows) + len(checks)} PASS")


_COMMANDS = {
    "hinf": _cmd_hinf,
    "analyze": _cmd_analyze,
    "sweep": _cmd_sweep,
    "smallgain": _cmd_smallgain,
    "reproduce": _cmd_reproduce,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _COMMANDS[args.command](args)
    except L2PlusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
