"""Command line entry point ``liecf``."""
from __future__ import annotations

import argparse
import contextlib
import csv
import sys

import numpy as np

from . import harness
from .integrators import DivergenceError, StepperConfig, integrate
from .problems import CASE_FACTORIES, get_case
from .tableau import (
    CoefficientFileError,
    NotTwoNRepresentableError,
    SchemeLookupError,
    TwoNScheme,
    as_tableau,
    classical_order_residuals,
    crouch_grossman_oc3_residual,
    from_butcher,
    lie_cf3_condition_residual,
    load_scheme,
    registry,
    registry_lookup,
    williamson_constraint_residual,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3

FAMILY_ALIASES = {
    "classical": "classical_rk",
    "classical2n": "classical_2n",
    "liecf": "lie_cf_2n",
    "rkmk": "rkmk",
}


class UsageError(Exception):
    pass


def _open_out(path):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    return open(path, "w", newline="", encoding="utf-8")


def _scheme(args, name=None):
    if getattr(args, "file", None):
        return load_scheme(args.file)
    return registry_lookup(name or args.scheme, args.coeff_dir)


def _family_config(scheme, family):
    family = FAMILY_ALIASES[family]
    if family in ("classical_2n", "lie_cf_2n") and not isinstance(scheme, TwoNScheme):
        try:
            scheme = from_butcher(scheme)
        except NotTwoNRepresentableError as exc:
            raise UsageError(str(exc)) from None
    return StepperConfig(scheme, family)


def cmd_list(args):
    print(f"{'name':<12}{'stages':>7}{'order':>6}  format")
    for name, s in sorted(registry(args.coeff_dir).items()):
        fmt = "2N" if isinstance(s, TwoNScheme) else "butcher"
        print(f"{name:<12}{s.stages:>7}{s.order:>6}  {fmt}")
    return EXIT_OK


def cmd_check(args):
    scheme = _scheme(args)
    t = as_tableau(scheme)
    report = classical_order_residuals(t, args.up_to)
    print(f"scheme {scheme.name}: {t.stages} stages, declared order {scheme.order}")
    for label, r in report.residuals.items():
        print(f"  tree {label:<6} order {len(label)}  residual {r:.3e}")
    print(f"satisfied classical order: {report.satisfied_order}")
    if t.stages == 3:
        w = williamson_constraint_residual(t.c[1], t.c[2])
        print(f"Williamson 2N constraint residual: {w:.3e}")
        print(f"Lie-CF third-order condition residual: {lie_cf3_condition_residual(t):.3e}")
    print(f"Crouch-Grossman third-order residual: {crouch_grossman_oc3_residual(t):.3e}")
    if not isinstance(scheme, TwoNScheme):
        try:
            from_butcher(t)
            print("2N-storage form: exists")
        except NotTwoNRepresentableError:
            print("2N-storage form: none")
    return EXIT_OK


def _state_columns(Y0):
    flat = np.ravel(Y0)
    idx = [str(i) for i in range(flat.size)]
    if np.iscomplexobj(Y0):
        return [f"re_y{i}" for i in idx] + [f"im_y{i}" for i in idx]
    return [f"y{i}" for i in idx]


def cmd_integrate(args):
    case = get_case(args.problem)
    cfg = _family_config(_scheme(args), args.family)
    t1 = case.t1 if args.t1 is None else args.t1
    with _open_out(args.out) as out:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["t"] + _state_columns(case.Y0))

        def observe(t, Y):
            flat = np.ravel(Y)
            values = (
                list(flat.real) + list(flat.imag) if np.iscomplexobj(flat) else list(flat)
            )
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in values])

        integrate(cfg, case.problem, case.t0, t1, args.h, case.Y0, observer=observe)
    return EXIT_OK


def cmd_converge(args):
    case = get_case(args.problem)
    grid = harness.GRIDS[case.name]
    with _open_out(args.out) as out:
        for k, name in enumerate(args.scheme.split(",")):
            cfg = _family_config(_scheme(args, name.strip()), args.family)
            ns = grid.exponents(cfg.order)
            lo = ns[0] if args.nmin is None else args.nmin
            hi = ns[-1] if args.nmax is None else args.nmax
            if hi < lo:
                raise UsageError("--nmax must not be below --nmin")
            hs = [2.0**-n for n in range(lo, hi + 1)]
            report = harness.run_convergence(case, cfg, hs, jobs=args.jobs)
            harness.emit_csv(report, out, header=(k == 0))
    return EXIT_OK


def cmd_conjecture(args):
    if args.file:
        schemes = [load_scheme(args.file)]
    elif args.scheme:
        schemes = [registry_lookup(n.strip(), args.coeff_dir) for n in args.scheme.split(",")]
    else:
        schemes = [
            s for _, s in sorted(registry(args.coeff_dir).items()) if isinstance(s, TwoNScheme)
        ]
    cases = [get_case(n) for n in (args.problems.split(",") if args.problems else harness.CASE_NAMES)]
    ok = True
    for scheme in schemes:
        family = harness.conjecture_family(scheme)
        for v in harness.verify_conjecture(scheme, cases, jobs=args.jobs):
            status = "PASS" if v.passed else "FAIL"
            ok &= v.passed
            print(
                f"{status} {v.scheme_name:<10} {family:<10} {v.case_name:<5} "
                f"slope={v.slope:.3f} required>={v.required:.2f}"
            )
    return EXIT_OK if ok else EXIT_FAIL


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--coeff-dir",
        default=argparse.SUPPRESS,
        help="directory of extra coefficient files (default: $LIECF_COEFF_DIR)",
    )

    parser = argparse.ArgumentParser(
        prog="liecf",
        description="Low-storage commutator-free Lie group integrators.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("list", parents=[common], help="list registry schemes")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("check", parents=[common], help="order-condition residuals")
    p.add_argument("--scheme")
    p.add_argument("--file")
    p.add_argument("--up-to", type=int, default=5, choices=range(1, 6))
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("integrate", parents=[common], help="trajectory CSV")
    p.add_argument("--problem", required=True, choices=sorted(CASE_FACTORIES))
    p.add_argument("--scheme")
    p.add_argument("--file")
    p.add_argument("--family", required=True, choices=sorted(FAMILY_ALIASES))
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--t1", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("converge", parents=[common], help="convergence report CSV")
    p.add_argument("--problem", required=True, choices=sorted(CASE_FACTORIES))
    p.add_argument("--scheme", required=True, help="NAME[,NAME...]")
    p.add_argument("--family", required=True, choices=sorted(FAMILY_ALIASES))
    p.add_argument("--nmin", type=int)
    p.add_argument("--nmax", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("conjecture", parents=[common], help="order check as Lie group method")
    p.add_argument("--scheme", help="NAME[,NAME...]; default: all 2N schemes")
    p.add_argument("--file")
    p.add_argument("--problems", help="subset of cases, comma separated")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_conjecture)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    args.coeff_dir = getattr(args, "coeff_dir", None)
    if args.command in ("check", "integrate") and not (args.scheme or args.file):
        parser.error("--scheme or --file is required")
    if args.command == "integrate" and not args.h > 0:
        parser.error("--h must be positive")
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"liecf: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except harness.InsufficientDataError as exc:
        print(f"liecf: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (UsageError, SchemeLookupError, CoefficientFileError, KeyError, ValueError) as exc:
        # str() of a KeyError is the repr of its message
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"liecf: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
