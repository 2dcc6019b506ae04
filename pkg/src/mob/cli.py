"""Command-line interface.

    mob eval --spec FILE --assign k=1,... [--regulate var=eps]...
             [--split-summand N] [--tol T] [--max-terms N]
             [--eps-ladder 1e-2,1e-3,1e-4] [--a-ladder ...]
             [--json OUT] [--trace]
    mob pfq  --upper a,b --lower c --x X
    mob oracle --spec FILE --assign ...

Exit codes: 0 converged final value, 2 no convergent group, 1 structural
error.
"""

from __future__ import annotations

import argparse
import os
import sys
from fractions import Fraction

from .core import QC
from .numerics import NumericConfig, quadrature_oracle
from .parser import MobParseError, parse_assignments, parse_spec
from .pipeline import (EXIT_NO_CONVERGENT_GROUP, EXIT_OK, EXIT_STRUCTURAL,
                       PipelineError, RunRequest, run)


def _config_from_args(args) -> NumericConfig:
    kwargs = {}
    if args.tol is not None:
        kwargs["target_tol"] = args.tol
    if args.max_terms is not None:
        kwargs["max_terms"] = args.max_terms
    if args.eps_ladder:
        kwargs["epsilon_ladder"] = tuple(float(x)
                                         for x in args.eps_ladder.split(","))
    if args.a_ladder:
        kwargs["a_ladder"] = tuple(Fraction(x) for x in args.a_ladder.split(","))
    precision = os.environ.get("MOB_SEED_PRECISION")
    if precision:
        kwargs["working_precision"] = precision
    return NumericConfig(**kwargs)


def _add_numeric_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-terms", type=int, default=None)
    p.add_argument("--eps-ladder", default=None)
    p.add_argument("--a-ladder", default=None)


def _complex_arg(text: str) -> complex:
    vals = parse_assignments(f"v={text}")
    return next(iter(vals.values())).to_complex()


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="mob",
                                 description="method-of-brackets engine")
    sub = ap.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("eval", help="evaluate an integral spec")
    ev.add_argument("--spec", required=True)
    ev.add_argument("--assign", default="")
    ev.add_argument("--regulate", action="append", default=[],
                    metavar="VAR=NAME",
                    help="multiply the integrand by VAR**NAME (limit NAME->0)")
    ev.add_argument("--split-summand", type=int, default=None,
                    help="attach the A convergence splitter to this summand "
                         "of the multinomial (limit A->1)")
    ev.add_argument("--json", default=None)
    ev.add_argument("--trace", action="store_true")
    _add_numeric_flags(ev)

    pf = sub.add_parser("pfq", help="pFq analytic continuation front-end")
    pf.add_argument("--upper", required=True)
    pf.add_argument("--lower", default="")
    pf.add_argument("--x", required=True)
    _add_numeric_flags(pf)

    orc = sub.add_parser("oracle", help="adaptive-quadrature cross-check")
    orc.add_argument("--spec", required=True)
    orc.add_argument("--assign", default="")
    _add_numeric_flags(orc)

    args = ap.parse_args(argv)
    try:
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "pfq":
            return _cmd_pfq(args)
        return _cmd_oracle(args)
    except (MobParseError, PipelineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STRUCTURAL


def _cmd_eval(args) -> int:
    with open(args.spec, encoding="utf-8") as fh:
        text = fh.read()
    regulate = []
    for item in args.regulate:
        if "=" not in item:
            raise PipelineError(f"--regulate expects VAR=NAME, got {item!r}")
        var, name = item.split("=", 1)
        regulate.append((var.strip(), name.strip()))
    req = RunRequest(spec_text=text, assignments=args.assign,
                     regulate=tuple(regulate),
                     split_summand=args.split_summand,
                     config=_config_from_args(args), trace=args.trace)
    report = run(req)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
            fh.write("\n")
    print(report.human_text())
    return report.exit_code


def _cmd_pfq(args) -> int:
    from .analyze import ContinuationError, continue_pfq
    from .numerics import pfq_sum

    upper = [_complex_arg(s) for s in args.upper.split(",") if s.strip()]
    lower = [_complex_arg(s) for s in args.lower.split(",") if s.strip()]
    x = _complex_arg(args.x)
    cfg = _config_from_args(args)
    if abs(x) < 1.0:
        v = pfq_sum(upper, lower, x, cfg)
        if not v.ok():
            print(f"direct series failed: {v.status}", file=sys.stderr)
            return EXIT_NO_CONVERGENT_GROUP
        print(f"pFq({args.upper}; {args.lower}; {args.x}) = "
              f"{v.value.real!r} + {v.value.imag!r}i  (direct series, "
              f"{v.terms_used} terms)")
        return EXIT_OK
    try:
        value, cert = continue_pfq(upper, lower, x, cfg)
    except ContinuationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STRUCTURAL
    print(f"pFq({args.upper}; {args.lower}; {args.x}) = "
          f"{value.real!r} + {value.imag!r}i")
    for s in cert["series"]:
        print(f"  {s['origin']}: region {s['region']}, {s['terms']} terms, "
              f"argument {s['pfq']['argument']}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    with open(args.spec, encoding="utf-8") as fh:
        text = fh.read()
    spec = parse_spec(text)
    env = parse_assignments(args.assign,
                            known={p.name for p in spec.parameters})
    v = quadrature_oracle(spec, env)
    print(f"quadrature = {v.value.real!r}  (estimated error {v.error_estimate:.2e},"
          f" status {v.status})")
    return EXIT_OK if v.ok() else EXIT_NO_CONVERGENT_GROUP


if __name__ == "__main__":
    sys.exit(main())
