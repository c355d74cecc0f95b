"""Command-line entry point: ``limifrob compute | verify | basis``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .family import FamilyError, parse_family
from .griffiths_dwork import dwork_basis, dwork_basis_size_formula
from .pipeline import (EXIT_INPUT, EXIT_OK, EXIT_VERIFICATION, PipelineError, exit_code_for, run,
                       verify_report)


def dump_report(data: dict) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _compute(args) -> int:
    try:
        with open(args.family, encoding="utf-8") as fh:
            fi = parse_family(fh.read())
    except FamilyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        report = run(fi, workers=args.threads, verify=True if args.verify else None,
                     fibers=args.fibers, seed=args.seed)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    text = dump_report(report.to_json(timings=not args.no_timings))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    print(report.summary())
    return report.exit_code


def _verify(args) -> int:
    try:
        with open(args.report, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        out = verify_report(data, args.kmax)
    except Exception as exc:  # attribute and map like the pipeline does
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    if "fermat" in out:
        f = out["fermat"]
        print(f"fermat fibre: k<={f['kmax']} {_verdict(f['passed'])}")
    for fib in out["fibers"]:
        print(f"fibre t0={fib['t0']}: k<={fib['kmax']} {_verdict(fib['passed'])}"
              + (f" (first mismatch at k={fib['first_mismatch']})" if fib["first_mismatch"] else ""))
    if out["failures"]:
        print("FAILED: " + ", ".join(out["failures"]))
        return EXIT_VERIFICATION
    print("all checks passed")
    return EXIT_OK


def _verdict(x) -> str:
    return "skipped" if x is None else "pass" if x else "FAIL"


def _basis(args) -> int:
    try:
        basis = dwork_basis(args.n, args.d)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for b in basis:
        print(b)
    print(f"# {len(basis)} elements (formula: {dwork_basis_size_formula(args.n, args.d)})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="limifrob", description="Limiting Frobenius structures of hypersurface pencils.")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compute", help="run the full pipeline on a family file")
    c.add_argument("--family", required=True, help="family description (key = value text)")
    c.add_argument("--out", help="write the JSON report here")
    c.add_argument("--threads", type=int, default=1, help="worker processes for the Gauss-Manin stage")
    c.add_argument("--verbose", action="store_true", help="log stage progress to stderr")
    c.add_argument("--verify", action="store_true", help="force point-count verification on")
    c.add_argument("--fibers", type=int, default=1, help="smooth fibres to check against point counts")
    c.add_argument("--seed", type=int, default=0, help="seed for choosing smooth fibres")
    c.add_argument("--no-timings", action="store_true", help="omit wall-clock timings (byte-stable output)")
    c.set_defaults(func=_compute)

    v = sub.add_parser("verify", help="re-check a saved report against point counts")
    v.add_argument("--report", required=True)
    v.add_argument("--kmax", type=int, default=3)
    v.add_argument("--verbose", action="store_true")
    v.set_defaults(func=_verify)

    b = sub.add_parser("basis", help="print the Dwork basis for (n, d)")
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--d", type=int, required=True)
    b.add_argument("--verbose", action="store_true")
    b.set_defaults(func=_basis)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_INPUT
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
