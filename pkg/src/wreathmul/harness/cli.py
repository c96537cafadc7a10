"""Command-line entry point: ``wreathmul {verify,bound,measure,exponents,bench}``.

Exit status: 0 on success, 1 when a measured error exceeds its bound or a
verification fails, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from typing import Callable, Sequence

import numpy as np

from .. import flops
from ..bilinear import error_bound_stationary, naive_scheme, scheme_defects, strassen_scheme, trivial_scheme
from ..grouplib import check_stpp, running_example_triples, stpp_family
from ..matcore import EPS_WORKING, NormKind, naive_mu
from ..stpalg import (
    BudgetExceeded,
    build_config,
    exponent_report,
    flop_report,
    stp_multiply_array,
)
from ..wreathfft import GroupArray, dft_forward, dft_inverse
from .experiments import (
    SCHEMA_VERSION,
    InvariantViolation,
    make_algorithm,
    parse_sizes,
    run_error_experiment,
    trial_inputs,
)

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ verify


def _verify_checks(quick: bool) -> list[tuple[str, Callable[[], bool]]]:
    rng = np.random.default_rng(2024)

    def scheme_ok(s) -> bool:
        return not scheme_defects(s)

    def fft_ok(m: int, D: int) -> bool:
        x = rng.standard_normal(m**D) + 1j * rng.standard_normal(m**D)
        y = rng.standard_normal(m**D) + 1j * rng.standard_normal(m**D)
        fx = dft_forward(GroupArray(m, D, x)).data
        fy = dft_forward(GroupArray(m, D, y)).data
        back = dft_inverse(GroupArray(m, D, fx)).data
        grid = (m,) * D
        # cyclic convolution over (Z/m)^D computed directly
        xg, yg = x.reshape(grid), y.reshape(grid)
        conv = np.zeros(grid, dtype=complex)
        for idx in np.ndindex(*grid):
            conv += xg[idx] * np.roll(yg, idx, axis=tuple(range(D)))
        fc = dft_forward(GroupArray(m, D, conv.ravel())).data
        return (
            np.linalg.norm(back - x) <= 1e-12 * np.linalg.norm(x)
            and math.isclose(np.linalg.norm(fx), m ** (D / 2) * np.linalg.norm(x), rel_tol=1e-12)
            and np.linalg.norm(fc - fx * fy) <= 1e-10 * np.linalg.norm(fc)
        )

    def stp_ok(m: int, n_wreath: int, trials: int) -> bool:
        cfg = build_config(m, n_wreath)
        for _ in range(trials):
            a = rng.uniform(-1, 1, (cfg.n, cfg.n))
            b = rng.uniform(-1, 1, (cfg.n, cfg.n))
            c = stp_multiply_array(a, b, cfg)
            ref = a @ b
            if np.abs(c - ref).max() > 1e-10 * np.abs(ref).max():
                return False
        return True

    checks: list[tuple[str, Callable[[], bool]]] = [
        ("scheme scalar", lambda: scheme_ok(trivial_scheme())),
        ("scheme strassen", lambda: scheme_ok(strassen_scheme())),
        ("scheme naive k=2", lambda: scheme_ok(naive_scheme(2))),
        ("scheme naive k=3", lambda: scheme_ok(naive_scheme(3))),
        ("stpp running example m=16", lambda: check_stpp(running_example_triples(16))),
    ]
    family = [(n, m) for n in range(1, 5) for m in (2, 3, 4)]
    if quick:
        family = [(n, m) for n, m in family if n <= 3 and m <= 3]
    for n, m in family:
        checks.append((f"stpp family N={n} m={m}", lambda n=n, m=m: check_stpp(stpp_family(n, m))))
    for m, D in ([(3, 2), (4, 3)] if quick else [(3, 2), (4, 3), (3, 4)]):
        checks.append((f"fft m={m} D={D}", lambda m=m, D=D: fft_ok(m, D)))
    trials = 2 if quick else 10
    for m, n_wreath in ((3, 2), (4, 2), (2, 3)):
        checks.append((f"stp oracle ({m},{n_wreath})", lambda m=m, n=n_wreath: stp_ok(m, n, trials)))
    return checks


def cmd_verify(args: argparse.Namespace) -> int:
    failures = 0
    for name, check in _verify_checks(args.quick):
        start = time.perf_counter()
        ok = bool(check())
        failures += not ok
        print(f"{'ok  ' if ok else 'FAIL'} {name} ({time.perf_counter() - start:.2f} s)")
    print(f"{failures} failure(s)")
    return EXIT_OK if failures == 0 else EXIT_VIOLATION


# ------------------------------------------------------------------- bound


def cmd_bound(args: argparse.Namespace) -> int:
    alg = args.alg.strip().lower()
    eps = args.eps
    if alg == "naive":
        mu = naive_mu(args.n, NormKind.MAX_ENTRY)
        norm = "max_entry"
    elif alg == "strassen":
        try:
            mu = error_bound_stationary(strassen_scheme(), args.n)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        norm = "max_entry"
    elif alg.startswith("stp"):
        algorithm = make_algorithm(alg, inner=args.inner)
        mu = algorithm.predicted(args.n)
        norm = "frobenius"
    else:
        raise UsageError(f"unknown algorithm {args.alg!r}")
    print(json.dumps({"schema": SCHEMA_VERSION, "algorithm": alg, "n": args.n, "norm": norm,
                      "mu": mu, "eps": eps, "bound": mu * eps}))
    return EXIT_OK


# ----------------------------------------------------------------- measure


def _csv_text(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "trial", "measured", "predicted", "ratio"])
    rows = sorted((r for rep in reports for r in rep.records), key=lambda r: (r.n, r.trial))
    for r in rows:
        writer.writerow([r.n, r.trial, repr(r.measured), repr(r.predicted), repr(r.ratio)])
    return buf.getvalue()


def cmd_measure(args: argparse.Namespace) -> int:
    sizes = parse_sizes(args.sizes)
    options = {"base_threshold": args.threshold, "inner": args.inner}
    reports = run_error_experiment(args.alg, sizes, args.trials, args.seed, complex_data=args.complex,
                                   check=False, **options)
    if args.out == "csv":
        text = _csv_text(reports)
    else:
        for rep in reports:
            rep.elapsed_ms = round(rep.elapsed_ms, 3)
        payload = {"schema": SCHEMA_VERSION, "reports": [r.as_dict() for r in reports]}
        if args.deterministic:
            for rep in payload["reports"]:
                rep.pop("elapsed_ms")
        text = json.dumps(payload, indent=2) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    bad = [r for r in reports if not r.ok]
    for r in bad:
        print(f"violation: {r.algorithm} n={r.n} measured {r.measured_max:.6g} > predicted {r.predicted:.6g}",
              file=sys.stderr)
    return EXIT_VIOLATION if bad else EXIT_OK


# --------------------------------------------------------------- exponents


def cmd_exponents(args: argparse.Namespace) -> int:
    rows = []
    for m in args.m:
        try:
            rep = exponent_report(m)
        except ValueError as exc:
            raise UsageError(f"m={m}: {exc}") from exc
        rows.append((m, rep))
    if args.json:
        print(json.dumps({"schema": SCHEMA_VERSION, "exponents": [
            {"m": m, **rep.as_dict(), "quoted": rep.quoted()} for m, rep in rows]}, indent=2))
        return EXIT_OK
    print(f"{'m':>4} {'alpha':>8} {'beta':>8} {'runtime':>8} {'frob_err':>9} {'max_err':>8}")
    for m, rep in rows:
        print(f"{m:>4} {rep.alpha:8.4f} {rep.beta:8.4f} {rep.runtime_exp:8.4f} "
              f"{rep.frobenius_err_exp:9.4f} {rep.maxnorm_err_exp:8.4f}")
    return EXIT_OK


# ------------------------------------------------------------------- bench


def cmd_bench(args: argparse.Namespace) -> int:
    alg = make_algorithm(args.alg, base_threshold=args.threshold, inner=args.inner)
    results = []
    for n in parse_sizes(args.sizes):
        if not alg.sizes_ok(n):
            raise UsageError(f"size {n} is not supported by {alg.name}")
        a, b = trial_inputs(args.seed, n, 0)
        with flops.count_flops() as counter:
            start = time.perf_counter()
            alg.multiply(a, b)
            elapsed = (time.perf_counter() - start) * 1e3
        entry = {
            "n": n,
            "elapsed_ms": round(elapsed, 3),
            "products": counter.total("product"),
            "muls": counter.total("mul"),
            "adds": counter.total("add"),
        }
        if alg.name.startswith("stp"):
            entry["steps"] = flop_report(counter)
        results.append(entry)
    print(json.dumps({"schema": SCHEMA_VERSION, "algorithm": alg.name, "results": results}, indent=2))
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wreathmul", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the correctness suites")
    p.add_argument("--quick", action="store_true", help="smaller instances (under a minute)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bound", help="print the predicted error coefficient mu(n)")
    p.add_argument("--alg", required=True, help="naive, strassen or stp(m,N)")
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--eps", type=float, default=EPS_WORKING)
    p.add_argument("--inner", default="naive", choices=["naive", "strassen"])
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("measure", help="run an error experiment")
    p.add_argument("--alg", required=True, help="naive, strassen or stp(m,N)")
    p.add_argument("--sizes", required=True, help="lo:hi (powers of two) or a comma list")
    p.add_argument("--trials", type=_positive, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", choices=["json", "csv"], default="json")
    p.add_argument("--output", help="write to this file instead of standard output")
    p.add_argument("--complex", action="store_true", help="complex inputs instead of real")
    p.add_argument("--threshold", type=_positive, default=8, help="naive base order for strassen")
    p.add_argument("--inner", default="naive", choices=["naive", "strassen"])
    p.add_argument("--deterministic", action="store_true", help="omit timings from JSON")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("exponents", help="growth exponents of the bundled STP family")
    p.add_argument("--m", type=int, action="append", required=True, help="modulus (repeatable)")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_exponents)

    p = sub.add_parser("bench", help="operation counts and wall time")
    p.add_argument("--alg", required=True)
    p.add_argument("--sizes", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=_positive, default=8)
    p.add_argument("--inner", default="naive", choices=["naive", "strassen"])
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except (UsageError, ValueError, BudgetExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
