"""Command-line front end.

Every artifact is a JSON or CSV document, so the subcommands compose
through files::

    onebit gen-signal --d 100 --s 5 --seed 1 -o x.json
    onebit gen-matrix --n 2000 --d 100 --seed 2 -o A.json
    onebit sense --matrix A.json --signal x.json --model flip --p 0.1 --seed 3 -o y.json
    onebit recover --matrix A.json --measurements y.json --k 5 -o xhat.json

Exit status is 0 on success, 2 for invalid or contradictory arguments and
1 for runtime failures (including a failed verification). Data goes to
the ``-o`` file or standard output, diagnostics to standard error, and
nothing is written to the data stream when a command fails.
"""
import argparse
import io
import json
import math
import os
import sys

from .core import SparseSignal
from .errors import AssumptionViolationError, InvalidParameterError, OneBitError
from .estimators import (
    estimate_direction,
    estimate_nonneg_direction,
    estimate_ternary,
    estimate_with_norm,
)
from .harness import (
    ExperimentSpec,
    aggregate_path,
    calibrate_c_emp,
    generate_signal,
    run_grid,
    verify_concentration,
    verify_mean_identity,
    verify_oracle,
)
from .sensing import (
    Dithered,
    NoiselessSign,
    SignFlip,
    gaussian_ensemble,
    load_matrix,
    load_measurements,
    measure,
    save_matrix,
)
from .theory import error_bound, lambda_closed_form

SEED_ENV = "ONEBIT_SEED"


class UsageError(Exception):
    """Bad or contradictory arguments; maps to exit status 2."""


class VerificationFailed(Exception):
    """A verifier ran to completion and reported failure; exit status 1."""

    def __init__(self, message, payload):
        super().__init__(message)
        self.payload = payload


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage().rstrip()}")


# --- helpers ------------------------------------------------------------

def _seed(args, required=True):
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None
    if required:
        raise UsageError(f"--seed is required (or set {SEED_ENV})")
    return None


def _json_text(doc):
    return json.dumps(doc) + "\n"


def _emit(text, path):
    """Write ``text`` to ``path`` or standard output. Called only after success."""
    if path and path != "-":
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


def _model_from_flags(args):
    if args.model == "flip":
        if args.p is None:
            raise UsageError("--model flip requires --p")
        if args.R is not None:
            raise UsageError("--R only applies to --model dither")
        p = args.p
        if isinstance(p, list):
            p = p[0] if len(p) == 1 else tuple(p)
        return SignFlip(p)
    if args.model == "dither":
        if args.R is None:
            raise UsageError("--model dither requires --R")
        if args.p is not None:
            raise UsageError("--p only applies to --model flip")
        return Dithered(args.R)
    if args.p is not None or args.R is not None:
        raise UsageError("--model sign takes neither --p nor --R")
    return NoiselessSign()


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


# --- subcommands ----------------------------------------------------------

def cmd_gen_signal(args):
    sig = generate_signal(args.d, args.s, _seed(args), min_magnitude=args.min_magnitude,
                          equal_magnitude=args.equal)
    _emit(_json_text(sig.to_dict()), args.output)


def cmd_gen_matrix(args):
    A = gaussian_ensemble(args.n, args.d, _seed(args))
    if args.output and args.output != "-":
        save_matrix(A, args.output)
    else:
        _emit(_json_text({"n": A.n, "d": A.d, "seed": A.seed, "rows": A.rows.tolist()}), None)


def cmd_sense(args):
    model = _model_from_flags(args)
    seed = _seed(args, required=not isinstance(model, NoiselessSign))
    A = load_matrix(args.matrix)
    sig = SparseSignal.from_dict(_load_json(args.signal))
    if sig.d != A.d:
        raise UsageError(f"signal has d={sig.d} but matrix has d={A.d}")
    ms = measure(A, sig.vec, model, seed)
    if "warning" in ms.meta:
        print(f"warning: {ms.meta['warning']}", file=sys.stderr)
    _emit(_json_text(ms.to_dict()), args.output)


def cmd_recover(args):
    A = load_matrix(args.matrix)
    ms = load_measurements(args.measurements)
    if ms.n != A.n:
        raise UsageError(f"{ms.n} labels but the matrix has {A.n} rows")
    if args.variant == "norm":
        if ms.dither is None:
            raise UsageError("--variant norm needs a measurements file with a dither vector "
                             "(produced by --model dither)")
        R = ms.model.R if args.R is None else args.R
        est = estimate_with_norm(A, ms, ms.dither, R, args.k)
    else:
        if args.R is not None:
            raise UsageError("--R only applies to --variant norm")
        estimator = {"unit": estimate_direction, "nonneg": estimate_nonneg_direction,
                     "ternary": estimate_ternary}[args.variant]
        est = estimator(A, ms, args.k)
    _emit(_json_text(est.to_dict()), args.output)


def cmd_experiment(args):
    doc = _load_json(args.spec)
    if not isinstance(doc, dict):
        raise UsageError(f"{args.spec}: experiment spec must be a JSON object")
    if args.seed is not None or ("master_seed" not in doc and os.environ.get(SEED_ENV)):
        doc["master_seed"] = _seed(args)
    if args.output:
        doc["output_path"] = args.output
    spec = ExperimentSpec.from_dict(doc)
    if not spec.output_path:
        raise UsageError("no output path: set output_path in the experiment file or pass -o")
    aggregates, _ = run_grid(spec, threads=args.threads)
    failures = sum(a.failures for a in aggregates)
    print(f"wrote {spec.output_path} and {aggregate_path(spec.output_path)} "
          f"({len(aggregates)} cells, {failures} failed trials)", file=sys.stderr)


def cmd_verify_mean(args):
    report = verify_mean_identity(_model_from_flags(args), args.d, args.n, _seed(args), args.tolerance)
    payload = {"deviation": report.deviation, "tolerance": report.tolerance, "lam": report.lam,
               "d": report.d, "n": report.n, "passed": report.passed}
    if not report.passed:
        raise VerificationFailed(f"deviation {report.deviation:.6g} exceeds {report.tolerance}", payload)
    return payload


def cmd_verify_concentration(args):
    model = _model_from_flags(args)
    seed = _seed(args)
    c_emp = args.c_emp
    if args.calibrate:
        if c_emp is not None:
            raise UsageError("give either --c-emp or --calibrate")
        c_emp, _ = calibrate_c_emp(seed=seed)
    report = verify_concentration(model, args.d, args.n, args.repetitions, seed, c_emp=c_emp)
    payload = {"max": report.max, "p95": report.p95, "lam": report.lam, "d": report.d,
               "n": report.n, "repetitions": args.repetitions, "c_emp": report.c_emp,
               "passed": report.passed}
    if report.passed is False:
        raise VerificationFailed(f"max statistic {report.max:.6g} exceeds {c_emp:.6g}", payload)
    return payload


def cmd_verify_bounds(args):
    lam = args.lam if args.lam is not None else lambda_closed_form(_model_from_flags(args)).lam
    out = io.StringIO()
    out.write("n\tk\td\tlam\tC\tbound\n")
    for d in args.d:
        for k in args.k:
            for n in args.n:
                rep = error_bound(lam, k, d, n, C=args.C)
                out.write(f"{n}\t{k}\t{d}\t{rep.lam:.10g}\t{rep.C:.10g}\t{rep.bound:.10g}\n")
    return out.getvalue()


def cmd_verify_oracle(args):
    variants = ("unit", "nonneg", "ternary") if args.variant == "all" else (args.variant,)
    seed = _seed(args)
    summary = {}
    for variant in variants:
        records = verify_oracle(args.instances, seed, variant)
        bad = [r["instance"] for r in records if r["abs_diff"] > 1e-12 or not r["support_match"]]
        summary[variant] = {
            "instances": len(records),
            "max_abs_diff": max((r["abs_diff"] for r in records), default=0.0),
            "mismatches": bad,
        }
    payload = {"seed": seed, "variants": summary,
               "passed": all(not v["mismatches"] for v in summary.values())}
    if not payload["passed"]:
        raise VerificationFailed("closed form disagrees with enumeration", payload)
    return payload


def cmd_verify(args):
    handler = {"mean": cmd_verify_mean, "concentration": cmd_verify_concentration,
               "bounds": cmd_verify_bounds, "oracle": cmd_verify_oracle}[args.check]
    try:
        result = handler(args)
    except VerificationFailed as exc:
        print(f"verify {args.check}: FAILED: {exc}", file=sys.stderr)
        print(json.dumps(exc.payload), file=sys.stderr)
        return 1
    _emit(result if isinstance(result, str) else _json_text(result), args.output)
    return 0


# --- parser ---------------------------------------------------------------

def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _finite_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"expected a finite number, got {text}")
    return value


def build_parser():
    parser = _Parser(prog="onebit", description="One-bit compressed sensing by hard thresholding.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def out_flag(p):
        p.add_argument("-o", "--output", help="output file (default: standard output)")

    p = sub.add_parser("gen-signal", help="draw a random sparse signal")
    p.add_argument("--d", type=_positive_int, required=True, help="ambient dimension")
    p.add_argument("--s", type=_positive_int, required=True, help="number of non-zeros")
    p.add_argument("--seed", type=int, help=f"seed (default: ${SEED_ENV})")
    p.add_argument("--min-magnitude", type=_finite_float, help="reject entries smaller than this")
    p.add_argument("--equal", action="store_true", help="all non-zeros of magnitude 1000")
    out_flag(p)
    p.set_defaults(func=cmd_gen_signal)

    p = sub.add_parser("gen-matrix", help="draw an n x d Gaussian sensing matrix")
    p.add_argument("--n", type=_positive_int, required=True, help="number of measurements")
    p.add_argument("--d", type=_positive_int, required=True, help="ambient dimension")
    p.add_argument("--seed", type=int, help=f"seed (default: ${SEED_ENV})")
    out_flag(p)
    p.set_defaults(func=cmd_gen_matrix)

    p = sub.add_parser("sense", help="take one-bit measurements of a signal")
    p.add_argument("--matrix", required=True, help="matrix JSON")
    p.add_argument("--signal", required=True, help="signal JSON")
    p.add_argument("--model", choices=("sign", "flip", "dither"), default="sign")
    p.add_argument("--p", type=_finite_float, nargs="+", help="flip probability (one, or one per row)")
    p.add_argument("--R", type=_finite_float, help="dither scale")
    p.add_argument("--seed", type=int, help=f"noise seed (default: ${SEED_ENV})")
    out_flag(p)
    p.set_defaults(func=cmd_sense)

    p = sub.add_parser("recover", help="estimate the signal from one-bit measurements")
    p.add_argument("--matrix", required=True, help="matrix JSON")
    p.add_argument("--measurements", required=True, help="measurements JSON")
    p.add_argument("--k", type=_positive_int, required=True, help="sparsity of the estimate")
    p.add_argument("--variant", choices=("unit", "nonneg", "ternary", "norm"), default="unit")
    p.add_argument("--R", type=_finite_float,
                   help="dither scale for --variant norm (default: the one in the measurements file)")
    out_flag(p)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("experiment", help="run a Monte Carlo grid from a JSON spec")
    p.add_argument("--spec", required=True, help="experiment spec JSON")
    p.add_argument("--threads", type=_positive_int, default=1, help="worker threads")
    p.add_argument("--seed", type=int, help=f"override the master seed (default: the experiment file, then ${SEED_ENV})")
    p.add_argument("-o", "--output", help="trial CSV path (overrides output_path in the experiment file)")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("verify", help="statistical and exhaustive checks")
    checks = p.add_subparsers(dest="check", metavar="CHECK", parser_class=_Parser)
    checks.required = True

    def model_flags(q):
        q.add_argument("--model", choices=("sign", "flip", "dither"), default="sign")
        q.add_argument("--p", type=_finite_float, help="flip probability")
        q.add_argument("--R", type=_finite_float, help="dither scale")

    q = checks.add_parser("mean", help="empirical mean of a_i y_i against lam x")
    model_flags(q)
    q.add_argument("--d", type=_positive_int, default=20)
    q.add_argument("--n", type=_positive_int, default=200_000)
    q.add_argument("--tolerance", type=_finite_float, default=0.03)
    q.add_argument("--seed", type=int)
    out_flag(q)

    q = checks.add_parser("concentration", help="distribution of the normalized sup-norm deviation")
    model_flags(q)
    q.add_argument("--d", type=_positive_int, default=500)
    q.add_argument("--n", type=_positive_int, default=5000)
    q.add_argument("--repetitions", type=_positive_int, default=100)
    q.add_argument("--c-emp", type=_finite_float, help="pass iff the max statistic is at most this")
    q.add_argument("--calibrate", action="store_true",
                   help="derive the constant from the reference run (d=500, n=5000, 200 reps)")
    q.add_argument("--seed", type=int)
    out_flag(q)

    q = checks.add_parser("bounds", help="table of error-bound values over a grid")
    model_flags(q)
    q.add_argument("--lam", type=_finite_float, help="use this correlation instead of the model's")
    q.add_argument("--n", type=_positive_int, nargs="+", required=True)
    q.add_argument("--k", type=_positive_int, nargs="+", required=True)
    q.add_argument("--d", type=_positive_int, nargs="+", required=True)
    q.add_argument("--C", type=_finite_float, default=1.0, help="absolute constant")
    out_flag(q)

    q = checks.add_parser("oracle", help="closed forms against exhaustive enumeration")
    q.add_argument("--instances", type=_positive_int, default=200)
    q.add_argument("--variant", choices=("unit", "nonneg", "ternary", "all"), default="all")
    q.add_argument("--seed", type=int)
    out_flag(q)

    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        status = args.func(args)
        return 0 if status is None else int(status)
    except SystemExit as exc:
        # --help, or argparse bailing out on its own
        return exc.code if isinstance(exc.code, int) else 2
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InvalidParameterError, AssumptionViolationError) as exc:
        print(f"error: invalid argument: {exc}", file=sys.stderr)
        return 2
    except (OneBitError, OSError, ValueError, KeyError, MemoryError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
