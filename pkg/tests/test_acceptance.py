"""End-to-end acceptance runs.

Each criterion has a runner taking a master seed and an output directory.
A runner returns ``(passed, detail, csv_bytes)``, where ``csv_bytes`` maps
each CSV it wrote to that file's contents. The master seed is the
criterion number. Every test prints one PASS/FAIL line.
"""
import csv
from functools import lru_cache
import math
from pathlib import Path
import tempfile
import time

import numpy as np
import pytest

from onebit.harness import (
    MISSPECIFICATION,
    NORM_ESTIMATION,
    SUPPORT_RECOVERY,
    ExperimentSpec,
    aggregate_path,
    calibrate_c_emp,
    generate_signal,
    run_grid,
    trial_signal,
    verify_concentration,
    verify_mean_identity,
    verify_oracle,
)
from onebit.sensing import Dithered, NoiselessSign, SignFlip
from onebit.theory import SQRT_2_OVER_PI, lambda_closed_form, lambda_monte_carlo, misspec_tail

_ROOT = Path(tempfile.mkdtemp(prefix="onebit-acceptance-"))


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])
    return {path.name: path.read_bytes()}


def _grid(out, **kwargs):
    path = out / "trials.csv"
    spec = ExperimentSpec(output_path=str(path), **kwargs)
    aggs, trials = run_grid(spec)
    files = {path.name: path.read_bytes()}
    agg = Path(aggregate_path(path))
    files[agg.name] = agg.read_bytes()
    return spec, aggs, trials, files


@lru_cache(maxsize=None)
def _calibration():
    """The reference run fixing the empirical constant (d=500, n=5000, noiseless, 200 reps)."""
    return calibrate_c_emp(seed=5, d=500, n=5000, repetitions=200)


# --- runners ----------------------------------------------------------------

def run_c1(seed, out):
    t0 = time.perf_counter()
    recs = verify_oracle(200, seed, "unit")
    elapsed = time.perf_counter() - t0
    files = _write_rows(out / "oracle_unit.csv", ["instance", "d", "n", "k", "value", "oracle", "support_match"],
                        [(r["instance"], r["d"], r["n"], r["k"], r["value"], r["oracle_value"],
                          int(r["support_match"])) for r in recs])
    worst = max(r["abs_diff"] for r in recs)
    ok = worst <= 1e-12 and all(r["support_match"] for r in recs) and elapsed < 10
    return ok, f"max |diff| = {worst:.3g}, supports match {sum(r['support_match'] for r in recs)}/200, {elapsed:.1f}s", files


def run_c2(seed, out):
    t0 = time.perf_counter()
    files, details, ok = {}, [], True
    for variant in ("nonneg", "ternary"):
        recs = verify_oracle(200, seed, variant)
        files.update(_write_rows(out / f"oracle_{variant}.csv",
                                 ["instance", "d", "n", "k", "value", "oracle", "support_match"],
                                 [(r["instance"], r["d"], r["n"], r["k"], r["value"], r["oracle_value"],
                                   int(r["support_match"])) for r in recs]))
        worst = max(r["abs_diff"] for r in recs)
        ok &= worst <= 1e-12 and all(r["support_match"] for r in recs)
        ok &= max(r["d"] for r in recs) <= (10 if variant == "nonneg" else 8)
        details.append(f"{variant} max |diff| = {worst:.3g}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 30
    return ok, ", ".join(details) + f", {elapsed:.1f}s", files


def run_c3(seed, out):
    t0 = time.perf_counter()
    noiseless = lambda_monte_carlo(NoiselessSign(), 10**6, seed)
    flip = lambda_monte_carlo(SignFlip(0.25), 10**6, seed + 1000)
    elapsed = time.perf_counter() - t0
    ok = abs(noiseless - 0.7978845608) <= 0.01 and abs(flip - 0.3989422804) <= 0.01 and elapsed < 5
    ok &= abs(lambda_closed_form(SignFlip(0.25)).lam - 0.3989422804) < 1e-10
    files = _write_rows(out / "lambda.csv", ["model", "monte_carlo", "closed_form"],
                        [("sign", noiseless, SQRT_2_OVER_PI),
                         ("flip(p=0.25)", flip, lambda_closed_form(SignFlip(0.25)).lam)])
    return ok, f"noiseless {noiseless:.5f}, flip {flip:.5f}, {elapsed:.1f}s", files


def run_c4(seed, out):
    t0 = time.perf_counter()
    a = verify_mean_identity(NoiselessSign(), 20, 2 * 10**5, seed, 0.03)
    b = verify_mean_identity(SignFlip(0.25), 20, 2 * 10**5, seed + 1000, 0.03)
    elapsed = time.perf_counter() - t0
    ok = a.passed and b.passed and abs(b.lam - 0.3989) < 1e-4 and elapsed < 30
    files = _write_rows(out / "mean_identity.csv", ["model", "deviation", "tolerance", "lam"],
                        [("sign", a.deviation, a.tolerance, a.lam), ("flip(p=0.25)", b.deviation, b.tolerance, b.lam)])
    return ok, f"deviations {a.deviation:.4f} and {b.deviation:.4f} (tol 0.03), {elapsed:.1f}s", files


def run_c5(seed, out):
    t0 = time.perf_counter()
    c_emp, calib = _calibration()
    small = verify_concentration(NoiselessSign(), 500, 5000, 100, seed, c_emp=c_emp)
    large = verify_concentration(NoiselessSign(), 2000, 5000, 100, seed + 1000, c_emp=c_emp)
    elapsed = time.perf_counter() - t0
    rel = abs(small.p95 - large.p95) / min(small.p95, large.p95)
    ok = rel < 0.25 and elapsed < 120
    rows = [("calibration", 500, i, float(z)) for i, z in enumerate(calib.z_values)]
    rows += [("d500", 500, i, float(z)) for i, z in enumerate(small.z_values)]
    rows += [("d2000", 2000, i, float(z)) for i, z in enumerate(large.z_values)]
    files = _write_rows(out / "concentration.csv", ["run", "d", "rep", "z"], rows)
    return ok, (f"p95 {small.p95:.4f} (d=500) vs {large.p95:.4f} (d=2000), rel diff {rel:.3f}; "
                f"C_emp = {c_emp:.4f}, {elapsed:.1f}s"), files


def run_c6(seed, out):
    t0 = time.perf_counter()
    _, aggs, _, files = _grid(out, d_grid=[1000], n_grid=[1000, 4000, 16000], s=10, trials=50, master_seed=seed)
    elapsed = time.perf_counter() - t0
    med = [a.stat("l2_error", "median") for a in aggs]
    ratios = [med[i] / med[i + 1] for i in range(2)]
    ok = all(1.6 <= r <= 2.6 for r in ratios) and elapsed < 120
    return ok, f"medians {[round(m, 4) for m in med]}, ratios {[round(r, 3) for r in ratios]}, {elapsed:.1f}s", files


def run_c7(seed, out):
    t0 = time.perf_counter()
    _, aggs, _, files = _grid(out, d_grid=[2000], n_grid=[100, 1000, 10000], s=20, trials=100, master_seed=seed)
    elapsed = time.perf_counter() - t0
    mean = [a.stat("l2_error", "mean") for a in aggs]
    ok = mean[0] > mean[1] > mean[2] and mean[2] <= mean[0] / 5 and elapsed < 180
    return ok, f"means {[round(m, 4) for m in mean]}, {elapsed:.1f}s", files


def run_c8(seed, out):
    _, aggs, _, files = _grid(out, d_grid=[1000], n_grid=[200, 4000], s=10, trials=100, master_seed=seed,
                              signal="equal", experiment_kind=SUPPORT_RECOVERY)
    low, high = aggs[0].exact_support_rate, aggs[1].exact_support_rate
    ok = high >= 0.95 and low < high
    return ok, f"exact recovery {low:.2f} at n=200, {high:.2f} at n=4000", files


def run_c9(seed, out):
    _, aggs, _, files = _grid(out, d_grid=[500], n_grid=[20000, 40000], s=5, k=6, model=Dithered(2.0),
                              trials=100, master_seed=seed, experiment_kind=NORM_ESTIMATION)
    norm = [a.stat("norm_rel_error", "median") for a in aggs]
    direc = [a.stat("l2_error", "median") for a in aggs]
    ok = norm[0] <= 0.15 and direc[0] <= 0.15 and norm[1] < norm[0] and direc[1] < direc[0]
    return ok, (f"median rel norm error {norm[0]:.4f} -> {norm[1]:.4f}, "
                f"median direction error {direc[0]:.4f} -> {direc[1]:.4f}"), files


def run_c10(seed, out):
    c_emp, _ = _calibration()
    lam = SQRT_2_OVER_PI
    d, n = 2000, 10000
    spec, _, trials, files = _grid(out, d_grid=[d], n_grid=[n], s=20, k_grid=[1, 5, 10, 15], trials=100,
                                   master_seed=seed, experiment_kind=MISSPECIFICATION)
    inside = {}
    for r in trials:
        x = trial_signal(spec, d, r.trial_index)
        _, full_term, _ = misspec_tail(x, r.k)
        envelope = full_term + (c_emp / lam) * math.sqrt(r.k * math.log(d) / n)
        inside.setdefault(r.k, []).append(r.l2_error <= envelope)
    rates = {k: float(np.mean(v)) for k, v in inside.items()}
    pooled = float(np.mean([b for v in inside.values() for b in v]))
    ok = all(rate >= 0.95 for rate in rates.values())
    return ok, f"C_emp = {c_emp:.4f}; inside envelope per k {rates}, pooled {pooled:.4f}", files


def run_c11(seed, out):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    rows, worst = [], 0.0
    for i in range(1000):
        d = int(rng.integers(2, 200))
        s = int(rng.integers(1, min(d, 30) + 1))
        x = generate_signal(d, s, seed * 100_000 + i).unit
        for k in range(1, s + 1):
            inf_term, _, z = misspec_tail(x, k)
            direct = float(np.max(np.abs(z - x)))
            worst = max(worst, abs(inf_term - direct))
            rows.append((i, d, s, k, inf_term, direct))
    elapsed = time.perf_counter() - t0
    files = _write_rows(out / "misspec_tail.csv", ["signal", "d", "s", "k", "closed_form", "direct"], rows)
    ok = worst <= 1e-12 and elapsed < 5
    return ok, f"{len(rows)} (signal, k) pairs, max |diff| = {worst:.3g}, {elapsed:.1f}s", files


RUNNERS = {1: run_c1, 2: run_c2, 3: run_c3, 4: run_c4, 5: run_c5, 6: run_c6,
           7: run_c7, 8: run_c8, 9: run_c9, 10: run_c10, 11: run_c11}


@lru_cache(maxsize=None)
def first_run(criterion):
    out = _ROOT / f"c{criterion}-a"
    out.mkdir(parents=True, exist_ok=True)
    return RUNNERS[criterion](criterion, out)


@pytest.fixture
def say(capsys):
    def emit(criterion, passed, detail):
        with capsys.disabled():
            print(f"\n[acceptance] criterion {criterion}: {'PASS' if passed else 'FAIL'}: {detail}")
    return emit


@pytest.mark.parametrize("criterion", sorted(RUNNERS))
def test_criterion(criterion, say):
    passed, detail, _ = first_run(criterion)
    say(criterion, passed, detail)
    assert passed, detail


def test_criterion_12_reproducibility(say):
    mismatched, compared = [], 0
    for criterion in sorted(RUNNERS):
        _, _, first = first_run(criterion)
        out = _ROOT / f"c{criterion}-b"
        out.mkdir(parents=True, exist_ok=True)
        _, _, second = RUNNERS[criterion](criterion, out)
        for name in first:
            compared += 1
            if first[name] != second.get(name):
                mismatched.append(f"c{criterion}/{name}")
    passed = not mismatched and compared > 0
    say(12, passed, f"{compared} CSV files compared byte-for-byte, mismatches: {mismatched or 'none'}")
    assert passed
