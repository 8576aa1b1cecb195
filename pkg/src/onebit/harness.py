"""Monte Carlo experiments over ``(d, n, k)`` grids and statistical verifiers.

Every random quantity of a trial comes from a seed derived by hashing
``(master_seed, purpose, d, [n,] trial)``, so grid cells are independent
and individually re-runnable and results do not depend on scheduling.
The signal seed leaves out ``n``: at a given ``d``, trial ``t`` sees the
same signal for every sample size.
"""
from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import dataclass, field, fields
import json
import math
import os
import time

import numpy as np

from .core import SparseSignal
from .errors import InvalidParameterError, OneBitError
from .estimators import (
    NonnegUnitSparse,
    TernarySparse,
    UnitSparse,
    brute_force_oracle,
    estimate_direction,
    estimate_nonneg_direction,
    estimate_ternary,
    estimate_with_norm,
)
from .rng import derive_seed, stream
from .sensing import (
    Dithered,
    MeasurementModel,
    NoiselessSign,
    augment,
    gaussian_ensemble,
    measure,
    model_from_dict,
    sign_measure,
)
from .theory import lambda_closed_form, misspec_tail

__all__ = [
    "SPARSE_APPROX",
    "SUPPORT_RECOVERY",
    "NORM_ESTIMATION",
    "MISSPECIFICATION",
    "ExperimentSpec",
    "TrialResult",
    "AggregateResult",
    "TrialError",
    "generate_signal",
    "trial_signal",
    "run_trial",
    "run_trials",
    "run_grid",
    "aggregate",
    "write_trials_csv",
    "write_aggregate_csv",
    "aggregate_path",
    "metrics",
    "verify_mean_identity",
    "verify_concentration",
    "calibrate_c_emp",
    "verify_oracle",
]

SPARSE_APPROX = "SparseApprox"
SUPPORT_RECOVERY = "SupportRecovery"
NORM_ESTIMATION = "NormEstimation"
MISSPECIFICATION = "Misspecification"
KINDS = (SPARSE_APPROX, SUPPORT_RECOVERY, NORM_ESTIMATION, MISSPECIFICATION)

SIGNAL_AMPLITUDE = 1000.0

TRIAL_COLUMNS = (
    "d", "n", "s", "k", "model", "trial", "l2_error", "support_symdiff",
    "norm_abs_error", "norm_rel_error", "branch", "elapsed_s",
)
METRIC_COLUMNS = ("l2_error", "support_symdiff", "norm_abs_error", "norm_rel_error")


class TrialError(OneBitError):
    """An estimator failure, annotated with the trial that produced it."""

    def __init__(self, d, n, k, trial, cause):
        super().__init__(f"trial d={d} n={n} k={k} #{trial}: {type(cause).__name__}: {cause}")
        self.d, self.n, self.k, self.trial = d, n, k, trial
        self.cause = cause


def _int_tuple(values, name):
    if isinstance(values, (int, np.integer)):
        values = (values,)
    out = tuple(int(v) for v in values)
    if any(v < 1 for v in out):
        raise InvalidParameterError(f"all entries of {name} must be positive, got {out}")
    return out


@dataclass(frozen=True)
class ExperimentSpec:
    """A grid experiment.

    ``k`` defaults to ``s``. ``k_grid`` replaces ``k`` for misspecification
    sweeps. For norm estimation the dither scale of a :class:`Dithered`
    model is relative: each trial uses ``R = model.R * ||x||_2``.
    ``signal`` is ``"uniform"`` (entries uniform on [-1000, 1000]) or
    ``"equal"`` (entries +-1000).
    """

    d_grid: tuple
    n_grid: tuple
    s: int
    k: int = None
    k_grid: tuple = None
    model: MeasurementModel = NoiselessSign()
    trials: int = 100
    master_seed: int = 0
    experiment_kind: str = SPARSE_APPROX
    output_path: str = None
    signal: str = "uniform"
    min_magnitude: float = None
    timing: bool = False

    def __post_init__(self):
        set_ = lambda name, value: object.__setattr__(self, name, value)  # noqa: E731
        set_("d_grid", _int_tuple(self.d_grid, "d_grid"))
        set_("n_grid", _int_tuple(self.n_grid, "n_grid"))
        set_("model", model_from_dict(self.model))
        if self.s < 1:
            raise InvalidParameterError(f"s must be positive, got {self.s}")
        if self.trials < 1:
            raise InvalidParameterError(f"trials must be positive, got {self.trials}")
        if self.experiment_kind not in KINDS:
            raise InvalidParameterError(f"unknown experiment kind {self.experiment_kind!r}")
        if self.signal not in ("uniform", "equal"):
            raise InvalidParameterError(f"signal must be 'uniform' or 'equal', got {self.signal!r}")
        if self.k is not None and self.k_grid is not None:
            raise InvalidParameterError("give either k or k_grid, not both")
        if self.k_grid is not None:
            set_("k_grid", _int_tuple(self.k_grid, "k_grid"))
        elif self.k is not None and self.k < 1:
            raise InvalidParameterError(f"k must be positive, got {self.k}")
        for d in self.d_grid:
            if self.s > d:
                raise InvalidParameterError(f"s={self.s} exceeds d={d}")
            if max(self.k_values) > d:
                raise InvalidParameterError(f"k={max(self.k_values)} exceeds d={d}")
        dithered = isinstance(self.model, Dithered)
        if (self.experiment_kind == NORM_ESTIMATION) != dithered:
            raise InvalidParameterError("norm estimation requires, and only admits, the dithered model")
        if self.experiment_kind == NORM_ESTIMATION and min(self.k_values) < 2:
            raise InvalidParameterError("norm estimation needs k >= 2")
        if self.min_magnitude is not None and not 0 <= self.min_magnitude < SIGNAL_AMPLITUDE:
            raise InvalidParameterError(f"min_magnitude must lie in [0, {SIGNAL_AMPLITUDE})")

    @property
    def k_values(self):
        if self.k_grid is not None:
            return self.k_grid
        return (self.s if self.k is None else int(self.k),)

    def to_dict(self):
        doc = {f.name: getattr(self, f.name) for f in fields(self)}
        doc["d_grid"] = list(self.d_grid)
        doc["n_grid"] = list(self.n_grid)
        if self.k_grid is not None:
            doc["k_grid"] = list(self.k_grid)
        doc["model"] = self.model.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc):
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise InvalidParameterError(f"unknown experiment spec fields: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class TrialResult:
    d: int
    n: int
    s: int
    k: int
    model: str
    trial_index: int
    l2_error: float
    support_symdiff: int
    norm_abs_error: float = None
    norm_rel_error: float = None
    branch: str = None
    elapsed: float = None


@dataclass
class AggregateResult:
    d: int
    n: int
    s: int
    k: int
    model: str
    trials: int
    failures: int = 0
    stats: dict = field(default_factory=dict)
    exact_support_rate: float = None

    def stat(self, metric, which="mean"):
        return self.stats[metric][which]


# --- signals ------------------------------------------------------------

def generate_signal(d, s, seed, min_magnitude=None, equal_magnitude=False):
    """Random s-sparse signal with a uniformly drawn support.

    Non-zeros are i.i.d. uniform on ``[-1000, 1000]``, redrawn while their
    magnitude is below ``min_magnitude``. With ``equal_magnitude`` every
    non-zero is ``+-1000`` with a random sign.
    """
    if not 1 <= s <= d:
        raise InvalidParameterError(f"need 1 <= s <= d, got s={s}, d={d}")
    if min_magnitude is not None and not 0 <= min_magnitude < SIGNAL_AMPLITUDE:
        raise InvalidParameterError(f"min_magnitude must lie in [0, {SIGNAL_AMPLITUDE}), got {min_magnitude}")
    rng = stream(seed, "signal")
    support = np.sort(rng.choice(d, size=s, replace=False))
    if equal_magnitude:
        values = SIGNAL_AMPLITUDE * (2.0 * rng.integers(0, 2, size=s) - 1.0)
    else:
        floor = 0.0 if min_magnitude is None else float(min_magnitude)
        values = rng.uniform(-SIGNAL_AMPLITUDE, SIGNAL_AMPLITUDE, size=s)
        bad = (np.abs(values) < floor) | (values == 0.0)
        while bad.any():
            values[bad] = rng.uniform(-SIGNAL_AMPLITUDE, SIGNAL_AMPLITUDE, size=int(bad.sum()))
            bad = (np.abs(values) < floor) | (values == 0.0)
    vec = np.zeros(d)
    vec[support] = values
    return SparseSignal(vec, s=s, seed=int(seed))


def trial_signal(spec, d, trial_index):
    """The signal used by every trial ``trial_index`` at dimension ``d``."""
    seed = derive_seed(spec.master_seed, "signal", d, trial_index)
    return generate_signal(d, spec.s, seed, min_magnitude=spec.min_magnitude,
                           equal_magnitude=spec.signal == "equal")


# --- metrics ------------------------------------------------------------

def metrics(estimate, truth, kind=SPARSE_APPROX, k=None):
    """Error metrics of ``estimate`` against ``truth``.

    For misspecification the target is ``H_k(x) / ||H_k(x)||`` and its
    support, otherwise the unit-normalized ``x`` and ``supp(x)``.
    """
    if estimate.direction.size != truth.d:
        raise InvalidParameterError("estimate and truth differ in dimension")
    if kind == MISSPECIFICATION:
        _, _, target = misspec_tail(truth, estimate.k if k is None else k)
        target_support = np.flatnonzero(target)
    else:
        target = truth.unit
        target_support = truth.support
    est_support = np.flatnonzero(estimate.direction)
    out = {
        "l2_error": float(np.linalg.norm(estimate.direction - target)),
        "support_symdiff": int(np.setxor1d(est_support, target_support).size),
        "norm_abs_error": None,
        "norm_rel_error": None,
    }
    if estimate.branch is not None:
        err = abs(float(np.linalg.norm(estimate.scaled)) - truth.norm)
        out["norm_abs_error"] = err
        out["norm_rel_error"] = err / truth.norm
    return out


# --- trials -------------------------------------------------------------

def _check_cell(spec, d, n, ks):
    if d not in spec.d_grid or n not in spec.n_grid:
        raise InvalidParameterError(f"(d={d}, n={n}) is not a point of the grid")
    for k in ks:
        if k not in spec.k_values:
            raise InvalidParameterError(f"k={k} is not part of the experiment")


def run_trials(spec, d, n, trial_index, ks=None):
    """Run one trial at ``(d, n)`` for every ``k`` in ``ks``, sharing the data.

    Returns one :class:`TrialResult` per ``k``.
    """
    ks = spec.k_values if ks is None else tuple(ks)
    _check_cell(spec, d, n, ks)
    truth = trial_signal(spec, d, trial_index)
    A = gaussian_ensemble(n, d, derive_seed(spec.master_seed, "matrix", d, n, trial_index))
    noise_seed = derive_seed(spec.master_seed, "noise", d, n, trial_index)
    model = spec.model
    if spec.experiment_kind == NORM_ESTIMATION:
        model = Dithered(model.R * truth.norm)
    ms = measure(A, truth.vec, model, noise_seed)
    label = spec.model.label()
    results = []
    for k in ks:
        start = time.perf_counter()
        try:
            if spec.experiment_kind == NORM_ESTIMATION:
                est = estimate_with_norm(A, ms, ms.dither, model.R, k)
            else:
                est = estimate_direction(A, ms, k)
        except OneBitError as exc:
            raise TrialError(d, n, k, trial_index, exc) from exc
        m = metrics(est, truth, spec.experiment_kind, k)
        elapsed = time.perf_counter() - start
        results.append(TrialResult(
            d=d, n=n, s=spec.s, k=k, model=label, trial_index=trial_index,
            l2_error=m["l2_error"], support_symdiff=m["support_symdiff"],
            norm_abs_error=m["norm_abs_error"], norm_rel_error=m["norm_rel_error"],
            branch=est.branch, elapsed=elapsed if spec.timing else None,
        ))
    return results


def run_trial(spec, d, n, trial_index, k=None):
    """Run a single trial; ``k`` defaults to the experiment's only ``k``."""
    if k is None:
        if len(spec.k_values) != 1:
            raise InvalidParameterError("spec has several k values; pass k explicitly")
        k = spec.k_values[0]
    return run_trials(spec, d, n, trial_index, (k,))[0]


def _summary(values):
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "median": float(np.median(arr)), "std": float(arr.std())}


def aggregate(spec, trial_results, failures=None):
    """Group trial results by ``(d, n, k)`` and summarize every metric."""
    failures = failures or {}
    groups = {}
    for r in trial_results:
        groups.setdefault((r.d, r.n, r.k), []).append(r)
    out = []
    for d in spec.d_grid:
        for n in spec.n_grid:
            for k in spec.k_values:
                rows = groups.get((d, n, k), [])
                agg = AggregateResult(d=d, n=n, s=spec.s, k=k, model=spec.model.label(),
                                      trials=len(rows), failures=failures.get((d, n, k), 0))
                if rows:
                    for metric in METRIC_COLUMNS:
                        values = [getattr(r, metric) for r in rows]
                        if all(v is not None for v in values):
                            agg.stats[metric] = _summary(values)
                    agg.exact_support_rate = float(np.mean([r.support_symdiff == 0 for r in rows]))
                out.append(agg)
    return out


def run_grid(spec, threads=1, output_path=None):
    """Run every trial of the grid, aggregate, and write the CSV files.

    A failing trial is recorded as a failure of its cell and the grid
    carries on. Output order is ``(d, n, k, trial)`` whatever the number
    of worker threads.

    Returns ``(aggregates, trial_results)``.
    """
    output_path = output_path or spec.output_path
    tasks = [(d, n, t) for d in spec.d_grid for n in spec.n_grid for t in range(spec.trials)]

    def work(task):
        try:
            return run_trials(spec, *task), None
        except TrialError as exc:
            return [], exc

    if threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(work, tasks))
    else:
        outcomes = [work(task) for task in tasks]

    trial_results, failures = [], {}
    for rows, exc in outcomes:
        trial_results.extend(rows)
        if exc is not None:
            for k in spec.k_values:
                failures[(exc.d, exc.n, k)] = failures.get((exc.d, exc.n, k), 0) + 1
    order = {k: i for i, k in enumerate(spec.k_values)}
    trial_results.sort(key=lambda r: (spec.d_grid.index(r.d), spec.n_grid.index(r.n),
                                      order[r.k], r.trial_index))
    aggregates = aggregate(spec, trial_results, failures)
    if output_path:
        write_trials_csv(trial_results, output_path)
        write_aggregate_csv(aggregates, aggregate_path(output_path))
    return aggregates, trial_results


# --- CSV export ---------------------------------------------------------

def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.9g}"
    return str(value)


def aggregate_path(path):
    root, ext = os.path.splitext(os.fspath(path))
    return f"{root}_aggregate{ext or '.csv'}"


def _open_csv(path):
    directory = os.path.dirname(os.fspath(path))
    if directory:
        os.makedirs(directory, exist_ok=True)
    return open(path, "w", newline="")


def write_trials_csv(trial_results, path):
    with _open_csv(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRIAL_COLUMNS)
        for r in trial_results:
            writer.writerow([_fmt(v) for v in (
                r.d, r.n, r.s, r.k, r.model, r.trial_index, r.l2_error, r.support_symdiff,
                r.norm_abs_error, r.norm_rel_error, r.branch, r.elapsed,
            )])


def write_aggregate_csv(aggregates, path):
    header = ["d", "n", "s", "k", "model", "trials", "failures"]
    for metric in METRIC_COLUMNS:
        header += [f"{metric}_mean", f"{metric}_median", f"{metric}_std"]
    header.append("exact_support_rate")
    with _open_csv(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for a in aggregates:
            row = [a.d, a.n, a.s, a.k, a.model, a.trials, a.failures]
            for metric in METRIC_COLUMNS:
                st = a.stats.get(metric)
                row += [None] * 3 if st is None else [st["mean"], st["median"], st["std"]]
            row.append(a.exact_support_rate)
            writer.writerow([_fmt(v) for v in row])


# --- verifiers ----------------------------------------------------------

@dataclass
class MeanIdentityReport:
    deviation: float
    tolerance: float
    lam: float
    d: int
    n: int
    passed: bool


@dataclass
class ConcentrationReport:
    z_values: np.ndarray
    max: float
    p95: float
    lam: float
    d: int
    n: int
    c_emp: float = None
    passed: bool = None


def _centered_mean(model, A, x_unit, seed):
    """Return ``(A'^T y / n, x')`` for unit ``x``, in augmented form when dithered."""
    if isinstance(model, Dithered):
        R = model.R
        ms = measure(A, x_unit, model, seed)
        A = augment(A, ms.dither, R)
        x_unit = np.append(x_unit, R) / math.hypot(1.0, R)
    else:
        ms = measure(A, x_unit, model, seed)
    return A.rows.T @ ms.y.astype(np.float64) / A.n, x_unit


def verify_mean_identity(model, d, n, seed, tolerance, x_bar=None):
    """Compare the empirical mean of ``a_i y_i`` with ``lam * x`` in the sup-norm.

    ``x_bar`` defaults to a random unit signal with ``min(d, 10)`` non-zeros.
    """
    if x_bar is None:
        x_bar = generate_signal(d, min(d, 10), derive_seed(seed, "mean-signal")).unit
    else:
        x_bar = np.asarray(x_bar.vec if isinstance(x_bar, SparseSignal) else x_bar, dtype=np.float64)
        x_bar = x_bar / np.linalg.norm(x_bar)
        d = x_bar.size
    lam = lambda_closed_form(model).lam
    A = gaussian_ensemble(n, d, derive_seed(seed, "mean-matrix"))
    mean, target = _centered_mean(model, A, x_bar, derive_seed(seed, "mean-noise"))
    dev = float(np.max(np.abs(mean - lam * target)))
    return MeanIdentityReport(deviation=dev, tolerance=tolerance, lam=lam, d=d, n=n,
                              passed=dev <= tolerance)


def verify_concentration(model, d, n, repetitions, seed, c_emp=None, lam=None, s=10):
    """Distribution of ``Z = ||A^T y / n - lam x||_inf * sqrt(n / ln d)`` over fresh draws.

    Each repetition draws a new signal, matrix and noise. ``lam`` overrides
    the closed-form centering (to demonstrate what a wrong model does).
    The check passes iff the largest ``Z`` is at most ``c_emp``; without a
    ``c_emp`` ``passed`` is left as None.
    """
    if repetitions < 30:
        raise InvalidParameterError(f"need at least 30 repetitions, got {repetitions}")
    centre = lambda_closed_form(model).lam if lam is None else float(lam)
    z_values = np.empty(repetitions)
    for rep in range(repetitions):
        x_unit = generate_signal(d, min(s, d), derive_seed(seed, "conc-signal", rep)).unit
        A = gaussian_ensemble(n, d, derive_seed(seed, "conc-matrix", rep))
        mean, target = _centered_mean(model, A, x_unit, derive_seed(seed, "conc-noise", rep))
        dim = target.size
        z_values[rep] = np.max(np.abs(mean - centre * target)) * math.sqrt(n / math.log(dim))
    zmax = float(z_values.max())
    return ConcentrationReport(
        z_values=z_values, max=zmax, p95=float(np.percentile(z_values, 95)), lam=centre,
        d=d, n=n, c_emp=c_emp, passed=None if c_emp is None else zmax <= c_emp,
    )


def calibrate_c_emp(seed=0, d=500, n=5000, repetitions=200, model=None):
    """Empirical constant: the largest concentration statistic on a reference run."""
    report = verify_concentration(model or NoiselessSign(), d, n, repetitions, seed)
    return report.max, report


_ORACLE_CONSTRAINTS = {
    "unit": (UnitSparse, estimate_direction, 10),
    "nonneg": (NonnegUnitSparse, estimate_nonneg_direction, 10),
    "ternary": (TernarySparse, estimate_ternary, 8),
}


def verify_oracle(instances, seed, variant="unit"):
    """Compare a closed-form estimator with exhaustive enumeration on random instances.

    Instances have ``d`` in ``[3, 10]`` (``[3, 8]`` for ternary), ``n`` in
    ``[2, 20]`` and ``k`` in ``[1, 3]``; labels are noiseless signs of a
    random sparse signal. Returns a list of per-instance dicts with the two
    objective values and whether the supports agree.
    """
    constraint_cls, estimator, d_max = _ORACLE_CONSTRAINTS[variant]
    records = []
    for i in range(instances):
        rng = stream(seed, "oracle", variant, i)
        d = int(rng.integers(3, d_max + 1))
        n = int(rng.integers(2, 21))
        k = int(rng.integers(1, 4))
        A = gaussian_ensemble(n, d, derive_seed(seed, "oracle-matrix", variant, i))
        x = generate_signal(d, int(rng.integers(1, d + 1)), derive_seed(seed, "oracle-signal", variant, i))
        ms = sign_measure(A, x.vec)
        est = estimator(A, ms, k)
        x_hat = est.scaled if variant == "ternary" else est.direction
        value = float(est.score_vector @ x_hat)
        oracle_value, argmax = brute_force_oracle(A, ms, constraint_cls(k))
        records.append({
            "instance": i, "variant": variant, "d": d, "n": n, "k": k,
            "value": value, "oracle_value": oracle_value,
            "abs_diff": abs(value - oracle_value),
            "support_match": bool(np.array_equal(np.flatnonzero(x_hat), np.flatnonzero(argmax))),
        })
    return records

