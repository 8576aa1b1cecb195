"""Correlation parameter, error-bound expressions and the misspecification term.

Logarithms in all bounds are natural. The absolute constant ``C`` defaults
to 1; calibrated values come from :func:`onebit.harness.calibrate_c_emp`.
"""
from dataclasses import asdict, dataclass
import math

import numpy as np

from .core import SparseSignal, as_vector, hard_threshold, rho_sparse_bound
from .errors import AssumptionViolationError, DegenerateInputError, InvalidParameterError
from .rng import stream
from .sensing import Dithered, MeasurementModel, NoiselessSign, SignFlip, model_from_dict, sign

__all__ = [
    "SQRT_2_OVER_PI",
    "ModelTheory",
    "BoundReport",
    "lambda_closed_form",
    "lambda_monte_carlo",
    "error_bound",
    "support_condition",
    "misspec_tail",
]

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class ModelTheory:
    lam: float
    model: MeasurementModel
    per_measurement: tuple = None


@dataclass(frozen=True)
class BoundReport:
    """``bound = (C / lam) * sqrt(k ln d / n)`` with its inputs."""

    bound: float
    lam: float
    k: int
    d: int
    n: int
    C: float = 1.0
    satisfied_condition: bool = None

    def to_dict(self):
        doc = asdict(self)
        if doc["satisfied_condition"] is None:
            del doc["satisfied_condition"]
        return doc


def lambda_closed_form(model):
    """Average correlation ``E[g theta(g)]`` for the shipped models.

    For the dithered model this is the value for the augmented
    ``(d+1)``-dimensional system, which is a noiseless sign model.
    ``model`` may also be a model document as accepted by
    :func:`~onebit.sensing.model_from_dict`; a flip document with some
    ``p >= 0.5`` then raises :class:`AssumptionViolationError`.
    """
    if isinstance(model, (dict, str)):
        doc = {"type": model} if isinstance(model, str) else model
        if doc.get("type") == "flip" and np.any(np.asarray(doc.get("p", 0.0), dtype=float) >= 0.5):
            raise AssumptionViolationError(
                f"flip probability {doc['p']!r} gives a non-positive average correlation"
            )
        model = model_from_dict(model)
    if isinstance(model, (NoiselessSign, Dithered)):
        return ModelTheory(lam=SQRT_2_OVER_PI, model=model)
    if isinstance(model, SignFlip):
        p = np.atleast_1d(np.asarray(model.p, dtype=np.float64))
        per = SQRT_2_OVER_PI * (1.0 - 2.0 * p)
        if np.any(per <= 0.0):
            raise AssumptionViolationError("flip probabilities must stay below 0.5")
        lam = SQRT_2_OVER_PI * (1.0 - 2.0 * float(np.mean(p)))
        per_measurement = tuple(float(v) for v in per) if isinstance(model.p, tuple) else None
        return ModelTheory(lam=lam, model=model, per_measurement=per_measurement)
    raise InvalidParameterError(f"no closed form for model {model!r}")


def lambda_monte_carlo(theta, samples, seed):
    """Estimate ``E[g theta(g)]`` from ``samples`` standard normal draws.

    ``theta`` is either a :class:`MeasurementModel`, in which case labels
    are sampled from it (flips included), or a callable returning the
    conditional mean response ``E[y | g]`` in ``[-1, 1]``.
    """
    if samples < 1000:
        raise InvalidParameterError(f"need at least 1000 samples, got {samples}")
    g = stream(seed, "lambda-g").standard_normal(int(samples))
    if isinstance(theta, Dithered):
        # augmented system: noiseless sign of a standard normal
        response = sign(g)
    elif isinstance(theta, SignFlip):
        response, _ = SignFlip(theta.mean_p).respond(g, seed)
    elif isinstance(theta, MeasurementModel):
        response, _ = theta.respond(g, seed)
    elif callable(theta):
        response = np.broadcast_to(np.asarray(theta(g), dtype=np.float64), g.shape)
        if np.any(np.abs(response) > 1.0):
            raise InvalidParameterError("theta must take values in [-1, 1]")
    else:
        raise InvalidParameterError(f"cannot interpret response model {theta!r}")
    return float(np.mean(g * response))


def _check_bound_args(lam, k, d, n, C):
    if not lam > 0.0:
        raise AssumptionViolationError(f"average correlation must be positive, got {lam}")
    if n < 1 or d < 2 or k < 1 or not C > 0.0:
        raise InvalidParameterError(f"need n >= 1, d >= 2, k >= 1, C > 0; got n={n}, d={d}, k={k}, C={C}")


def _rate(lam, k, d, n, C):
    return (C / lam) * math.sqrt(k * math.log(d) / n)


def error_bound(lam, k, d, n, C=1.0):
    _check_bound_args(lam, k, d, n, C)
    return BoundReport(bound=_rate(lam, k, d, n, C), lam=lam, k=k, d=d, n=n, C=C)


def support_condition(x_min, lam, k, d, n, C=1.0):
    """Check the strict inequality ``x_min > (C / lam) sqrt(k ln d / n)``."""
    _check_bound_args(lam, k, d, n, C)
    if not x_min > 0.0:
        raise InvalidParameterError(f"x_min must be positive, got {x_min}")
    bound = _rate(lam, k, d, n, C)
    return BoundReport(bound=bound, lam=lam, k=k, d=d, n=n, C=C,
                       satisfied_condition=bool(x_min > bound))


def misspec_tail(x_bar, k):
    """Misspecification price for running the estimator with ``k`` below the true sparsity.

    ``x_bar`` is first scaled to unit norm. With ``z = H_k(x) / ||H_k(x)||``
    and ``alpha = ||H_k(x)||``::

        ||z - x||_inf = max((1/alpha - 1) |x|_(1), |x|_(k+1))

    where ``|x|_(j)`` is the j-th largest magnitude.

    Returns ``(inf_term, full_term, z)`` with ``full_term = sqrt(2k) * inf_term``.
    """
    vec = x_bar.vec if isinstance(x_bar, SparseSignal) else as_vector(x_bar, "x_bar")
    nrm = np.linalg.norm(vec)
    if nrm == 0.0:
        raise DegenerateInputError("x_bar must be non-zero")
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    x = vec / nrm
    k_eff = min(int(k), x.size)
    if np.count_nonzero(x) <= k_eff:
        # H_k is the identity here; avoid a rounding-level alpha != 1
        alpha, z = 1.0, x.copy()
    else:
        head = hard_threshold(x, k_eff)
        alpha = float(np.linalg.norm(head))
        z = head / alpha
    mags = np.sort(np.abs(x))[::-1]
    tail = float(mags[k_eff]) if k_eff < x.size else 0.0
    inf_term = max((1.0 / alpha - 1.0) * float(mags[0]), tail)
    return inf_term, rho_sparse_bound(k) * inf_term, z
