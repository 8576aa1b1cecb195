"""Closed-form maximizers of ``y^T A x`` over sparse constraint sets.

All estimators are one-step: compute the score vector ``v = A^T y`` and
read the optimum off its largest entries. :func:`brute_force_oracle`
solves the same programs by enumerating supports and is meant for tests.
"""
from dataclasses import dataclass, field
from itertools import combinations, product
import json

import numpy as np

from .core import hard_threshold, normalize, top_k_support, _check_k
from .errors import DegenerateScoreError, InvalidParameterError
from .sensing import MeasurementSet, SensingMatrix, augment

__all__ = [
    "T0_ZERO",
    "T0_NONZERO",
    "EstimateResult",
    "UnitSparse",
    "NonnegUnitSparse",
    "TernarySparse",
    "score_vector",
    "estimate_direction",
    "estimate_nonneg_direction",
    "estimate_ternary",
    "estimate_with_norm",
    "brute_force_oracle",
]

T0_ZERO = "T0_ZERO"
T0_NONZERO = "T0_NONZERO"

# enumeration guard for brute_force_oracle
ORACLE_MAX_D = 14
ORACLE_MAX_K = 4


@dataclass
class EstimateResult:
    direction: np.ndarray
    support: np.ndarray
    score_vector: np.ndarray
    k: int
    scaled: np.ndarray = None
    branch: str = None
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        doc = {
            "direction": [float(v) for v in self.direction],
            "support": [int(i) for i in self.support],
            "k": int(self.k),
        }
        if self.scaled is not None:
            doc["scaled"] = [float(v) for v in self.scaled]
        if self.branch is not None:
            doc["branch"] = self.branch
        doc["meta"] = self.meta
        return doc

    def to_json(self):
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class UnitSparse:
    """``{x : ||x||_0 <= k, ||x||_2 = 1}``"""

    k: int


@dataclass(frozen=True)
class NonnegUnitSparse:
    """``{x : ||x||_0 <= k, ||x||_2 = 1, x >= 0}``"""

    k: int


@dataclass(frozen=True)
class TernarySparse:
    """``{x : ||x||_0 <= k, x in {-1, 0, 1}^d}``"""

    k: int


def _labels(y):
    if isinstance(y, MeasurementSet):
        return y.y.astype(np.float64)
    return np.asarray(y, dtype=np.float64)


def score_vector(A, y):
    """``v = A^T y``."""
    rows = A.rows if isinstance(A, SensingMatrix) else np.asarray(A, dtype=np.float64)
    y = _labels(y)
    if rows.ndim != 2 or y.ndim != 1 or y.size != rows.shape[0]:
        raise InvalidParameterError(
            f"{y.size} labels do not match a matrix of shape {rows.shape}"
        )
    return rows.T @ y


def _direction_from_scores(v, k):
    k = _check_k(k, v.size)
    support = top_k_support(v, k)
    h = np.zeros_like(v)
    h[support] = v[support]
    nrm = np.linalg.norm(h)
    if nrm == 0.0:
        raise DegenerateScoreError("the top-k entries of A^T y are all zero")
    return h / nrm, support


def estimate_direction(A, y, k):
    """Global maximizer of ``y^T A x`` over unit-norm k-sparse ``x``.

    The optimum is ``H_k(v) / ||H_k(v)||_2`` with ``v = A^T y``.
    """
    v = score_vector(A, y)
    direction, support = _direction_from_scores(v, k)
    return EstimateResult(direction=direction, support=support, score_vector=v, k=int(k))


def estimate_nonneg_direction(A, y, k):
    """Maximizer over unit-norm, entrywise non-negative k-sparse vectors.

    Uses the positive entries of ``v`` (at most ``k`` of them, largest
    first). If no entry is positive the answer is the basis vector at the
    largest entry of ``v``, lowest index on ties.
    """
    v = score_vector(A, y)
    k = _check_k(k, v.size)
    positive = np.flatnonzero(v > 0)
    if positive.size == 0:
        i = int(np.argmax(v))
        direction = np.zeros_like(v)
        direction[i] = 1.0
        support = np.array([i], dtype=np.int64)
    else:
        if positive.size > k:
            order = np.argsort(-v[positive], kind="stable")
            positive = np.sort(positive[order[:k]])
        direction = np.zeros_like(v)
        direction[positive] = v[positive]
        direction /= np.linalg.norm(direction)
        support = positive.astype(np.int64)
    return EstimateResult(direction=direction, support=support, score_vector=v, k=k)


def estimate_ternary(A, y, k):
    """Maximizer over ``{-1, 0, 1}``-valued k-sparse vectors: ``sign(v_S)`` on ``S = supp(v, k)``.

    ``scaled`` holds the raw ternary vector and ``direction`` its
    normalized copy.
    """
    v = score_vector(A, y)
    k = _check_k(k, v.size)
    support = top_k_support(v, k)
    ternary = np.zeros_like(v)
    ternary[support] = np.sign(v[support])
    if not ternary.any():
        raise DegenerateScoreError("the top-k entries of A^T y are all zero")
    return EstimateResult(
        direction=normalize(ternary),
        support=support,
        score_vector=v,
        k=k,
        scaled=ternary,
    )


def estimate_with_norm(A, y, b, R, k):
    """Direction and magnitude from dithered labels via the augmented program.

    The augmented matrix ``[A, b / R]`` turns the dithered model into a
    noiseless one in ``d + 1`` dimensions. Writing the augmented estimate
    as ``(x0; t0)``, the norm-carrying estimate is ``(R / t0) x0`` when
    ``t0 != 0`` and ``R x0 / ||x0||_2`` otherwise.
    """
    if k < 2:
        raise InvalidParameterError(f"norm estimation needs k >= 2, got k={k}")
    A_aug = augment(A, b, R)
    aug = estimate_direction(A_aug, y, k)
    d = A_aug.d - 1
    x0 = aug.direction[:d]
    t0 = float(aug.direction[d])
    if not x0.any():
        raise DegenerateScoreError("augmented estimate puts all its mass on the dither coordinate")
    if t0 != 0.0:
        scaled = (R / t0) * x0
        branch = T0_NONZERO
    else:
        scaled = R * normalize(x0)
        branch = T0_ZERO
    support = aug.support[aug.support < d]
    return EstimateResult(
        direction=normalize(x0),
        support=support,
        score_vector=aug.score_vector,
        k=int(k),
        scaled=scaled,
        branch=branch,
        meta={"t0": t0, "abs_t0": abs(t0), "R": float(R)},
    )


def brute_force_oracle(A, y, constraint):
    """Maximize ``y^T A x`` over ``constraint`` by enumerating every support.

    Returns ``(value, argmax)``. For each support ``S`` of size at most
    ``k``:

    * unit-sparse: by Cauchy--Schwarz the best unit vector on ``S`` is
      ``v_S / ||v_S||`` with value ``||v_S||``;
    * non-negative: stationary candidates are ``v_S / ||v_S||`` when
      ``v_S > 0`` entrywise, plus every basis vector;
    * ternary: every sign pattern on ``S`` is evaluated.

    Supports are visited largest first and a candidate replaces the
    incumbent only if strictly better.
    """
    v = score_vector(A, y)
    d = v.size
    k = int(constraint.k)
    if d > ORACLE_MAX_D or k > ORACLE_MAX_K:
        raise InvalidParameterError(
            f"enumeration guard: need d <= {ORACLE_MAX_D} and k <= {ORACLE_MAX_K}, got d={d}, k={k}"
        )
    k = _check_k(k, d)
    best_val = -np.inf
    best_x = None

    def offer(x):
        nonlocal best_val, best_x
        val = float(v @ x)
        if val > best_val:
            best_val, best_x = val, x

    for size in range(k, 0, -1):
        for S in combinations(range(d), size):
            S = list(S)
            vs = v[S]
            if isinstance(constraint, UnitSparse):
                x = np.zeros(d)
                nrm = np.linalg.norm(vs)
                if nrm > 0:
                    x[S] = vs / nrm
                else:
                    x[S[0]] = 1.0
                offer(x)
            elif isinstance(constraint, NonnegUnitSparse):
                if np.all(vs > 0):
                    x = np.zeros(d)
                    x[S] = vs / np.linalg.norm(vs)
                    offer(x)
                if size == 1:
                    x = np.zeros(d)
                    x[S[0]] = 1.0
                    offer(x)
            elif isinstance(constraint, TernarySparse):
                for signs in product((1.0, -1.0), repeat=size):
                    x = np.zeros(d)
                    x[S] = signs
                    offer(x)
            else:
                raise InvalidParameterError(f"unknown constraint {constraint!r}")
    return best_val, best_x
