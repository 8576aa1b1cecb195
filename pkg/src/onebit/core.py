"""Vector primitives: top-k support, hard thresholding and normalization.

Vectors are plain one-dimensional ``float64`` numpy arrays. Index sets are
sorted ``int64`` arrays.
"""
from dataclasses import dataclass, field
import io
import json
import math

import numpy as np

from .errors import DegenerateInputError, InvalidParameterError

__all__ = [
    "as_vector",
    "top_k_support",
    "hard_threshold",
    "normalize",
    "rho_sparse_bound",
    "SparseSignal",
    "vector_to_csv",
    "vector_from_csv",
    "vector_to_json",
    "vector_from_json",
]


def as_vector(z, name="z"):
    """Validate ``z`` as a finite, non-empty 1-D float vector and return a copy."""
    arr = np.array(z, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidParameterError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < 1:
        raise InvalidParameterError(f"{name} must have at least one entry")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError(f"{name} contains NaN or Inf")
    return arr


def _check_k(k, d):
    if isinstance(k, bool) or int(k) != k:
        raise InvalidParameterError(f"k must be an integer, got {k!r}")
    k = int(k)
    if k < 1 or k > d:
        raise InvalidParameterError(f"k must satisfy 1 <= k <= d={d}, got k={k}")
    return k


def top_k_support(z, k):
    """Indices of the ``k`` largest-magnitude entries of ``z``, sorted ascending.

    Equal magnitudes are resolved in favour of the smaller index. When ``z``
    has fewer than ``k`` non-zeros the set is padded with the lowest-index
    zero entries, so the result always has exactly ``k`` elements.

    >>> top_k_support([3.0, -1.0, 2.0], 2)
    array([0, 2])
    """
    z = as_vector(z)
    k = _check_k(k, z.size)
    # stable sort keeps index order among equal keys
    order = np.argsort(-np.abs(z), kind="stable")
    return np.sort(order[:k]).astype(np.int64)


def hard_threshold(z, k):
    """Keep the top-``k`` entries of ``z`` (see :func:`top_k_support`), zero the rest.

    This is the Euclidean projection of ``z`` onto the set of k-sparse vectors.
    """
    z = as_vector(z)
    out = np.zeros_like(z)
    idx = top_k_support(z, k)
    out[idx] = z[idx]
    return out


def normalize(z):
    """Return ``z / ||z||_2``.

    Raises
    ------
    DegenerateInputError
        If ``z`` is the zero vector.
    """
    z = as_vector(z)
    scale = np.max(np.abs(z))
    if scale == 0.0:
        raise DegenerateInputError("cannot normalize the zero vector")
    # pre-scaling keeps tiny and huge inputs away from under/overflow
    z = z / scale
    return z / np.linalg.norm(z)


def rho_sparse_bound(k):
    """Bound ``sqrt(2k)`` on ``||z||_1 / ||z||_2`` over differences of k-sparse vectors."""
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    return math.sqrt(2 * k)


@dataclass(frozen=True)
class SparseSignal:
    """A sparse target signal together with its support.

    ``support`` is recomputed from ``vec`` and ``s`` is checked against it.
    """

    vec: np.ndarray
    s: int = None
    support: np.ndarray = field(default=None)
    seed: int = None

    def __post_init__(self):
        vec = as_vector(self.vec, "vec")
        vec.setflags(write=False)
        support = np.flatnonzero(vec).astype(np.int64)
        support.setflags(write=False)
        s = support.size if self.s is None else int(self.s)
        if s != support.size or s < 1:
            raise InvalidParameterError(
                f"declared sparsity {self.s} disagrees with {support.size} non-zeros"
            )
        if self.support is not None and not np.array_equal(np.asarray(self.support), support):
            raise InvalidParameterError("declared support disagrees with non-zero pattern")
        object.__setattr__(self, "vec", vec)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "support", support)

    @property
    def d(self):
        return self.vec.size

    @property
    def norm(self):
        return float(np.linalg.norm(self.vec))

    @property
    def unit(self):
        """The unit-norm direction ``x / ||x||_2``."""
        return normalize(self.vec)

    @property
    def x_min(self):
        """Smallest non-zero magnitude."""
        return float(np.min(np.abs(self.vec[self.support])))

    def to_dict(self):
        doc = {
            "d": self.d,
            "s": self.s,
            "support": [int(i) for i in self.support],
            "vec": [float(v) for v in self.vec],
        }
        if self.seed is not None:
            doc["seed"] = int(self.seed)
        return doc

    @classmethod
    def from_dict(cls, doc):
        if isinstance(doc, list):
            return cls(np.asarray(doc, dtype=np.float64))
        sig = cls(np.asarray(doc["vec"], dtype=np.float64), s=doc.get("s"),
                  support=doc.get("support"), seed=doc.get("seed"))
        if "d" in doc and doc["d"] != sig.d:
            raise InvalidParameterError(f"declared d={doc['d']} but vector has {sig.d} entries")
        return sig


def vector_to_csv(z):
    """One line, one value per column, 17 significant digits."""
    return ",".join(f"{v:.17g}" for v in as_vector(z)) + "\n"


def vector_from_csv(text):
    rows = [line for line in text.strip().splitlines() if line.strip()]
    if len(rows) != 1:
        raise InvalidParameterError(f"expected a single CSV row, got {len(rows)}")
    return as_vector(np.loadtxt(io.StringIO(rows[0]), delimiter=",", ndmin=1))


def vector_to_json(z):
    # json uses repr(), which round-trips doubles exactly
    return json.dumps([float(v) for v in as_vector(z)])


def vector_from_json(text):
    return as_vector(json.loads(text))
