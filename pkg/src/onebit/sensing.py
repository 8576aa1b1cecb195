"""Gaussian sensing ensembles and sign-quantized measurement models.

Three observation models are provided:

* :class:`NoiselessSign` -- ``y_i = sign(<a_i, x>)``
* :class:`SignFlip` -- the noiseless label flipped independently with
  probability ``p_i``
* :class:`Dithered` -- ``y_i = sign(<a_i, x> + b_i)`` with known dither
  ``b_i ~ N(0, R^2)``

``sign(0)`` is taken to be ``+1`` throughout.
"""
from dataclasses import dataclass, field
import json
import math
import os

import numpy as np

from .core import as_vector
from .errors import InvalidParameterError
from .rng import stream

__all__ = [
    "SensingMatrix",
    "MeasurementModel",
    "NoiselessSign",
    "SignFlip",
    "Dithered",
    "MeasurementSet",
    "sign",
    "gaussian_ensemble",
    "linear_measure",
    "sign_measure",
    "flip_noise_measure",
    "dithered_measure",
    "measure",
    "augment",
    "model_from_dict",
    "save_matrix",
    "load_matrix",
    "save_measurements",
    "load_measurements",
]

# above this many entries a matrix is stored by provenance only
MAX_STORED_ENTRIES = 10**7


def sign(z):
    """Entrywise sign with ``sign(0) = +1``, as ``int8``."""
    return np.where(np.asarray(z) >= 0, 1, -1).astype(np.int8)


@dataclass(frozen=True)
class SensingMatrix:
    """An ``n x d`` sensing matrix whose rows are the sensing vectors ``a_i``."""

    rows: np.ndarray
    seed: int = None

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
            raise InvalidParameterError(f"matrix must be 2-D and non-empty, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise InvalidParameterError("matrix contains NaN or Inf")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def n(self):
        return self.rows.shape[0]

    @property
    def d(self):
        return self.rows.shape[1]

    def __array__(self, dtype=None, copy=None):
        return self.rows if dtype is None else self.rows.astype(dtype)


def _matrix(A):
    return A if isinstance(A, SensingMatrix) else SensingMatrix(A)


class MeasurementModel:
    """Base class for observation models.

    Subclasses implement :meth:`respond`, mapping the clean linear
    measurements ``<a_i, x>`` to labels. This is the extension point for
    other response functions.
    """

    name = "abstract"
    uses_dither = False

    def respond(self, z, seed):
        """Return ``(y, dither)`` for linear measurements ``z``."""
        raise NotImplementedError

    def validate(self, n):
        pass

    def to_dict(self):
        raise NotImplementedError

    def label(self):
        return self.name


@dataclass(frozen=True)
class NoiselessSign(MeasurementModel):
    name = "sign"

    def respond(self, z, seed):
        return sign(z), None

    def to_dict(self):
        return {"type": "sign"}


@dataclass(frozen=True)
class SignFlip(MeasurementModel):
    """Random sign flips with probability ``p`` (scalar or one per measurement)."""

    p: object = 0.0
    name = "flip"

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim > 1:
            raise InvalidParameterError("p must be a scalar or a vector")
        if not np.all(np.isfinite(p)) or np.any(p < 0.0) or np.any(p >= 0.5):
            raise InvalidParameterError(f"flip probabilities must lie in [0, 0.5), got {self.p!r}")
        object.__setattr__(self, "p", float(p) if p.ndim == 0 else tuple(float(v) for v in p))

    def probabilities(self, n):
        if isinstance(self.p, tuple):
            if len(self.p) != n:
                raise InvalidParameterError(f"p has {len(self.p)} entries but n={n}")
            return np.array(self.p)
        return np.full(n, self.p)

    @property
    def mean_p(self):
        return float(np.mean(self.p))

    def validate(self, n):
        self.probabilities(n)

    def respond(self, z, seed):
        z = np.asarray(z)
        p = self.probabilities(z.size)
        flips = stream(seed, "flip").random(z.size) < p
        return np.where(flips, -sign(z), sign(z)).astype(np.int8), None

    def to_dict(self):
        return {"type": "flip", "p": list(self.p) if isinstance(self.p, tuple) else self.p}

    def label(self):
        if isinstance(self.p, tuple):
            return f"flip(pbar={self.mean_p:.6g})"
        return f"flip(p={self.p:.6g})"


@dataclass(frozen=True)
class Dithered(MeasurementModel):
    """Gaussian dither ``b_i ~ N(0, R^2)`` added before quantization."""

    R: float = 1.0
    name = "dither"
    uses_dither = True

    def __post_init__(self):
        R = float(self.R)
        if not math.isfinite(R) or R <= 0.0:
            raise InvalidParameterError(f"dither scale R must be positive, got {self.R!r}")
        object.__setattr__(self, "R", R)

    def draw_dither(self, n, seed):
        return self.R * stream(seed, "dither").standard_normal(n)

    def respond(self, z, seed):
        z = np.asarray(z)
        b = self.draw_dither(z.size, seed)
        return sign(z + b), b

    def to_dict(self):
        return {"type": "dither", "R": self.R}

    def label(self):
        return f"dither(R={self.R:.6g})"


def model_from_dict(doc):
    """Parse ``"sign"`` / ``{"type": "flip", "p": ...}`` / ``{"type": "dither", "R": ...}``."""
    if isinstance(doc, MeasurementModel):
        return doc
    if isinstance(doc, str):
        doc = {"type": doc}
    if not isinstance(doc, dict) or "type" not in doc:
        raise InvalidParameterError(f"cannot parse measurement model {doc!r}")
    kind = doc["type"]
    extra = set(doc) - {"type", "p", "R"}
    if extra:
        raise InvalidParameterError(f"unknown model fields {sorted(extra)}")
    if kind == "sign":
        return NoiselessSign()
    if kind == "flip":
        if "p" not in doc:
            raise InvalidParameterError("flip model requires p")
        return SignFlip(doc["p"])
    if kind == "dither":
        if "R" not in doc:
            raise InvalidParameterError("dither model requires R")
        return Dithered(doc["R"])
    raise InvalidParameterError(f"unknown measurement model type {kind!r}")


@dataclass(frozen=True)
class MeasurementSet:
    """Binary labels plus the model (and dither, if any) that produced them."""

    y: np.ndarray
    model: MeasurementModel
    dither: np.ndarray = None
    seed: int = None
    d: int = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.ndim != 1 or y.size < 1:
            raise InvalidParameterError("y must be a non-empty vector")
        if not np.all(np.abs(y) == 1):
            raise InvalidParameterError("labels must be +1 or -1")
        y = y.astype(np.int8)
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        if self.model.uses_dither != (self.dither is not None):
            raise InvalidParameterError("dither must be present exactly when the model is dithered")
        if self.dither is not None:
            b = as_vector(self.dither, "dither")
            if b.size != y.size:
                raise InvalidParameterError("dither length differs from number of labels")
            b.setflags(write=False)
            object.__setattr__(self, "dither", b)

    @property
    def n(self):
        return self.y.size

    def to_dict(self):
        doc = {
            "n": self.n,
            "d": self.d,
            "seed": self.seed,
            "model": self.model.to_dict(),
            "y": [int(v) for v in self.y],
        }
        if self.dither is not None:
            doc["dither"] = [float(v) for v in self.dither]
        if self.meta:
            doc["meta"] = self.meta
        return doc

    @classmethod
    def from_dict(cls, doc):
        y = np.asarray(doc["y"])
        if "n" in doc and doc["n"] != y.size:
            raise InvalidParameterError(f"declared n={doc['n']} but {y.size} labels present")
        dither = doc.get("dither")
        return cls(
            y=y,
            model=model_from_dict(doc.get("model", "sign")),
            dither=None if dither is None else np.asarray(dither, dtype=np.float64),
            seed=doc.get("seed"),
            d=doc.get("d"),
            meta=dict(doc.get("meta", {})),
        )


def gaussian_ensemble(n, d, seed):
    """``n x d`` matrix of i.i.d. standard normals from the stream ``(seed, "matrix")``."""
    if n < 1 or d < 1:
        raise InvalidParameterError(f"n and d must be positive, got n={n}, d={d}")
    try:
        rows = stream(seed, "matrix").standard_normal((int(n), int(d)))
    except MemoryError as exc:
        raise MemoryError(f"cannot allocate a {n} x {d} sensing matrix") from exc
    return SensingMatrix(rows, seed=int(seed))


def linear_measure(A, x):
    """The clean measurements ``A x``."""
    A = _matrix(A)
    x = as_vector(x, "x")
    if x.size != A.d:
        raise InvalidParameterError(f"signal has dimension {x.size}, matrix expects {A.d}")
    return A.rows @ x


def measure(A, x, model, seed=None):
    """Draw labels for ``x`` under ``model``; the generic entry point."""
    A = _matrix(A)
    model.validate(A.n)
    z = linear_measure(A, x)
    y, b = model.respond(z, seed)
    meta = {}
    if isinstance(model, Dithered):
        xnorm = float(np.linalg.norm(x))
        if xnorm > model.R:
            meta["warning"] = f"||x||_2 = {xnorm:.6g} exceeds R = {model.R:.6g}"
    return MeasurementSet(y=y, model=model, dither=b, seed=seed, d=A.d, meta=meta)


def sign_measure(A, x):
    """Noiseless 1-bit measurements ``sign(A x)``."""
    return measure(A, x, NoiselessSign())


def flip_noise_measure(A, x, p, seed):
    """Noiseless labels, each flipped with probability ``p_i``."""
    return measure(A, x, SignFlip(p), seed)


def dithered_measure(A, x, R, seed):
    """Labels ``sign(<a_i, x> + b_i)`` with ``b_i ~ N(0, R^2)`` stored in the result.

    ``||x||_2 <= R`` is not enforced; a violation is noted in ``meta["warning"]``.
    """
    return measure(A, x, Dithered(R), seed)


def augment(A, b, R):
    """Append the column ``b / R`` to ``A``, giving an ``n x (d + 1)`` matrix."""
    A = _matrix(A)
    b = as_vector(b, "b")
    if b.size != A.n:
        raise InvalidParameterError(f"dither has {b.size} entries but matrix has {A.n} rows")
    R = float(R)
    if not R > 0.0:
        raise InvalidParameterError(f"R must be positive, got {R}")
    return SensingMatrix(np.hstack([A.rows, (b / R)[:, None]]))


# --- file formats ---------------------------------------------------------

def save_matrix(A, path, sidecar=None):
    """Write ``A`` as JSON provenance plus (when small enough) a row-major CSV sidecar.

    Seeded matrices above ``MAX_STORED_ENTRIES`` entries are stored by
    provenance only. Unseeded matrices are always written out.
    """
    A = _matrix(A)
    doc = {"n": A.n, "d": A.d, "seed": A.seed}
    if A.seed is None or A.n * A.d <= MAX_STORED_ENTRIES:
        if sidecar is None:
            sidecar = os.path.splitext(os.fspath(path))[0] + ".csv"
        np.savetxt(sidecar, A.rows, delimiter=",", fmt="%.17g")
        doc["csv"] = os.path.relpath(sidecar, os.path.dirname(os.path.abspath(path)))
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")
    return doc


def load_matrix(path):
    """Read a matrix written by :func:`save_matrix`.

    Also accepts inline ``"rows"``, or a bare seed, which regenerates the
    Gaussian ensemble.
    """
    with open(path) as fh:
        doc = json.load(fh)
    seed = doc.get("seed")
    if "rows" in doc:
        A = SensingMatrix(np.asarray(doc["rows"], dtype=np.float64), seed=seed)
    elif "csv" in doc:
        csv_path = os.path.join(os.path.dirname(os.path.abspath(path)), doc["csv"])
        A = SensingMatrix(np.loadtxt(csv_path, delimiter=",", ndmin=2), seed=seed)
    elif seed is not None:
        A = gaussian_ensemble(doc["n"], doc["d"], seed)
    else:
        raise InvalidParameterError(f"{path}: matrix has neither data nor a seed")
    if ("n" in doc and doc["n"] != A.n) or ("d" in doc and doc["d"] != A.d):
        raise InvalidParameterError(f"{path}: declared shape disagrees with data")
    return A


def save_measurements(ms, path):
    with open(path, "w") as fh:
        json.dump(ms.to_dict(), fh)
        fh.write("\n")


def load_measurements(path):
    with open(path) as fh:
        return MeasurementSet.from_dict(json.load(fh))
