"""One-bit compressed sensing by one-step hard thresholding."""
from .core import (
    SparseSignal,
    hard_threshold,
    normalize,
    rho_sparse_bound,
    top_k_support,
)
from .errors import (
    AssumptionViolationError,
    DegenerateInputError,
    DegenerateScoreError,
    InvalidParameterError,
    OneBitError,
)
from .estimators import (
    EstimateResult,
    NonnegUnitSparse,
    TernarySparse,
    UnitSparse,
    brute_force_oracle,
    estimate_direction,
    estimate_nonneg_direction,
    estimate_ternary,
    estimate_with_norm,
)
from .sensing import (
    Dithered,
    MeasurementSet,
    NoiselessSign,
    SensingMatrix,
    SignFlip,
    augment,
    dithered_measure,
    flip_noise_measure,
    gaussian_ensemble,
    linear_measure,
    sign_measure,
)

__version__ = "0.1.0"
