"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the CLI can emit
structured error records.  Modules raise these instead of bare ValueError
so callers can distinguish "bad inputs" from "this quantity is not
identified on these data".
"""

from __future__ import annotations


class LateEngineError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"


class ConfigError(LateEngineError):
    """Invalid scenario or run configuration (shares not summing to 1, ...)."""

    code = "config"


class DataError(LateEngineError):
    """Malformed input data (CSV/JSON ingestion failures)."""

    code = "data"


class UnsupportedError(LateEngineError):
    """Operation not defined for this input (non-binary classification,
    scenario outside an operation's stated scope, ...)."""

    code = "unsupported"


class IdentificationError(LateEngineError):
    """The requested causal quantity is not identified on these data
    (zero switching mass, zero complier share, ...)."""

    code = "identification"


class ConditioningError(LateEngineError):
    """A conditional moment was requested on an event with zero mass."""

    code = "conditioning"


class WeakInstrumentError(LateEngineError):
    """First stage (or instrument covariance) is numerically zero."""

    code = "weak_instrument"


class MonotonicityViolationError(IdentificationError):
    """Some units move against the instrument ranking; carries the
    offending instrument pairs."""

    code = "monotonicity"

    def __init__(self, message: str, pairs: list[tuple] | None = None):
        super().__init__(message)
        self.pairs = pairs or []


class EstimationError(LateEngineError):
    """Estimation failed (rank-deficient design, ...); may carry the
    offending cells."""

    code = "estimation"

    def __init__(self, message: str, cells: list | None = None):
        super().__init__(message)
        self.cells = cells or []


class InferenceError(LateEngineError):
    """Resampling-based inference is unreliable (too many failed replicates)."""

    code = "inference"


class OverlapError(LateEngineError):
    """An instrument-assignment probability is outside (0, 1) in some cell."""

    code = "overlap"
