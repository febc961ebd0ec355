"""Exception hierarchy shared across the package.

Every error carries a stable kebab-case ``code`` so the CLI can emit
machine-readable diagnostics without string-matching messages.
"""

from __future__ import annotations


class MvprobitError(Exception):
    """Base class for all package errors."""

    code = "error"


class InvalidParameterError(MvprobitError, ValueError):
    """A configuration or argument value is out of its allowed range."""

    code = "invalid-parameter"


class FactorizationError(MvprobitError):
    """A covariance/precision matrix could not be Cholesky-factorized."""

    code = "factorization-failure"


class NonFiniteStateError(MvprobitError):
    """The sampler state contains NaN or infinite entries."""

    code = "non-finite-state"


class UnsupportedDimensionError(MvprobitError):
    code = "unsupported-dimension"


class ShardFailureError(MvprobitError):
    """One or more shard chains failed; the run is aborted as a whole."""

    code = "shard-failure"

    def __init__(self, message: str, shard_ids: list[int] | None = None):
        super().__init__(message)
        self.shard_ids = shard_ids or []


class MethodRequiresDrawsError(MvprobitError):
    """CMC combination was requested on summaries without raw draws."""

    code = "method-requires-draws"


class DegenerateVarianceError(MvprobitError):
    """A shard has zero sample variance for some parameter."""

    code = "degenerate-variance"


class ConfigurationError(MvprobitError):
    """Mismatched grids, parameter orderings, or missing quantile levels."""

    code = "configuration-error"


class MalformedIntervalError(MvprobitError):
    code = "malformed-interval"


class UnknownPredictorError(MvprobitError):
    code = "unknown-predictor"


class DatasetFormatError(MvprobitError):
    """A dataset file failed validation (bad cell, missing value, header)."""

    code = "dataset-format"


class EmptyInputError(MvprobitError):
    code = "empty-input"


class FileFormatError(MvprobitError):
    """A persisted file has an unknown version or a corrupt structure."""

    code = "file-format"


class TruncatedFileError(MvprobitError):
    code = "truncated-file"


class DigestMismatchError(MvprobitError):
    """A manifest digest no longer matches the file it describes."""

    code = "digest-mismatch"
