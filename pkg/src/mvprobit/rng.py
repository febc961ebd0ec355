"""Deterministic, seed-addressable sampling primitives.

All randomness in the package flows through :class:`RngStream`, a thin
wrapper around a counter-based Philox generator keyed by
``(master_seed, stream_id)``.  Streams with the same key replay the same
sequence; streams with different keys are non-overlapping by
construction, so shard chains can run on any machine in any order and
still reproduce bit-identical draws.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import ndtr, ndtri

from .errors import FactorizationError

_U64 = 0xFFFFFFFFFFFFFFFF

# Above this standardized truncation point the survival-form inverse CDF
# is abandoned for an exponential-proposal rejection sampler.
_TAIL_CUTOFF = 8.0


def derive_seed(seed: int, label: str) -> int:
    """Derive a 64-bit sub-seed for an independent usage domain.

    Hashing ``(seed, label)`` keeps e.g. data simulation and chain
    sampling on disjoint streams even when the user supplies a single
    seed for both.
    """
    digest = hashlib.sha256(f"{label}:{seed & _U64}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class RngStream:
    """One exclusively-owned random stream.

    Two streams built from the same ``(master_seed, stream_id)`` produce
    identical sequences; distinct ``stream_id`` values select distinct
    Philox keys and therefore independent streams.
    """

    master_seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        key = np.array(
            [self.master_seed & _U64, self.stream_id & _U64], dtype=np.uint64
        )
        self.generator = np.random.Generator(np.random.Philox(key=key))


def sample_standard_normal(rng: RngStream) -> float:
    """One draw from N(0, 1)."""
    return float(rng.generator.standard_normal())


def _trunc_std_normal_lower(gen: np.random.Generator, lower: np.ndarray) -> np.ndarray:
    """Standard normal draws conditioned strictly above ``lower``, elementwise.

    Easy regime (lower <= 8): inverse CDF applied to the survival scale,
    which stays accurate far beyond the point where the naive
    ``ndtri(ndtr(a) + u*(1 - ndtr(a)))`` form collapses.  Deep tail:
    Robert's exponential-proposal rejection sampler.  Consumption order
    is fixed (one uniform batch, then row-major rejection loops), so
    replay under an identical stream is exact.
    """
    lower = np.asarray(lower, dtype=float)
    out = np.empty_like(lower)
    u = gen.random(size=lower.shape)

    easy = lower <= _TAIL_CUTOFF
    if np.any(easy):
        a = lower[easy]
        # v in (0, 1]: survival fraction; x = -ndtri(v * P(X > a))
        v = 1.0 - u[easy]
        out[easy] = -ndtri(v * ndtr(-a))

    if not np.all(easy):
        flat_out = out.reshape(-1)
        flat_lower = lower.reshape(-1)
        for idx in np.flatnonzero(~easy.reshape(-1)):
            a = flat_lower[idx]
            alpha = 0.5 * (a + math.sqrt(a * a + 4.0))
            while True:
                z = a + gen.standard_exponential() / alpha
                d = z - alpha
                if gen.random() <= math.exp(-0.5 * d * d):
                    flat_out[idx] = z
                    break

    # Guard the strict constraint against inverse-CDF boundary round-off.
    return np.maximum(out, np.nextafter(lower, np.inf))


def truncated_normal_batch(
    rng: RngStream, means: np.ndarray, positive: np.ndarray
) -> np.ndarray:
    """Vectorized N(mean, 1) draws, each restricted to one side of zero.

    ``positive`` selects, per element, whether the draw must be > 0
    (True) or <= 0 (False).
    """
    means = np.asarray(means, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    # value > 0  <=>  std increment t > -mean; value <= 0 mirrors by negation.
    sign = np.where(positive, 1.0, -1.0)
    t = _trunc_std_normal_lower(rng.generator, -sign * means)
    return means + sign * t


def sample_truncated_normal(rng: RngStream, mean: float, side: str) -> float:
    """One draw from N(mean, 1) conditioned on its sign.

    ``side`` is ``"positive"`` (value strictly > 0) or ``"negative"``
    (value <= 0).  Stays correct and non-degenerate for |mean| well past
    30, i.e. far-tail truncation.
    """
    if side not in ("positive", "negative"):
        raise ValueError(f"side must be 'positive' or 'negative', got {side!r}")
    positive = side == "positive"
    draw = truncated_normal_batch(
        rng, np.array([mean]), np.array([positive])
    )
    return float(draw[0])


def cholesky_lower(matrix: np.ndarray, context: str = "") -> np.ndarray:
    """Lower Cholesky factor, or :class:`FactorizationError` naming ``context``."""
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError as exc:
        where = f" in {context}" if context else ""
        raise FactorizationError(
            f"covariance factorization failed{where}: {exc}"
        ) from exc


def sample_mvn(
    rng: RngStream,
    mean: np.ndarray,
    covariance: np.ndarray,
    size: int | None = None,
    context: str = "",
) -> np.ndarray:
    """Draws from N(mean, covariance) via Cholesky factorization.

    Returns a vector for ``size=None``, else a ``(size, dim)`` array.
    The factorization happens once per call regardless of ``size``.
    """
    mean = np.asarray(mean, dtype=float)
    chol = cholesky_lower(np.asarray(covariance, dtype=float), context)
    if size is None:
        z = rng.generator.standard_normal(mean.shape[0])
        return mean + chol @ z
    z = rng.generator.standard_normal((size, mean.shape[0]))
    return mean + z @ chol.T


def mvn_from_precision_chol(
    gen: np.random.Generator, means: np.ndarray, prec_chol: np.ndarray
) -> np.ndarray:
    """Rows of N(mean_i, A^{-1}) given the lower Cholesky factor of A.

    ``means`` is (n, d); one batch of n*d standard normals is consumed.
    Used by the Gibbs updates, where one precision matrix is shared by
    every row of a sweep and is factorized once.
    """
    z = gen.standard_normal(means.shape)
    noise = solve_triangular(prec_chol.T, z.T, lower=False)
    return means + noise.T
