"""Combine per-shard posterior summaries into one approximate posterior.

Two strategies, both reductions by averaging:

* CMC: per parameter, a precision-weighted average of paired draws
  across shards, with scalar inverse-sample-variance weights (the
  "independent" variant; exact when every subset posterior is Gaussian).
* PIE: level-by-level unweighted averaging of the shard quantile
  tables; needs no raw draws at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateVarianceError,
    MethodRequiresDrawsError,
)
from .model import PosteriorSummary
from .sharding import ShardResult


@dataclass
class CombinedPosterior:
    method: str  # "cmc" or "pie"
    parameter_names: list[str]
    quantile_grid: np.ndarray
    quantiles: np.ndarray  # n_params x n_levels
    n_shards: int
    draws: np.ndarray | None = None  # cmc only
    response_names: list[str] | None = None
    predictor_names: list[str] | None = None


def _summaries(results: list[ShardResult | PosteriorSummary]) -> list[PosteriorSummary]:
    out = []
    for r in results:
        out.append(r.summary if isinstance(r, ShardResult) else r)
    if not out:
        raise ConfigurationError("no shard results to combine")
    return out


def _check_alignment(summaries: list[PosteriorSummary]):
    first = summaries[0]
    for s in summaries[1:]:
        if s.parameter_names != first.parameter_names:
            raise ConfigurationError("shard summaries disagree on parameter ordering")
        if s.quantile_grid.shape != first.quantile_grid.shape or not np.array_equal(
            s.quantile_grid, first.quantile_grid
        ):
            raise ConfigurationError("shard summaries disagree on the quantile grid")


def cmc_combine(results: list[ShardResult | PosteriorSummary]) -> CombinedPosterior:
    """Consensus Monte Carlo: inverse-variance weighted draw averaging.

    Draw t of the combined posterior averages draw t of every shard with
    per-parameter weights 1/var_s(parameter); quantiles are recomputed
    from the combined draws.
    """
    summaries = _summaries(results)
    _check_alignment(summaries)
    first = summaries[0]

    for s in summaries:
        if s.draws is None:
            raise MethodRequiresDrawsError(
                "cmc combination requires raw draws; shard summaries hold only quantiles"
            )
    kept = {s.draws.shape[1] for s in summaries}
    if len(kept) != 1:
        raise ConfigurationError(f"shards disagree on kept draw counts: {sorted(kept)}")

    if len(summaries) == 1:
        only = summaries[0]
        return CombinedPosterior(
            method="cmc",
            parameter_names=list(only.parameter_names),
            quantile_grid=only.quantile_grid.copy(),
            quantiles=only.quantiles.copy(),
            n_shards=1,
            draws=only.draws.copy(),
            response_names=only.response_names,
            predictor_names=only.predictor_names,
        )

    stacked = np.stack([s.draws for s in summaries])  # S x n_params x n_kept
    variances = stacked.var(axis=2, ddof=1)  # S x n_params
    # A constant draw vector means zero variance even when rounding makes
    # the computed variance a subnormal instead of exactly 0.
    degenerate = (variances == 0.0) | (
        stacked.max(axis=2) == stacked.min(axis=2)
    )
    bad = np.argwhere(degenerate)
    if bad.size:
        s, p = bad[0]
        raise DegenerateVarianceError(
            f"zero draw variance for parameter {first.parameter_names[p]!r} "
            f"in shard {s}"
        )
    weights = 1.0 / variances
    combined = np.einsum("sp,spt->pt", weights, stacked) / weights.sum(axis=0)[:, None]
    quantiles = np.quantile(combined, first.quantile_grid, axis=1).T
    return CombinedPosterior(
        method="cmc",
        parameter_names=list(first.parameter_names),
        quantile_grid=first.quantile_grid.copy(),
        quantiles=quantiles,
        n_shards=len(summaries),
        draws=combined,
        response_names=first.response_names,
        predictor_names=first.predictor_names,
    )


def pie_combine(results: list[ShardResult | PosteriorSummary]) -> CombinedPosterior:
    """Posterior interval estimation: average shard quantiles level by level."""
    summaries = _summaries(results)
    _check_alignment(summaries)
    first = summaries[0]
    tables = np.stack([s.quantiles for s in summaries])
    return CombinedPosterior(
        method="pie",
        parameter_names=list(first.parameter_names),
        quantile_grid=first.quantile_grid.copy(),
        quantiles=tables.mean(axis=0),
        n_shards=len(summaries),
        draws=None,
        response_names=first.response_names,
        predictor_names=first.predictor_names,
    )


def extract_point_estimates(
    combined: CombinedPosterior | PosteriorSummary,
) -> dict[str, tuple[float, float, float]]:
    """Per-parameter (median, lower 2.5%, upper 97.5%) read off the table."""
    grid = combined.quantile_grid
    cols = {}
    for level in (0.5, 0.025, 0.975):
        hits = np.flatnonzero(grid == level)
        if hits.size == 0:
            raise ConfigurationError(f"quantile grid lacks level {level}")
        cols[level] = int(hits[0])
    out = {}
    for i, name in enumerate(combined.parameter_names):
        row = combined.quantiles[i]
        out[name] = (
            float(row[cols[0.5]]),
            float(row[cols[0.025]]),
            float(row[cols[0.975]]),
        )
    return out


def coefficient_matrices(
    estimates: dict[str, tuple[float, float, float]], m: int, p: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(median, lower, upper) matrices for the M x P coefficient block."""
    med = np.empty((m, p))
    lo = np.empty((m, p))
    hi = np.empty((m, p))
    for i in range(m):
        for j in range(p):
            med[i, j], lo[i, j], hi[i, j] = estimates[f"b[{i + 1},{j + 1}]"]
    return med, lo, hi


def correlation_point_matrix(
    estimates: dict[str, tuple[float, float, float]], m: int
) -> tuple[np.ndarray, bool]:
    """Elementwise median correlation matrix plus a PSD check flag.

    The raw elementwise table is reported without projection to the
    nearest PSD matrix; the flag records whether it happens to be PSD.
    """
    corr = np.eye(m)
    for i in range(m):
        for j in range(i + 1, m):
            corr[i, j] = corr[j, i] = estimates[f"r[{i + 1},{j + 1}]"][0]
    eigmin = float(np.linalg.eigvalsh(corr)[0])
    return corr, eigmin >= -1e-10
