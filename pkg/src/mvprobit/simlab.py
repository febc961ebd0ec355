"""Synthetic data generation, evaluation metrics, and analysis utilities.

The generator draws model parameters and data from the same hierarchy
the sampler targets, records the identified-scale ground truth, and the
metric functions score point estimates and credible intervals against
that truth:

* MSE  - mean squared error over coefficient cells and replicates,
* COV  - fraction of 95% intervals covering the true coefficient,
* MAE  - mean absolute error over strict upper-triangular correlations.

Also here: correlation-distance clustering (distance 1 - r) and the
CI-excludes-zero predictor screen, both emitting plot-ready text.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.cluster.hierarchy import linkage as scipy_linkage

from . import sharding
from .combine import (
    CombinedPosterior,
    cmc_combine,
    coefficient_matrices,
    correlation_point_matrix,
    extract_point_estimates,
    pie_combine,
)
from .errors import (
    InvalidParameterError,
    MalformedIntervalError,
    UnknownPredictorError,
)
from .model import Dataset, ModelConfig, PosteriorSummary
from .rng import RngStream, derive_seed
from .sharding import make_shard_plan


@dataclass(frozen=True)
class SimConfig:
    """Shape and seed of one synthetic dataset."""

    n: int
    m: int
    p: int
    true_factors: int
    include_intercept: bool = True
    seed: int = 0
    replicate_id: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < 2 or self.p < 1 or self.true_factors < 1:
            raise InvalidParameterError(
                "need n >= 1, m >= 2, p >= 1, true_factors >= 1"
            )


@dataclass
class SimTruth:
    """Generating parameters of a synthetic dataset, identified scale."""

    B_true: np.ndarray  # M x P, rescaled coefficients
    R_true: np.ndarray  # M x M correlation matrix
    unidentified_B: np.ndarray | None = None
    unidentified_Theta: np.ndarray | None = None


@dataclass
class MetricReport:
    mse: float
    coverage: float
    mae: float
    mean_ci_width: float
    n_replicates: int
    mse_se: float = math.nan
    coverage_se: float = math.nan
    mae_se: float = math.nan
    ci_width_se: float = math.nan


def truth_from_params(b: np.ndarray, theta: np.ndarray) -> SimTruth:
    diag = 1.0 + np.sum(theta * theta, axis=1)
    inv_root = 1.0 / np.sqrt(diag)
    sigma = theta @ theta.T + np.eye(theta.shape[0])
    corr = sigma * np.outer(inv_root, inv_root)
    np.fill_diagonal(corr, 1.0)
    return SimTruth(
        B_true=b * inv_root[:, None],
        R_true=corr,
        unidentified_B=b,
        unidentified_Theta=theta,
    )


def responses_from_params(
    x: np.ndarray, b: np.ndarray, theta: np.ndarray, rng: RngStream
) -> np.ndarray:
    """Draw the latent stage (scores + noise) once and threshold."""
    g = rng.generator
    n = x.shape[0]
    k = theta.shape[1]
    psi = g.standard_normal((n, k))
    z = x @ b.T + psi @ theta.T + g.standard_normal((n, theta.shape[0]))
    return (z > 0).astype(np.int8)


def simulate_dataset(config: SimConfig) -> tuple[Dataset, SimTruth]:
    """Simulate one dataset from the generating hierarchy.

    Coefficient, loading, and predictor entries are i.i.d. standard
    normal; with ``include_intercept`` the first predictor column is all
    ones (its coefficients are still drawn).  The stream is keyed by
    ``(seed, replicate_id)`` on a domain separate from chain sampling.
    """
    rng = RngStream(derive_seed(config.seed, "simulate"), config.replicate_id)
    g = rng.generator
    n, m, p, l = config.n, config.m, config.p, config.true_factors

    b = g.standard_normal((m, p))
    theta = g.standard_normal((m, l))
    if config.include_intercept:
        x = np.ones((n, p))
        if p > 1:
            x[:, 1:] = g.standard_normal((n, p - 1))
        predictor_names = ["intercept"] + [f"x{j}" for j in range(1, p)]
    else:
        x = g.standard_normal((n, p))
        predictor_names = [f"x{j}" for j in range(1, p + 1)]

    y = responses_from_params(x, b, theta, rng)
    data = Dataset(
        y, x,
        response_names=[f"y{i}" for i in range(1, m + 1)],
        predictor_names=predictor_names,
    )
    return data, truth_from_params(b, theta)


def compute_mse(
    estimates: list[np.ndarray], truths: list[SimTruth]
) -> float:
    """Mean squared coefficient error over replicates and cells."""
    if len(estimates) != len(truths) or not estimates:
        raise InvalidParameterError("estimates and truths must align, one per replicate")
    total = 0.0
    cells = 0
    for est, truth in zip(estimates, truths):
        est = np.asarray(est, dtype=float)
        if est.shape != truth.B_true.shape:
            raise InvalidParameterError(
                f"estimate shape {est.shape} != truth shape {truth.B_true.shape}"
            )
        diff = truth.B_true - est
        total += float(np.sum(diff * diff))
        cells += diff.size
    return total / cells


def compute_coverage(
    intervals: list[tuple[np.ndarray, np.ndarray]], truths: list[SimTruth]
) -> float:
    """Fraction of coefficient cells whose closed interval covers the truth."""
    if len(intervals) != len(truths) or not intervals:
        raise InvalidParameterError("intervals and truths must align, one per replicate")
    hits = 0
    cells = 0
    for (lower, upper), truth in zip(intervals, truths):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if lower.shape != truth.B_true.shape or upper.shape != truth.B_true.shape:
            raise InvalidParameterError("interval shapes must match the truth")
        if np.any(lower > upper):
            raise MalformedIntervalError("interval with lower bound above upper bound")
        hits += int(np.sum((lower <= truth.B_true) & (truth.B_true <= upper)))
        cells += lower.size
    return hits / cells


def compute_mae(
    estimates: list[np.ndarray], truths: list[SimTruth]
) -> float:
    """Mean absolute error over strict upper-triangular correlations."""
    if len(estimates) != len(truths) or not estimates:
        raise InvalidParameterError("estimates and truths must align, one per replicate")
    total = 0.0
    cells = 0
    for est, truth in zip(estimates, truths):
        est = np.asarray(est, dtype=float)
        if est.shape != truth.R_true.shape:
            raise InvalidParameterError(
                f"estimate shape {est.shape} != truth shape {truth.R_true.shape}"
            )
        iu = np.triu_indices(est.shape[0], k=1)
        total += float(np.sum(np.abs(truth.R_true[iu] - est[iu])))
        cells += len(iu[0])
    return total / cells


@dataclass
class Dendrogram:
    """Agglomerative merge tree over response labels.

    ``merges`` follows the scipy convention: row k joins nodes
    merges[k, 0] and merges[k, 1] (ids < n_leaves are leaves, id
    n_leaves + k is the cluster made at step k) at height heights[k].
    """

    labels: list[str]
    merges: np.ndarray  # (n_leaves - 1) x 2, int
    heights: np.ndarray  # n_leaves - 1
    sizes: np.ndarray  # cluster sizes after each merge

    def member_sets(self) -> list[set[int]]:
        """Leaf membership of the cluster formed at each merge step."""
        n = len(self.labels)
        clusters: dict[int, set[int]] = {i: {i} for i in range(n)}
        out = []
        for k, (a, b) in enumerate(self.merges):
            merged = clusters[int(a)] | clusters[int(b)]
            clusters[n + k] = merged
            out.append(merged)
        return out

    def to_text(self) -> str:
        """Plot-ready merge table: step, joined nodes, height, members."""
        lines = ["step\tleft\tright\theight\tsize\tmembers"]
        n = len(self.labels)
        members = self.member_sets()
        for k in range(len(self.heights)):
            names = ",".join(sorted(self.labels[i] for i in members[k]))
            lines.append(
                f"{k}\t{int(self.merges[k, 0])}\t{int(self.merges[k, 1])}"
                f"\t{self.heights[k]:.6g}\t{int(self.sizes[k])}\t{names}"
            )
        return "\n".join(lines)


def correlation_distance_clustering(
    r_hat: np.ndarray, labels: list[str] | None = None, linkage: str = "average"
) -> Dendrogram:
    """Agglomerative clustering of responses at distance 1 - correlation."""
    r_hat = np.asarray(r_hat, dtype=float)
    m = r_hat.shape[0]
    if r_hat.shape != (m, m) or not np.allclose(r_hat, r_hat.T, atol=1e-10):
        raise InvalidParameterError("correlation matrix must be square and symmetric")
    if not np.allclose(np.diag(r_hat), 1.0):
        raise InvalidParameterError("correlation matrix must have a unit diagonal")
    if linkage not in ("average", "complete"):
        raise InvalidParameterError(f"unsupported linkage {linkage!r}")
    if labels is None:
        labels = [f"y{i}" for i in range(1, m + 1)]
    if len(labels) != m:
        raise InvalidParameterError("label count must match matrix dimension")

    iu = np.triu_indices(m, k=1)
    condensed = 1.0 - r_hat[iu]
    merge_info = scipy_linkage(condensed, method=linkage)
    return Dendrogram(
        labels=list(labels),
        merges=merge_info[:, :2].astype(int),
        heights=merge_info[:, 2].copy(),
        sizes=merge_info[:, 3].astype(int),
    )


@dataclass
class ScreenRow:
    response: str
    median: float
    lower: float
    upper: float
    excludes_zero: bool


def significance_screen(
    combined: CombinedPosterior | PosteriorSummary, predictor: str
) -> list[ScreenRow]:
    """Per-response 95% interval for one predictor's coefficient.

    ``excludes_zero`` flags intervals entirely above or below zero.  The
    predictor may be given by name (when the summary carries predictor
    names) or as a 1-based column index.
    """
    names = combined.predictor_names
    if names and predictor in names:
        col = names.index(predictor) + 1
    else:
        try:
            col = int(predictor)
        except (TypeError, ValueError):
            known = ", ".join(names) if names else "none recorded"
            raise UnknownPredictorError(
                f"unknown predictor {predictor!r}; known predictors: {known}"
            ) from None

    estimates = extract_point_estimates(combined)
    prefix = "b["
    m = 0
    for name in combined.parameter_names:
        if name.startswith(prefix):
            row = int(name[2:-1].split(",")[0])
            m = max(m, row)
    if m == 0:
        raise InvalidParameterError("summary contains no coefficient parameters")

    key = f"b[1,{col}]"
    if key not in estimates:
        raise UnknownPredictorError(f"predictor column {col} out of range")

    rows = []
    responses = combined.response_names or [f"y{i}" for i in range(1, m + 1)]
    for i in range(1, m + 1):
        med, lo, hi = estimates[f"b[{i},{col}]"]
        rows.append(
            ScreenRow(
                response=responses[i - 1],
                median=med,
                lower=lo,
                upper=hi,
                excludes_zero=bool(lo > 0.0 or hi < 0.0),
            )
        )
    return rows


def format_screen(rows: list[ScreenRow]) -> str:
    lines = ["response\tmedian\tlower\tupper\texcludes_zero"]
    for r in rows:
        lines.append(
            f"{r.response}\t{r.median:.6g}\t{r.lower:.6g}\t{r.upper:.6g}"
            f"\t{int(r.excludes_zero)}"
        )
    return "\n".join(lines)


@dataclass(frozen=True)
class GridCell:
    """One benchmark condition: data size, sharding, and combiner."""

    n: int
    combiner: str  # "cmc" or "pie"
    shard_size: int | None = None
    n_shards: int | None = None

    def __post_init__(self):
        if self.combiner not in ("cmc", "pie"):
            raise InvalidParameterError(f"unknown combiner {self.combiner!r}")
        if (self.shard_size is None) == (self.n_shards is None):
            raise InvalidParameterError(
                "give exactly one of shard_size or n_shards"
            )

    @property
    def shard_key(self) -> tuple:
        return (self.n, self.shard_size, self.n_shards)


@dataclass
class BenchmarkRow:
    cell: GridCell
    report: MetricReport
    per_replicate: dict[str, np.ndarray] = field(default_factory=dict)


def _mean_se(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 1:
        return float(arr[0]), math.nan
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def run_benchmark(
    grid: list[GridCell],
    base: ModelConfig,
    sim: SimConfig,
    n_replicates: int = 10,
    parallelism: int = 1,
) -> list[BenchmarkRow]:
    """Simulate, shard, fit, combine, and score every grid cell.

    Datasets are cached per (n, replicate) and shard fits per
    (n, sharding, replicate); cells differing only in combiner reuse the
    same fits.  Each replicate gets its own derived chain seed so chains
    never share streams across replicates.
    """
    datasets: dict[tuple, tuple[Dataset, SimTruth]] = {}
    fits: dict[tuple, list] = {}
    rows = []

    need_draws = {
        cell.shard_key
        for cell in grid
        if cell.combiner == "cmc"
    }

    for cell in grid:
        per = {"mse": [], "coverage": [], "mae": [], "ci_width": []}
        for d in range(n_replicates):
            data_key = (cell.n, d)
            if data_key not in datasets:
                datasets[data_key] = simulate_dataset(
                    replace(sim, n=cell.n, replicate_id=d)
                )
            data, truth = datasets[data_key]

            fit_key = (*cell.shard_key, d)
            if fit_key not in fits:
                if cell.shard_size is not None:
                    plan = make_shard_plan(
                        cell.n, cell.shard_size, "by_size",
                        seed=derive_seed(sim.seed, f"plan-{d}"),
                    )
                else:
                    plan = make_shard_plan(
                        cell.n, cell.n_shards, "by_count",
                        seed=derive_seed(sim.seed, f"plan-{d}"),
                    )
                config = replace(base, seed=derive_seed(base.seed, f"replicate-{d}"))
                fits[fit_key] = sharding.run_sharded(
                    data, plan, config,
                    parallelism=parallelism,
                    keep_draws=cell.shard_key in need_draws,
                )
            results = fits[fit_key]

            combined = (
                cmc_combine(results) if cell.combiner == "cmc" else pie_combine(results)
            )
            est = extract_point_estimates(combined)
            med, lo, hi = coefficient_matrices(est, data.m, data.p)
            r_med, _ = correlation_point_matrix(est, data.m)
            per["mse"].append(compute_mse([med], [truth]))
            per["coverage"].append(compute_coverage([(lo, hi)], [truth]))
            per["mae"].append(compute_mae([r_med], [truth]))
            per["ci_width"].append(float(np.mean(hi - lo)))

        mse, mse_se = _mean_se(per["mse"])
        cov, cov_se = _mean_se(per["coverage"])
        mae, mae_se = _mean_se(per["mae"])
        width, width_se = _mean_se(per["ci_width"])
        rows.append(
            BenchmarkRow(
                cell=cell,
                report=MetricReport(
                    mse=mse,
                    coverage=cov,
                    mae=mae,
                    mean_ci_width=width,
                    n_replicates=n_replicates,
                    mse_se=mse_se,
                    coverage_se=cov_se,
                    mae_se=mae_se,
                    ci_width_se=width_se,
                ),
                per_replicate={k: np.asarray(v) for k, v in per.items()},
            )
        )
    return rows


def format_benchmark(rows: list[BenchmarkRow]) -> str:
    lines = [
        "n\tsharding\tcombiner\tmse\tmse_se\tcoverage\tcoverage_se"
        "\tmae\tmae_se\tci_width\tci_width_se\treplicates"
    ]
    for row in rows:
        cell = row.cell
        sharding_desc = (
            f"size={cell.shard_size}" if cell.shard_size is not None
            else f"shards={cell.n_shards}"
        )
        r = row.report
        lines.append(
            f"{cell.n}\t{sharding_desc}\t{cell.combiner}"
            f"\t{r.mse:.6g}\t{r.mse_se:.3g}"
            f"\t{r.coverage:.6g}\t{r.coverage_se:.3g}"
            f"\t{r.mae:.6g}\t{r.mae_se:.3g}"
            f"\t{r.mean_ci_width:.6g}\t{r.ci_width_se:.3g}"
            f"\t{r.n_replicates}"
        )
    return "\n".join(lines)
