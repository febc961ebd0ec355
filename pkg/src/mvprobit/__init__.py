"""Divide-and-conquer MCMC for the latent-factor multivariate probit model.

Workflow: simulate or load a binary-response dataset, split it into
disjoint shards, run one prior-fractionated Gibbs chain per shard (in
parallel, reproducibly), then combine the per-shard posteriors with
consensus Monte Carlo or posterior interval estimation.
"""

from .combine import (
    CombinedPosterior,
    cmc_combine,
    coefficient_matrices,
    correlation_point_matrix,
    extract_point_estimates,
    pie_combine,
)
from .model import (
    ChainState,
    Dataset,
    IdentifiedDraw,
    ModelConfig,
    PosteriorSummary,
    identify,
    log_joint_density,
    make_parameter_names,
    orthant_probability,
    run_chain,
    update_coefficients,
    update_factors,
    update_latents,
    update_loadings,
)
from .rng import (
    RngStream,
    derive_seed,
    sample_mvn,
    sample_standard_normal,
    sample_truncated_normal,
    truncated_normal_batch,
)
from .sharding import ShardPlan, ShardResult, make_shard_plan, run_sharded
from .simlab import (
    Dendrogram,
    GridCell,
    MetricReport,
    SimConfig,
    SimTruth,
    compute_coverage,
    compute_mae,
    compute_mse,
    correlation_distance_clustering,
    run_benchmark,
    significance_screen,
    simulate_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "ChainState",
    "CombinedPosterior",
    "Dataset",
    "Dendrogram",
    "GridCell",
    "IdentifiedDraw",
    "MetricReport",
    "ModelConfig",
    "PosteriorSummary",
    "RngStream",
    "ShardPlan",
    "ShardResult",
    "SimConfig",
    "SimTruth",
    "cmc_combine",
    "coefficient_matrices",
    "compute_coverage",
    "compute_mae",
    "compute_mse",
    "correlation_distance_clustering",
    "correlation_point_matrix",
    "derive_seed",
    "extract_point_estimates",
    "identify",
    "log_joint_density",
    "make_parameter_names",
    "make_shard_plan",
    "orthant_probability",
    "pie_combine",
    "run_benchmark",
    "run_chain",
    "run_sharded",
    "sample_mvn",
    "sample_standard_normal",
    "sample_truncated_normal",
    "significance_screen",
    "simulate_dataset",
    "truncated_normal_batch",
    "update_coefficients",
    "update_factors",
    "update_latents",
    "update_loadings",
]
