"""Disjoint data shards and prior-fractionated parallel chains.

A dataset split across S shards keeps the full posterior intact when
every shard chain raises the parameter priors to the power
epsilon_s = n_s / N; the per-shard summaries are then handed to a
combination strategy.  Rows are assigned to shards by a seeded shuffle
(recorded in the plan) but are presented to each chain in ascending
original order, so a one-shard plan reproduces the full-data chain
bit for bit.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import model
from .errors import InvalidParameterError, ShardFailureError
from .model import Dataset, ModelConfig, PosteriorSummary
from .rng import RngStream, derive_seed


@dataclass
class ShardPlan:
    """Disjoint, covering assignment of N rows to S shards."""

    assignments: np.ndarray  # length N, values in {0..S-1}
    shard_sizes: np.ndarray  # length S
    epsilons: np.ndarray  # length S, n_s / N
    seed: int
    mode: str = "by_count"

    def __post_init__(self):
        self.assignments = np.asarray(self.assignments, dtype=np.int64)
        self.shard_sizes = np.asarray(self.shard_sizes, dtype=np.int64)
        self.epsilons = np.asarray(self.epsilons, dtype=float)

    @property
    def n(self) -> int:
        return self.assignments.shape[0]

    @property
    def n_shards(self) -> int:
        return self.shard_sizes.shape[0]

    def rows_for(self, shard_id: int) -> np.ndarray:
        """Row indices of one shard, in ascending original order."""
        return np.flatnonzero(self.assignments == shard_id)


@dataclass
class ShardResult:
    shard_id: int
    epsilon: float
    summary: PosteriorSummary
    wall_time: float
    n_kept: int


def make_shard_plan(n: int, s: int, mode: str = "by_count", seed: int = 0) -> ShardPlan:
    """Uniformly random balanced partition of n rows.

    ``by_count`` makes s shards with sizes differing by at most one;
    ``by_size`` reinterprets s as a target shard size and makes
    ceil(n / s) balanced shards (the fixed-shard-size scaling design).
    """
    if mode not in ("by_count", "by_size"):
        raise InvalidParameterError(f"unknown shard mode {mode!r}")
    if mode == "by_count":
        n_shards = s
        if not 1 <= n_shards <= n:
            raise InvalidParameterError(
                f"shard count must lie in [1, {n}], got {s}"
            )
    else:
        if not 1 <= s <= n:
            raise InvalidParameterError(
                f"shard size must lie in [1, {n}], got {s}"
            )
        n_shards = -(-n // s)

    base, extra = divmod(n, n_shards)
    sizes = np.full(n_shards, base, dtype=np.int64)
    sizes[:extra] += 1

    perm = RngStream(derive_seed(seed, "shard-plan"), 0).generator.permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    start = 0
    for shard_id, size in enumerate(sizes):
        assignments[perm[start : start + size]] = shard_id
        start += size

    return ShardPlan(
        assignments=assignments,
        shard_sizes=sizes,
        epsilons=sizes / float(n),
        seed=seed,
        mode=mode,
    )


def _fit_shard(
    data: Dataset,
    plan: ShardPlan,
    config: ModelConfig,
    shard_id: int,
    keep_draws: bool,
) -> ShardResult:
    rows = plan.rows_for(shard_id)
    shard_data = data.subset(rows)
    epsilon = float(plan.epsilons[shard_id])
    started = time.perf_counter()
    summary = model.run_chain(
        shard_data, config, epsilon=epsilon, stream_id=shard_id, keep_draws=keep_draws
    )
    return ShardResult(
        shard_id=shard_id,
        epsilon=epsilon,
        summary=summary,
        wall_time=time.perf_counter() - started,
        n_kept=summary.n_kept,
    )


def run_sharded(
    data: Dataset,
    plan: ShardPlan,
    config: ModelConfig,
    parallelism: int = 1,
    keep_draws: bool = False,
) -> list[ShardResult]:
    """Fit every shard chain and gather results ordered by shard id.

    Chains are the unit of parallel work (worker processes, so chains
    scale past the interpreter lock); each owns its data slice and RNG
    stream (keyed by shard id), so results are independent of the
    scheduling and of ``parallelism``.  If any shard fails the remaining
    shards still complete, then the run fails as a whole.
    """
    if plan.n != data.n:
        raise InvalidParameterError(
            f"plan covers {plan.n} rows but dataset has {data.n}"
        )
    if parallelism < 1:
        raise InvalidParameterError("parallelism must be >= 1")

    shard_ids = range(plan.n_shards)
    results: dict[int, ShardResult] = {}
    failures: dict[int, Exception] = {}

    if parallelism == 1:
        for s in shard_ids:
            try:
                results[s] = _fit_shard(data, plan, config, s, keep_draws)
            except Exception as exc:  # noqa: BLE001 - reported below
                failures[s] = exc
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            futures = {
                s: pool.submit(_fit_shard, data, plan, config, s, keep_draws)
                for s in shard_ids
            }
            for s, fut in futures.items():
                try:
                    results[s] = fut.result()
                except Exception as exc:  # noqa: BLE001
                    failures[s] = exc

    if failures:
        detail = "; ".join(f"shard {s}: {exc}" for s, exc in sorted(failures.items()))
        raise ShardFailureError(
            f"{len(failures)} of {plan.n_shards} shard chains failed: {detail}",
            shard_ids=sorted(failures),
        )
    return [results[s] for s in shard_ids]
