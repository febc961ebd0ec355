import numpy as np
import pytest

import mvprobit.model
from mvprobit.errors import InvalidParameterError, ShardFailureError
from mvprobit.model import Dataset, ModelConfig, run_chain
from mvprobit.rng import RngStream
from mvprobit.sharding import make_shard_plan, run_sharded


def bernoulli_dataset(n, m, p, seed=0):
    g = RngStream(seed, 98).generator
    y = (g.random((n, m)) < 0.5).astype(int)
    x = np.hstack([np.ones((n, 1)), g.standard_normal((n, p - 1))]) if p > 1 else np.ones((n, 1))
    return Dataset(y, x)


class TestMakeShardPlan:
    def test_by_count_balanced(self):
        plan = make_shard_plan(10, 3, "by_count", seed=1)
        assert sorted(plan.shard_sizes.tolist(), reverse=True) == [4, 3, 3]
        assert plan.shard_sizes.tolist() == [4, 3, 3]
        assert np.allclose(plan.epsilons, [0.4, 0.3, 0.3])

    def test_by_size_fixed_shard_scaling(self):
        assert make_shard_plan(40_000, 2_000, "by_size", seed=2).n_shards == 20
        assert make_shard_plan(100_000, 5_000, "by_size", seed=2).n_shards == 20
        assert make_shard_plan(40_000, 5_000, "by_size", seed=2).n_shards == 8

    def test_by_size_uneven(self):
        plan = make_shard_plan(10, 4, "by_size", seed=3)
        assert plan.n_shards == 3
        assert plan.shard_sizes.tolist() == [4, 3, 3]

    def test_epsilons_sum_to_one(self):
        plan = make_shard_plan(1234, 7, "by_count", seed=4)
        assert abs(plan.epsilons.sum() - 1.0) < 1e-12

    def test_disjoint_cover_fuzz(self):
        g = np.random.default_rng(5)
        for _ in range(1000):
            n = int(g.integers(1, 400))
            s = int(g.integers(1, n + 1))
            plan = make_shard_plan(n, s, "by_count", seed=int(g.integers(0, 2**31)))
            counts = np.bincount(plan.assignments, minlength=plan.n_shards)
            assert np.array_equal(counts, plan.shard_sizes)
            assert plan.shard_sizes.sum() == n
            assert plan.shard_sizes.max() - plan.shard_sizes.min() <= 1

    def test_deterministic_given_seed(self):
        a = make_shard_plan(500, 7, "by_count", seed=6)
        b = make_shard_plan(500, 7, "by_count", seed=6)
        assert np.array_equal(a.assignments, b.assignments)
        c = make_shard_plan(500, 7, "by_count", seed=7)
        assert not np.array_equal(a.assignments, c.assignments)

    def test_invalid_sizes(self):
        with pytest.raises(InvalidParameterError):
            make_shard_plan(10, 0, "by_count", seed=0)
        with pytest.raises(InvalidParameterError):
            make_shard_plan(10, 11, "by_count", seed=0)
        with pytest.raises(InvalidParameterError):
            make_shard_plan(10, 0, "by_size", seed=0)
        with pytest.raises(InvalidParameterError):
            make_shard_plan(10, 3, "by_rows", seed=0)

    def test_rows_for_ascending(self):
        plan = make_shard_plan(50, 4, "by_count", seed=8)
        for s in range(4):
            rows = plan.rows_for(s)
            assert np.all(np.diff(rows) > 0)


class TestRunSharded:
    def config(self, **kw):
        base = dict(n_factors=1, n_iter=30, burn_in=10, seed=11)
        base.update(kw)
        return ModelConfig(**base)

    def test_single_shard_equals_full_chain(self):
        data = bernoulli_dataset(80, 3, 2, seed=9)
        plan = make_shard_plan(80, 1, "by_count", seed=9)
        cfg = self.config()
        [res] = run_sharded(data, plan, cfg, keep_draws=True)
        direct = run_chain(data, cfg, epsilon=1.0, stream_id=0, keep_draws=True)
        assert res.epsilon == 1.0
        assert np.array_equal(res.summary.quantiles, direct.quantiles)
        assert np.array_equal(res.summary.draws, direct.draws)

    def test_parallelism_invariance(self):
        data = bernoulli_dataset(120, 3, 2, seed=10)
        plan = make_shard_plan(120, 4, "by_count", seed=10)
        cfg = self.config()
        seq = run_sharded(data, plan, cfg, parallelism=1, keep_draws=True)
        par = run_sharded(data, plan, cfg, parallelism=4, keep_draws=True)
        for a, b in zip(seq, par):
            assert a.shard_id == b.shard_id
            assert np.array_equal(a.summary.quantiles, b.summary.quantiles)
            assert np.array_equal(a.summary.draws, b.summary.draws)

    def test_bookkeeping(self):
        data = bernoulli_dataset(4000, 2, 1, seed=12)
        plan = make_shard_plan(4000, 1000, "by_size", seed=12)
        cfg = self.config(n_iter=12, burn_in=2, thin=2)
        results = run_sharded(data, plan, cfg)
        assert len(results) == 4
        for s, res in enumerate(results):
            assert res.shard_id == s
            assert res.n_kept == (12 - 2) // 2
            assert res.epsilon == 0.25

    def test_epsilon_wiring(self):
        # Equal shards: every chain must see epsilon = 1/S so that the
        # prior precision contributions add back to 1/prior_variance.
        data = bernoulli_dataset(100, 2, 1, seed=13)
        plan = make_shard_plan(100, 4, "by_count", seed=13)
        results = run_sharded(data, plan, self.config())
        for res in results:
            assert res.epsilon == 0.25
            assert res.summary.epsilon == 0.25

    def test_plan_dataset_mismatch(self):
        data = bernoulli_dataset(50, 2, 1, seed=14)
        plan = make_shard_plan(49, 2, "by_count", seed=14)
        with pytest.raises(InvalidParameterError):
            run_sharded(data, plan, self.config())

    def test_failure_policy_names_shard(self, monkeypatch):
        data = bernoulli_dataset(60, 2, 1, seed=15)
        plan = make_shard_plan(60, 3, "by_count", seed=15)
        real = mvprobit.model.run_chain
        calls = []

        def flaky(shard_data, config, epsilon=1.0, stream_id=0, keep_draws=False):
            calls.append(stream_id)
            if stream_id == 1:
                raise RuntimeError("boom")
            return real(shard_data, config, epsilon, stream_id, keep_draws)

        monkeypatch.setattr(mvprobit.model, "run_chain", flaky)
        with pytest.raises(ShardFailureError) as err:
            run_sharded(data, plan, self.config())
        assert err.value.shard_ids == [1]
        assert "shard 1" in str(err.value)
        # Remaining shards were still attempted.
        assert sorted(calls) == [0, 1, 2]


class TestFractionationAlgebra:
    def test_precision_contribution(self):
        # For random states the update precision must equal
        # design'design + (epsilon/prior_variance) I exactly.
        from mvprobit.model import gaussian_update_moments

        g = RngStream(16, 0).generator
        design = g.standard_normal((40, 3))
        resid = g.standard_normal((40, 2))
        v = 1e6
        for eps in (0.1, 0.25, 1.0):
            means, chol = gaussian_update_moments(design, resid, eps / v)
            prec = chol @ chol.T
            expected = design.T @ design + (eps / v) * np.eye(3)
            assert np.allclose(prec, expected, rtol=1e-12, atol=1e-12)
            expected_mean = np.linalg.solve(expected, design.T @ resid).T
            assert np.allclose(means, expected_mean, rtol=1e-10, atol=1e-12)

    def test_equal_shards_reassemble_full_prior(self):
        n, s = 1000, 5
        plan = make_shard_plan(n, s, "by_count", seed=17)
        v = 1e6
        total = sum(eps / v for eps in plan.epsilons)
        assert abs(total - 1.0 / v) < 1e-18
