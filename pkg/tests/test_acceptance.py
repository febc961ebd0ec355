"""Acceptance gate: one test per criterion, one printed PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` to stream the lines.
The statistical criteria use fixed seeds, so the whole module is a
deterministic (if slow, ~15 minute) check of the package's contracts.
"""

import math
import time

import numpy as np
import pytest
from scipy.special import ndtr, ndtri
from scipy.stats import kstest

from mvprobit.cli import main as cli_main
from mvprobit.combine import (
    cmc_combine,
    coefficient_matrices,
    correlation_point_matrix,
    extract_point_estimates,
    pie_combine,
)
from mvprobit.model import (
    Dataset,
    ModelConfig,
    PosteriorSummary,
    orthant_probability,
    run_chain,
)
from mvprobit.rng import RngStream, derive_seed, sample_mvn, truncated_normal_batch
from mvprobit.sharding import make_shard_plan, run_sharded
from mvprobit.simlab import (
    GridCell,
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


def report(num: int, name: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    suffix = f"  [{detail}]" if detail else ""
    print(f"\nACCEPTANCE {num:02d} {name}: {status}{suffix}")
    assert ok, f"criterion {num} ({name}) failed: {detail}"


def phi(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# criterion 1: truncated-normal correctness


def test_criterion_01_truncated_normal():
    started = time.perf_counter()
    ok = True
    details = []
    for mu in (-2.0, 0.0, 2.0):
        for side in ("positive", "negative"):
            rng = RngStream(9001, hash((mu, side)) & 0xFFFF)
            n = 100_000
            positive = side == "positive"
            draws = truncated_normal_batch(rng, np.full(n, mu), np.full(n, positive))
            if positive:
                cdf = lambda x, m=mu: (ndtr(x - m) - ndtr(-m)) / ndtr(m)
                target_mean = mu + phi(mu) / ndtr(mu)
                alpha = -mu
                lam = phi(alpha) / (1.0 - ndtr(alpha))
                var = 1.0 - lam * (lam - alpha)
            else:
                cdf = lambda x, m=mu: ndtr(x - m) / ndtr(-m)
                target_mean = mu - phi(mu) / ndtr(-mu)
                alpha = mu  # mirror case
                lam = phi(alpha) / (1.0 - ndtr(alpha))
                var = 1.0 - lam * (lam - alpha)
            pvalue = kstest(draws, cdf).pvalue
            mean_ok = abs(draws.mean() - target_mean) < 3 * math.sqrt(var / n)
            if pvalue <= 0.001 or not mean_ok:
                ok = False
                details.append(f"mu={mu} side={side} p={pvalue:.2g}")
    elapsed = time.perf_counter() - started
    ok = ok and elapsed < 5.0
    report(1, "truncated-normal KS + inverse-Mills means", ok,
           f"{elapsed:.1f}s" + ("; " + "; ".join(details) if details else ""))


# ---------------------------------------------------------------------------
# criterion 2: orthant oracle closed forms


def test_criterion_02_orthant_closed_forms():
    started = time.perf_counter()
    p_indep = orthant_probability([0.0, 0.0], np.eye(2), [1, 1])
    r = np.array([[1.0, 0.5], [0.5, 1.0]])
    p_arcsin = orthant_probability([0.0, 0.0], r, [1, 1])
    elapsed = time.perf_counter() - started
    err1 = abs(p_indep - 0.25)
    err2 = abs(p_arcsin - 1.0 / 3.0)
    ok = err1 <= 1e-6 and err2 <= 1e-6 and elapsed < 1.0
    report(2, "bivariate orthant closed forms", ok,
           f"err_indep={err1:.2g}, err_arcsin={err2:.2g}, {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# criterion 3: identification invariance


def test_criterion_03_identification_invariance():
    started = time.perf_counter()
    n = 100_000
    worst = 0.0
    ok = True
    for case in range(20):
        g = RngStream(9003, case).generator
        mu = g.standard_normal(2)
        theta = g.standard_normal((2, 2))
        sigma = theta @ theta.T + np.eye(2)
        d = np.sqrt(np.diag(sigma))
        r = sigma / np.outer(d, d)
        np.fill_diagonal(r, 1.0)
        y = np.array([1, 1]) if case % 2 == 0 else np.array([1, 0])

        draws = sample_mvn(RngStream(9103, case), mu, sigma, size=n)
        hits = np.all((draws > 0) == (y == 1), axis=1)
        p_hat = float(hits.mean())
        se = math.sqrt(max(p_hat * (1.0 - p_hat), 1e-12) / n)
        p_oracle = orthant_probability(mu / d, r, y)
        gap = abs(p_hat - p_oracle)
        worst = max(worst, gap / max(se, 1e-12))
        if gap > 3 * se + 1e-6:
            ok = False
    elapsed = time.perf_counter() - started
    ok = ok and elapsed < 30.0
    report(3, "identified-scale orthant matches unscaled MC", ok,
           f"worst gap {worst:.2f} se, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 4: single-chain statistical recovery


@pytest.fixture(scope="module")
def recovery_runs():
    meds, intervals, r_meds, truths = [], [], [], []
    started = time.perf_counter()
    for d in range(10):
        sim = SimConfig(n=4000, m=6, p=3, true_factors=2, seed=4001, replicate_id=d)
        data, truth = simulate_dataset(sim)
        config = ModelConfig(
            n_factors=2, n_iter=6000, burn_in=2000,
            seed=derive_seed(4002, f"recovery-{d}"),
        )
        out = run_chain(data, config, epsilon=1.0, stream_id=0)
        est = extract_point_estimates(out)
        med, lo, hi = coefficient_matrices(est, data.m, data.p)
        r_med, _ = correlation_point_matrix(est, data.m)
        meds.append(med)
        intervals.append((lo, hi))
        r_meds.append(r_med)
        truths.append(truth)
    return meds, intervals, r_meds, truths, time.perf_counter() - started


def test_criterion_04_single_chain_recovery(recovery_runs):
    meds, intervals, r_meds, truths, elapsed = recovery_runs
    mse = compute_mse(meds, truths)
    mae = compute_mae(r_meds, truths)
    cov = compute_coverage(intervals, truths)
    ok = mse <= 0.01 and mae <= 0.05 and 0.88 <= cov <= 0.99 and elapsed < 900.0
    report(4, "single-chain recovery (10 replicates)", ok,
           f"mse={mse:.4g}, mae={mae:.4g}, cov={cov:.3f}, {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# criterion 5: one-shard identity


def test_criterion_05_shard_identity():
    started = time.perf_counter()
    g = RngStream(9005, 0).generator
    y = (g.random((400, 3)) < 0.5).astype(int)
    x = np.hstack([np.ones((400, 1)), g.standard_normal((400, 1))])
    data = Dataset(y, x)
    config = ModelConfig(n_factors=1, n_iter=400, burn_in=100, seed=55)

    plan = make_shard_plan(400, 1, "by_count", seed=3)
    [res] = run_sharded(data, plan, config, keep_draws=True)
    direct = run_chain(data, config, epsilon=1.0, stream_id=0, keep_draws=True)

    pie = pie_combine([res])
    cmc = cmc_combine([res])
    elapsed = time.perf_counter() - started
    ok = (
        np.array_equal(pie.quantiles, direct.quantiles)
        and np.array_equal(cmc.draws, direct.draws)
        and elapsed < 120.0
    )
    report(5, "one-shard PIE/CMC identity", ok, f"{elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 6: CMC Gaussian exactness


def test_criterion_06_cmc_gaussian_exactness():
    started = time.perf_counter()
    n, s = 100_000, 5
    g = RngStream(9006, 0).generator
    means = g.uniform(-2.0, 2.0, size=s)
    grid = np.array([0.025, 0.5, 0.975])
    shards = []
    for i in range(s):
        draws = means[i] + RngStream(9106, i).generator.standard_normal((1, n))
        shards.append(
            PosteriorSummary(
                parameter_names=["b[1,1]"],
                quantile_grid=grid,
                quantiles=np.quantile(draws, grid, axis=1).T,
                n_kept=n,
                draws=draws,
            )
        )
    combined = cmc_combine(shards)
    target_mean = float(means.mean())
    target_var = 1.0 / s
    got_mean = float(combined.draws.mean())
    got_var = float(combined.draws.var(ddof=1))
    se_mean = math.sqrt(target_var / n)
    se_var = target_var * math.sqrt(2.0 / (n - 1))
    elapsed = time.perf_counter() - started
    ok = (
        abs(got_mean - target_mean) < 3 * se_mean
        and abs(got_var - target_var) < 3 * se_var
        and elapsed < 10.0
    )
    report(6, "CMC product-Gaussian moments (S=5)", ok,
           f"mean {got_mean:.4f} vs {target_mean:.4f}, "
           f"var {got_var:.4f} vs {target_var:.4f}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 7: PIE Gaussian shift property


def test_criterion_07_pie_gaussian_shift():
    started = time.perf_counter()
    n = 100_000
    grid = np.array([0.025, 0.5, 0.975])
    shards = []
    for i, mean in enumerate((0.0, 2.0)):
        draws = mean + RngStream(9007, i).generator.standard_normal((1, n))
        shards.append(
            PosteriorSummary(
                parameter_names=["b[1,1]"],
                quantile_grid=grid,
                quantiles=np.quantile(draws, grid, axis=1).T,
                n_kept=n,
                draws=None,
            )
        )
    combined = pie_combine(shards)
    worst = max(
        abs(float(combined.quantiles[0, j]) - (1.0 + float(ndtri(q))))
        for j, q in enumerate(grid)
    )
    elapsed = time.perf_counter() - started
    ok = worst < 0.03 and elapsed < 10.0
    report(7, "PIE quantile average is the shifted Gaussian", ok,
           f"worst |gap|={worst:.4f}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criteria 8-12: desk-scale scaling study (shared fits)


@pytest.fixture(scope="module")
def scaling():
    base = ModelConfig(n_factors=3, n_iter=2000, burn_in=700, seed=77)
    sim = SimConfig(n=2000, m=10, p=5, true_factors=3, seed=88)
    grid = [
        GridCell(n=2000, combiner="pie", shard_size=1000),
        GridCell(n=2000, combiner="cmc", shard_size=1000),
        GridCell(n=8000, combiner="pie", shard_size=1000),
        GridCell(n=8000, combiner="cmc", shard_size=1000),
        GridCell(n=8000, combiner="pie", shard_size=4000),
        GridCell(n=8000, combiner="cmc", shard_size=4000),
    ]
    rows = run_benchmark(grid, base, sim, n_replicates=10, parallelism=1)
    return {(r.cell.n, r.cell.shard_size, r.cell.combiner): r for r in rows}


def test_criterion_08_error_falls_with_data_size(scaling):
    wins = {}
    ok = True
    for comb in ("pie", "cmc"):
        small = scaling[(2000, 1000, comb)].per_replicate["mae"]
        large = scaling[(8000, 1000, comb)].per_replicate["mae"]
        wins[comb] = int(np.sum(large < small))
        ok = ok and wins[comb] >= 8
    report(8, "MAE improves from N=2000 to N=8000 (fixed shard size)", ok,
           f"paired wins pie {wins['pie']}/10, cmc {wins['cmc']}/10")


def test_criterion_09_larger_shards_estimate_better(scaling):
    wins = {}
    ok = True
    for comb in ("pie", "cmc"):
        small = scaling[(8000, 1000, comb)].per_replicate["mae"]
        large = scaling[(8000, 4000, comb)].per_replicate["mae"]
        wins[comb] = int(np.sum(large < small))
        ok = ok and wins[comb] >= 7
    report(9, "MAE improves with shard size 1000 -> 4000 at N=8000", ok,
           f"paired wins pie {wins['pie']}/10, cmc {wins['cmc']}/10")


def test_criterion_10_pie_at_least_matches_cmc(scaling):
    pie = scaling[(8000, 1000, "pie")].report.mae
    cmc = scaling[(8000, 1000, "cmc")].report.mae
    ok = pie <= cmc + 0.01
    report(10, "PIE correlation MAE <= CMC + 0.01", ok,
           f"pie {pie:.4f} vs cmc {cmc:.4f}")


def test_criterion_11_coverage_direction(scaling):
    pie = scaling[(8000, 1000, "pie")].report.coverage
    cmc = scaling[(8000, 1000, "cmc")].report.coverage
    ok = pie > cmc and pie >= 0.95
    report(11, "PIE over-covers, CMC under-covers", ok,
           f"coverage pie {pie:.3f}, cmc {cmc:.3f}")


def test_criterion_12_interval_width_behavior(scaling):
    pie_ratio = (
        scaling[(8000, 1000, "pie")].report.mean_ci_width
        / scaling[(2000, 1000, "pie")].report.mean_ci_width
    )
    cmc_ratio = (
        scaling[(8000, 1000, "cmc")].report.mean_ci_width
        / scaling[(2000, 1000, "cmc")].report.mean_ci_width
    )
    ok = 0.8 <= pie_ratio <= 1.2 and cmc_ratio < 0.8
    report(12, "PIE widths constant, CMC widths shrink", ok,
           f"pie ratio {pie_ratio:.2f}, cmc ratio {cmc_ratio:.2f}")


# ---------------------------------------------------------------------------
# criterion 13: metric formula goldens


def test_criterion_13_metric_goldens():
    def truth(b, r):
        return SimTruth(
            B_true=np.asarray(b, dtype=float),
            R_true=np.asarray(r, dtype=float),
        )

    t_scalar = truth([[0.0], [0.0]], np.eye(2))
    checks = []
    checks.append(
        compute_mse([np.array([[0.5], [0.0]])], [t_scalar]) == 0.125
    )
    t_grid = truth(np.zeros((2, 2)), np.eye(2))
    checks.append(
        compute_mse([np.full((2, 2), 0.5), np.full((2, 2), 0.25)],
                    [t_grid, t_grid]) == 0.15625
    )
    wide = (np.full((2, 2), -1e9), np.full((2, 2), 1e9))
    degenerate = (np.zeros((2, 2)), np.zeros((2, 2)))
    checks.append(compute_coverage([wide, degenerate], [t_grid, t_grid]) == 1.0)
    half = (np.array([[-1.0, 1.0], [-1.0, 1.0]]), np.array([[1.0, 2.0], [1.0, 2.0]]))
    checks.append(compute_coverage([half], [t_grid]) == 0.5)
    est2 = np.array([[1.0, 0.2], [0.2, 1.0]])
    checks.append(compute_mae([est2], [truth(np.zeros((2, 1)), np.eye(2))]) == 0.2)
    est3 = np.eye(3)
    est3[0, 1] = est3[1, 0] = 0.25
    est3[0, 2] = est3[2, 0] = 0.5
    est3[1, 2] = est3[2, 1] = 0.75
    t3 = truth(np.zeros((3, 1)), np.eye(3))
    two_rep = compute_mae([est3, np.eye(3)], [t3, t3])
    checks.append(two_rep == 0.25)
    ok = all(checks)
    report(13, "MSE/COV/MAE golden values, exact equality", ok,
           f"{sum(checks)}/{len(checks)} identities")


# ---------------------------------------------------------------------------
# criterion 14: reproducibility of the CLI pipeline


def _pipeline(out_dir, seed=77, parallelism=1):
    return cli_main([
        "pipeline", "--n", "240", "--m", "3", "--p", "2", "--factors", "1",
        "--shard-size", "60", "--method", "pie", "--seed", str(seed),
        "--iters", "120", "--burn-in", "40",
        "--parallelism", str(parallelism), "--out-dir", str(out_dir),
    ])


def test_criterion_14_pipeline_reproducibility(tmp_path):
    started = time.perf_counter()
    runs = {name: tmp_path / name for name in ("a", "b", "par4", "manual")}
    assert _pipeline(runs["a"]) == 0
    assert _pipeline(runs["b"]) == 0
    assert _pipeline(runs["par4"], parallelism=4) == 0

    data_names = ["dataset.csv", "truth.txt", "plan.txt", "combined.txt"] + [
        f"summary_{s:04d}.txt" for s in range(4)
    ]
    rerun_ok = all(
        (runs["a"] / n).read_bytes() == (runs["b"] / n).read_bytes()
        for n in data_names
    )
    par_ok = (runs["a"] / "combined.txt").read_bytes() == (
        runs["par4"] / "combined.txt"
    ).read_bytes()

    # Distributed path: split + per-shard fit + combine on the same seed.
    work = runs["manual"]
    work.mkdir()
    assert cli_main([
        "split", "--data", str(runs["a"] / "dataset.csv"), "--shard-size", "60",
        "--seed", "77", "--out-dir", str(work),
    ]) == 0
    from mvprobit.io import load_plan

    plan = load_plan(work / "plan.txt")
    spaths = []
    for s in range(plan.n_shards):
        spath = work / f"sum{s}.txt"
        assert cli_main([
            "fit", "--data", str(work / f"shard_{s:04d}.csv"),
            "--epsilon", "%.17g" % plan.epsilons[s], "--stream-id", str(s),
            "--factors", "1", "--iters", "120", "--burn-in", "40",
            "--seed", "77", "--out", str(spath),
        ]) == 0
        spaths.append(str(spath))
    assert cli_main(
        ["combine", *spaths, "--method", "pie", "--out", str(work / "combined.txt")]
    ) == 0
    manual_ok = (work / "combined.txt").read_bytes() == (
        runs["a"] / "combined.txt"
    ).read_bytes()

    elapsed = time.perf_counter() - started
    ok = rerun_ok and par_ok and manual_ok
    report(14, "byte-identical pipeline (rerun, parallelism, distributed)", ok,
           f"rerun={rerun_ok}, parallel={par_ok}, distributed={manual_ok}, "
           f"{elapsed:.0f}s")


# ---------------------------------------------------------------------------
# criterion 15: clustering and screening utilities


def test_criterion_15_cluster_and_screen():
    started = time.perf_counter()
    r = np.eye(6)
    for i in range(3):
        for j in range(3):
            if i != j:
                r[i, j] = 0.9
                r[i + 3, j + 3] = 0.9
    dendro = correlation_distance_clustering(r, [f"c{i}" for i in range(6)])
    members = dendro.member_sets()
    block_a, block_b = {0, 1, 2}, {3, 4, 5}
    cluster_ok = all(
        m <= block_a or m <= block_b for m in members[:-1]
    ) and members[-1] == block_a | block_b

    grid = np.array([0.025, 0.5, 0.975])
    names = ["b[1,1]", "b[2,1]", "b[3,1]", "r[1,2]", "r[1,3]", "r[2,3]"]
    table = np.array([
        [0.1, 0.3, 0.5],     # excludes zero (positive)
        [-0.5, -0.3, -0.1],  # excludes zero (negative)
        [-0.2, 0.0, 0.2],    # straddles zero
        [0.0, 0.1, 0.2],
        [0.0, 0.1, 0.2],
        [0.0, 0.1, 0.2],
    ])
    summary = PosteriorSummary(
        parameter_names=names, quantile_grid=grid, quantiles=table, n_kept=1,
        response_names=["r1", "r2", "r3"], predictor_names=["x1"],
    )
    rows = significance_screen(summary, "x1")
    screen_ok = [row.excludes_zero for row in rows] == [True, True, False]

    elapsed = time.perf_counter() - started
    ok = cluster_ok and screen_ok and elapsed < 1.0
    report(15, "block dendrogram + interval-sign screening", ok,
           f"blocks={cluster_ok}, flags={screen_ok}, {elapsed:.2f}s")
