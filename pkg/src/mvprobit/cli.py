"""Command-line orchestration: simulate, split, fit, combine, analyze.

Every subcommand is a thin layer over the library.  All randomness
flows from ``--seed`` plus structural stream ids (shard index,
replicate index), so reruns and distributed runs reproduce identical
output bytes.  Exit status: 0 success, 2 usage, 1 runtime failure with
one machine-readable JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import io as mvio
from .combine import (
    cmc_combine,
    coefficient_matrices,
    correlation_point_matrix,
    extract_point_estimates,
    pie_combine,
)
from .errors import ConfigurationError, InvalidParameterError, MvprobitError
from .model import DEFAULT_QUANTILE_GRID, ModelConfig, run_chain
from .sharding import make_shard_plan, run_sharded
from .simlab import (
    SimConfig,
    compute_coverage,
    compute_mae,
    compute_mse,
    correlation_distance_clustering,
    format_screen,
    significance_screen,
    simulate_dataset,
)


def _emit_error(code: str, message: str) -> None:
    line = json.dumps({"error": {"code": code, "message": message}})
    print(line, file=sys.stderr)


def _write_or_print(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--factors", type=int, required=True, help="number of latent factors")
    p.add_argument("--iters", type=int, required=True, help="total Gibbs iterations")
    p.add_argument("--burn-in", type=int, required=True, help="discarded iterations")
    p.add_argument("--thin", type=int, default=1, help="keep every thin-th draw")
    p.add_argument(
        "--prior-variance", type=float, default=1e6,
        help="prior variance of coefficient and loading entries",
    )
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument(
        "--quantiles", type=str, default=None,
        help="comma-separated quantile levels (must include 0.025, 0.5, 0.975)",
    )


def _config_from_args(args) -> ModelConfig:
    if args.quantiles:
        grid = tuple(float(t) for t in args.quantiles.split(","))
    else:
        grid = DEFAULT_QUANTILE_GRID
    return ModelConfig(
        n_factors=args.factors,
        n_iter=args.iters,
        burn_in=args.burn_in,
        seed=args.seed,
        prior_variance=args.prior_variance,
        thin=args.thin,
        quantile_grid=grid,
    )


def _load_combined_list(paths):
    out = []
    for p in paths:
        out.append(mvio.load_summary(p))
    return out


def cmd_simulate(args) -> int:
    cfg = SimConfig(
        n=args.n, m=args.m, p=args.p,
        true_factors=args.true_factors,
        include_intercept=args.intercept,
        seed=args.seed,
        replicate_id=args.replicate,
    )
    data, truth = simulate_dataset(cfg)
    mvio.save_dataset(data, args.out_data)
    mvio.save_truth(truth, args.out_truth)
    print(f"wrote {args.out_data} ({data.n} rows) and {args.out_truth}")
    return 0


def cmd_split(args) -> int:
    data = mvio.load_dataset(args.data)
    if args.shards is not None:
        plan = make_shard_plan(data.n, args.shards, "by_count", seed=args.seed)
    else:
        plan = make_shard_plan(data.n, args.shard_size, "by_size", seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mvio.save_plan(plan, out_dir / "plan.txt")
    for s in range(plan.n_shards):
        shard = data.subset(plan.rows_for(s))
        mvio.save_dataset(shard, out_dir / f"shard_{s:04d}.csv")
    print(f"wrote {plan.n_shards} shard files and plan.txt to {out_dir}")
    return 0


def cmd_fit(args) -> int:
    data = mvio.load_dataset(args.data)
    config = _config_from_args(args)
    summary = run_chain(
        data, config,
        epsilon=args.epsilon,
        stream_id=args.stream_id,
        keep_draws=args.keep_draws,
    )
    mvio.save_summary(summary, args.out)
    print(f"wrote {args.out} ({summary.n_kept} kept draws)")
    return 0


def cmd_combine(args) -> int:
    summaries = _load_combined_list(args.summaries)
    combined = cmc_combine(summaries) if args.method == "cmc" else pie_combine(summaries)
    mvio.save_summary(combined, args.out)
    print(f"wrote {args.out} ({combined.method}, {combined.n_shards} shards)")
    return 0


def cmd_pipeline(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_files: dict[str, Path] = {}

    if args.data:
        data = mvio.load_dataset(args.data)
        truth = None
    else:
        for flag, name in ((args.n, "--n"), (args.m, "--m"), (args.p, "--p")):
            if flag is None:
                raise InvalidParameterError(
                    f"pipeline needs {name} when no --data file is given"
                )
        sim = SimConfig(
            n=args.n, m=args.m, p=args.p,
            true_factors=args.true_factors if args.true_factors else args.factors,
            include_intercept=args.intercept,
            seed=args.seed,
            replicate_id=args.replicate,
        )
        data, truth = simulate_dataset(sim)
        mvio.save_truth(truth, out_dir / "truth.txt")
        manifest_files["truth.txt"] = out_dir / "truth.txt"

    dataset_path = out_dir / "dataset.csv"
    mvio.save_dataset(data, dataset_path)
    manifest_files["dataset.csv"] = dataset_path

    if args.shards is not None:
        plan = make_shard_plan(data.n, args.shards, "by_count", seed=args.seed)
    else:
        plan = make_shard_plan(data.n, args.shard_size, "by_size", seed=args.seed)
    plan_path = out_dir / "plan.txt"
    mvio.save_plan(plan, plan_path)
    manifest_files["plan.txt"] = plan_path

    config = _config_from_args(args)
    keep_draws = args.method == "cmc"
    results = run_sharded(
        data, plan, config, parallelism=args.parallelism, keep_draws=keep_draws
    )
    for res in results:
        spath = out_dir / f"summary_{res.shard_id:04d}.txt"
        mvio.save_summary(res.summary, spath)
        manifest_files[spath.name] = spath

    combined = cmc_combine(results) if args.method == "cmc" else pie_combine(results)
    combined_path = out_dir / "combined.txt"
    mvio.save_summary(combined, combined_path)
    manifest_files["combined.txt"] = combined_path

    manifest = mvio.build_manifest(config, manifest_files)
    mvio.save_manifest(manifest, out_dir / "manifest.txt")
    print(
        f"pipeline complete: {plan.n_shards} shards, method={args.method}, "
        f"outputs in {out_dir}"
    )
    return 0


def cmd_metrics(args) -> int:
    if len(args.combined) != len(args.truth):
        raise ConfigurationError(
            f"{len(args.combined)} combined files but {len(args.truth)} truth files"
        )
    meds, intervals, r_meds, truths, widths = [], [], [], [], []
    for cpath, tpath in zip(args.combined, args.truth):
        combined = mvio.load_summary(cpath)
        truth = mvio.load_truth(tpath)
        m, p = truth.B_true.shape
        est = extract_point_estimates(combined)
        med, lo, hi = coefficient_matrices(est, m, p)
        r_med, _ = correlation_point_matrix(est, m)
        meds.append(med)
        intervals.append((lo, hi))
        r_meds.append(r_med)
        truths.append(truth)
        widths.append(float((hi - lo).mean()))
    lines = [
        "metric\tvalue",
        f"mse\t{compute_mse(meds, truths):.17g}",
        f"coverage\t{compute_coverage(intervals, truths):.17g}",
        f"mae\t{compute_mae(r_meds, truths):.17g}",
        f"mean_ci_width\t{sum(widths) / len(widths):.17g}",
        f"replicates\t{len(truths)}",
    ]
    _write_or_print("\n".join(lines), args.out)
    return 0


def cmd_cluster(args) -> int:
    combined = mvio.load_summary(args.summary)
    est = extract_point_estimates(combined)
    m = len(combined.response_names) if combined.response_names else 0
    if m == 0:
        m = max(
            int(name[2:-1].split(",")[1])
            for name in combined.parameter_names
            if name.startswith("r[")
        )
    r_med, psd = correlation_point_matrix(est, m)
    labels = combined.response_names or [f"y{i}" for i in range(1, m + 1)]
    dendro = correlation_distance_clustering(r_med, labels, linkage=args.linkage)
    text = "\n".join(
        [
            "#mvprobit-cluster v1",
            f"#linkage {args.linkage}",
            f"#psd {'true' if psd else 'false'}",
            dendro.to_text(),
        ]
    )
    _write_or_print(text, args.out)
    return 0


def cmd_screen(args) -> int:
    combined = mvio.load_summary(args.summary)
    rows = significance_screen(combined, args.predictor)
    text = "\n".join(
        [
            "#mvprobit-screen v1",
            f"#predictor {args.predictor}",
            format_screen(rows),
        ]
    )
    _write_or_print(text, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvprobit",
        description=(
            "Divide-and-conquer MCMC for the latent-factor multivariate "
            "probit model"
        ),
    )
    parser.add_argument("--version", action="version", version=mvio.TOOL_VERSION)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a dataset plus its ground truth")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--true-factors", type=int, required=True)
    p.add_argument("--intercept", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--out-data", required=True)
    p.add_argument("--out-truth", required=True)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("split", help="split a dataset into shard files")
    p.add_argument("--data", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--shards", type=int, help="number of shards")
    group.add_argument("--shard-size", type=int, help="target rows per shard")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=cmd_split)

    p = sub.add_parser("fit", help="fit one chain on one (shard) dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--epsilon", type=float, default=1.0,
                   help="prior fraction for this shard (n_s / N)")
    p.add_argument("--stream-id", type=int, default=0,
                   help="RNG stream id (the shard index)")
    p.add_argument("--keep-draws", action="store_true",
                   help="persist raw draws (required later for cmc)")
    _add_model_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("combine", help="combine shard summaries")
    p.add_argument("summaries", nargs="+")
    p.add_argument("--method", choices=("cmc", "pie"), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_combine)

    p = sub.add_parser("pipeline", help="simulate/split/fit/combine end to end")
    p.add_argument("--data", help="fit this dataset instead of simulating")
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--true-factors", type=int,
                   help="generator factor count (defaults to --factors)")
    p.add_argument("--intercept", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--replicate", type=int, default=0)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--shards", type=int)
    group.add_argument("--shard-size", type=int)
    p.add_argument("--method", choices=("cmc", "pie"), required=True)
    p.add_argument("--parallelism", type=int, default=1)
    _add_model_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=cmd_pipeline)

    p = sub.add_parser("metrics", help="score combined summaries against truths")
    p.add_argument("--combined", nargs="+", required=True)
    p.add_argument("--truth", nargs="+", required=True)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_metrics)

    p = sub.add_parser("cluster", help="correlation-distance dendrogram")
    p.add_argument("--summary", required=True)
    p.add_argument("--linkage", choices=("average", "complete"), default="average")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_cluster)

    p = sub.add_parser("screen", help="CI-excludes-zero predictor screen")
    p.add_argument("--summary", required=True)
    p.add_argument("--predictor", required=True)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_screen)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.handler(args)
    except MvprobitError as exc:
        _emit_error(exc.code, str(exc))
        return 1
    except OSError as exc:
        _emit_error("io-error", str(exc))
        return 1


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
