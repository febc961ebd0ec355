#!/usr/bin/env python3
"""Small-scale replication of the fixed-shard-size scaling experiment.

Holds shard size constant while the data size grows, scores both
combiners with the MSE / coverage / MAE metrics, and prints the table.
Expect correlation MAE to fall with N, PIE interval widths to stay
put, and CMC interval widths to shrink.
"""

from mvprobit import GridCell, ModelConfig, SimConfig
from mvprobit.simlab import format_benchmark, run_benchmark

base = ModelConfig(n_factors=2, n_iter=1200, burn_in=400, seed=21)
sim = SimConfig(n=1000, m=6, p=3, true_factors=2, seed=22)

grid = [
    GridCell(n=1000, combiner="pie", shard_size=500),
    GridCell(n=1000, combiner="cmc", shard_size=500),
    GridCell(n=4000, combiner="pie", shard_size=500),
    GridCell(n=4000, combiner="cmc", shard_size=500),
]

print("fitting 3 replicates per cell (cells sharing a geometry share fits) ...")
rows = run_benchmark(grid, base, sim, n_replicates=3)
print(format_benchmark(rows))

pie_small = next(r for r in rows if r.cell.n == 1000 and r.cell.combiner == "pie")
pie_large = next(r for r in rows if r.cell.n == 4000 and r.cell.combiner == "pie")
cmc_small = next(r for r in rows if r.cell.n == 1000 and r.cell.combiner == "cmc")
cmc_large = next(r for r in rows if r.cell.n == 4000 and r.cell.combiner == "cmc")

print(f"\nPIE width ratio (large/small N): "
      f"{pie_large.report.mean_ci_width / pie_small.report.mean_ci_width:.2f} "
      f"(stays near 1)")
print(f"CMC width ratio (large/small N): "
      f"{cmc_large.report.mean_ci_width / cmc_small.report.mean_ci_width:.2f} "
      f"(shrinks with more shards)")
