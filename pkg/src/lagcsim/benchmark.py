"""Benchmark the compiled simulation kernel against the pure-numpy loop."""

from __future__ import annotations

import time

import numpy as np

from .dataset import generate_dataset, paper_smoothness_law
from .engine import assignment_for, compiled_backend_available, preset_config, run_until
from .timing import TimingModel


def _bench_case(name, dataset, cfg, iters):
    rows = []
    for backend in ("pure", "compiled"):
        if backend == "compiled" and not compiled_backend_available():
            continue
        start = time.perf_counter()
        trace = run_until(dataset, assignment_for(cfg), cfg, epsilon=0.0,
                          max_iters=iters, seed=1, backend=backend)
        elapsed = time.perf_counter() - start
        rows.append({"case": name, "backend": backend, "iters": trace.n_iterations,
                     "seconds": elapsed,
                     "us_per_iter": 1e6 * elapsed / max(trace.n_iterations, 1),
                     "final_gap": trace.final_gap})
    return rows


def run_benchmark(iters: int = 3000) -> list[dict]:
    """Time both backends on representative schemes; returns result rows.

    Each case runs ``iters`` iterations of a desk-scale workload (epsilon=0
    keeps the loop from stopping early). The final gaps of the two backends
    are reported so drift between implementations is visible.
    """
    dataset = generate_dataset(d=40, n_per_partition=15, s_count=20,
                               l_targets=paper_smoothness_law(20, base=1.12), seed=3)
    alpha = 1.0 / (2.0 * dataset.smoothness)
    timing = TimingModel(law="exponential", eta=0.05)
    cases = [
        ("GD", preset_config("GD", 20, alpha, timing)),
        ("GC", preset_config("GC", 20, alpha, timing, redundancy=4)),
        ("LAG", preset_config("LAG", 20, alpha, timing, xi=1.0)),
        ("LAGC_MG5", preset_config("LAGC", 20, alpha, timing, redundancy=4,
                                   group_size=5, xi=1.0)),
    ]
    rows = []
    for name, cfg in cases:
        rows.extend(_bench_case(name, dataset, cfg, iters))
    return rows


def format_benchmark(rows) -> str:
    lines = [f"{'case':<10} {'backend':<9} {'iters':>7} {'seconds':>9} "
             f"{'us/iter':>9} {'final_gap':>13}"]
    by_case = {}
    for row in rows:
        lines.append(f"{row['case']:<10} {row['backend']:<9} {row['iters']:>7d} "
                     f"{row['seconds']:>9.3f} {row['us_per_iter']:>9.2f} "
                     f"{row['final_gap']:>13.4e}")
        by_case.setdefault(row["case"], {})[row["backend"]] = row["seconds"]
    for case, t in by_case.items():
        if "pure" in t and "compiled" in t:
            lines.append(f"{case}: compiled speedup x{t['pure'] / t['compiled']:.1f}")
    if not compiled_backend_available():
        lines.append("compiled backend not built; showing pure backend only")
    return "\n".join(lines)
