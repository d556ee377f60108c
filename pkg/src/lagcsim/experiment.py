"""Experiment specs, scheme sweeps over seeds, and CSV artifacts.

A spec file (YAML key-value) describes the dataset, the timing law, the
shared scheme parameters (M, r, alpha, xi, D) and a list of scheme presets
with optional per-scheme overrides. Running it produces one trace CSV per
(scheme, seed), a complexity table from the analysis module, and a
time-grid aggregate of the mean loss/communication/computation curves.

Identical specs produce byte-identical outputs: floats are serialized with
repr and all orderings are fixed.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import analysis
from .dataset import Dataset, dataset_from_config
from .engine import (MetricsTrace, SchemeConfig, assignment_for, preset_config,
                     run_until, trace_functions, write_trace_csv)
from .errors import ConfigError
from .timing import TimingModel

_TOP_KEYS = {"dataset", "timing", "M", "r", "alpha", "xi", "D", "epsilon",
             "max_iters", "seeds", "schemes", "out"}
_SCHEME_KEYS = {"preset", "M_G", "F", "xi", "coding_seed"}
_TIMING_KEYS = {"law", "eta", "beta"}
_GRID_POINTS = 201


@dataclass(frozen=True)
class ExperimentSpec:
    dataset_cfg: dict
    timing: TimingModel
    workers: int
    redundancy: int
    alpha: float | str          # numeric or 'auto' (= 1/(2L) once measured)
    xi: float
    window: int
    epsilon: float
    max_iters: int
    seeds: tuple[int, ...]
    schemes: tuple[dict, ...]
    out_dir: str | None = None

    def validate(self) -> "ExperimentSpec":
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not self.schemes:
            raise ConfigError("at least one scheme is required")
        if isinstance(self.alpha, str) and self.alpha != "auto":
            raise ConfigError("alpha must be a number or 'auto'")
        return self


def _parse_seeds(value) -> tuple[int, ...]:
    if isinstance(value, int):
        if value < 1:
            raise ConfigError("seed count must be >= 1")
        return tuple(range(value))
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    if isinstance(value, str):
        return tuple(int(v) for v in value.split(","))
    raise ConfigError("seeds must be a count or a list")


def parse_spec(source) -> ExperimentSpec:
    """Load and validate an experiment spec from a YAML path or a mapping."""
    if isinstance(source, (str, Path)):
        with open(source) as fh:
            raw = yaml.safe_load(fh)
    else:
        raw = dict(source)
    if not isinstance(raw, dict):
        raise ConfigError("experiment spec must be a mapping")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown spec keys: {sorted(unknown)}")
    for key in ("dataset", "timing", "M", "r", "epsilon", "schemes"):
        if key not in raw:
            raise ConfigError(f"spec missing key {key!r}")

    timing_raw = dict(raw["timing"])
    unknown = set(timing_raw) - _TIMING_KEYS
    if unknown:
        raise ConfigError(f"unknown timing keys: {sorted(unknown)}")
    timing = TimingModel(law=timing_raw.get("law", "exponential"),
                         eta=float(timing_raw.get("eta", 0.05)),
                         beta=float(timing_raw["beta"]) if "beta" in timing_raw else None)

    schemes = []
    for entry in raw["schemes"]:
        entry = dict(entry)
        unknown = set(entry) - _SCHEME_KEYS
        if unknown:
            raise ConfigError(f"unknown scheme keys: {sorted(unknown)}")
        if "preset" not in entry:
            raise ConfigError("each scheme entry needs a 'preset'")
        schemes.append(entry)

    alpha = raw.get("alpha", "auto")
    spec = ExperimentSpec(
        dataset_cfg=dict(raw["dataset"]),
        timing=timing,
        workers=int(raw["M"]),
        redundancy=int(raw["r"]),
        alpha=alpha if isinstance(alpha, str) else float(alpha),
        xi=float(raw.get("xi", 1.0)),
        window=int(raw.get("D", 10)),
        epsilon=float(raw["epsilon"]),
        max_iters=int(raw.get("max_iters", 1_000_000)),
        seeds=_parse_seeds(raw.get("seeds", 1)),
        schemes=tuple(schemes),
        out_dir=raw.get("out"),
    ).validate()
    # Fail fast on scheme parameter problems: building the dataset is the
    # expensive step, so check the configs against a placeholder alpha first.
    resolve_schemes(spec, alpha=0.5)
    return spec


def resolve_schemes(spec: ExperimentSpec, alpha: float) -> list[SchemeConfig]:
    """Instantiate the validated SchemeConfig list for a resolved stepsize."""
    configs = []
    for entry in spec.schemes:
        xi = float(entry["xi"]) if "xi" in entry else None
        if entry["preset"] in ("GD", "GC", "G-GD") and xi is None:
            xi = 0.0
        if xi is None:
            xi = spec.xi
        configs.append(preset_config(
            entry["preset"], spec.workers, alpha, spec.timing,
            redundancy=None if entry["preset"] in ("GD", "LAG") else spec.redundancy,
            group_size=int(entry["M_G"]) if "M_G" in entry else None,
            threshold=int(entry["F"]) if "F" in entry else None,
            xi=xi, window=spec.window,
            coding_seed=int(entry.get("coding_seed", 0))))
    return configs


def scheme_labels(configs) -> list[str]:
    """Unique file-system labels, disambiguated by group size when needed."""
    counts = {}
    for cfg in configs:
        counts[cfg.preset] = counts.get(cfg.preset, 0) + 1
    labels = []
    for cfg in configs:
        if counts[cfg.preset] == 1:
            labels.append(cfg.preset)
        else:
            labels.append(f"{cfg.preset}_MG{cfg.group_size}")
    if len(set(labels)) != len(labels):
        raise ConfigError("scheme list contains indistinguishable entries")
    return labels


def resolve_alpha(spec: ExperimentSpec, dataset: Dataset) -> float:
    if spec.alpha == "auto":
        return 1.0 / (2.0 * dataset.smoothness)
    return float(spec.alpha)


def emit_time_grid_aggregate(traces: list[MetricsTrace], grid: np.ndarray) -> dict:
    """Seed-mean loss/communication/computation on a time grid.

    Values past a trace's terminal time hold at their terminal values, so
    the means stay defined on the whole grid; the mean termination time is
    reported alongside.
    """
    if len(traces) == 0:
        raise ValueError("need at least one trace")
    if len(grid) == 0:
        raise ValueError("time grid must be nonempty")
    loss = np.zeros((len(traces), len(grid)))
    comm = np.zeros_like(loss)
    comp = np.zeros_like(loss)
    for k, trace in enumerate(traces):
        for j, t in enumerate(grid):
            _, c, p, l = trace_functions(trace, float(t))
            loss[k, j] = l
            comm[k, j] = c
            comp[k, j] = p
    return {
        "grid": np.asarray(grid, dtype=float),
        "loss": loss.mean(axis=0),
        "comm": comm.mean(axis=0),
        "comp": comp.mean(axis=0),
        "mean_termination": float(np.mean([t.total_time for t in traces])),
    }


def _run_one(args):
    dataset, cfg, label, epsilon, max_iters, seed, backend = args
    trace = run_until(dataset, assignment_for(cfg), cfg, epsilon=epsilon,
                      max_iters=max_iters, seed=seed, backend=backend)
    return label, seed, trace


AGGREGATE_COLUMNS = ("scheme", "t", "loss_gap", "comm", "comp", "mean_time_to_eps")


def run_experiment(spec: ExperimentSpec, out_dir=None, jobs: int = 1,
                   table_only: bool = False, backend: str | None = None) -> dict:
    """Run the full pipeline; returns the paths of the artifacts written.

    Partial outputs are removed if any run fails.
    """
    out = Path(out_dir or spec.out_dir or "results")
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        dataset = dataset_from_config(spec.dataset_cfg)
        alpha = resolve_alpha(spec, dataset)
        configs = resolve_schemes(spec, alpha)
        labels = scheme_labels(configs)

        reports = [analysis.complexity_report(dataset, cfg, spec.epsilon)
                   for cfg in configs]
        reports = [analysis.ComplexityReport(scheme=label, iterations=r.iterations,
                                             time=r.time, communication=r.communication,
                                             computation=r.computation,
                                             time_is_bound=r.time_is_bound,
                                             comm_is_bound=r.comm_is_bound,
                                             comp_is_bound=r.comp_is_bound)
                   for label, r in zip(labels, reports)]
        table_path = out / "complexity.csv"
        analysis.write_report_csv(reports, table_path)
        written.append(table_path)
        artifacts = {"complexity": table_path, "traces": {}, "aggregate": None}
        if table_only:
            return artifacts

        tasks = [(dataset, cfg, label, spec.epsilon, spec.max_iters, seed, backend)
                 for cfg, label in zip(configs, labels) for seed in spec.seeds]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_run_one, tasks))
        else:
            results = [_run_one(task) for task in tasks]

        traces: dict[str, dict[int, MetricsTrace]] = {}
        for label, seed, trace in results:
            traces.setdefault(label, {})[seed] = trace
        for label in labels:
            for seed in spec.seeds:
                path = out / f"trace_{label}_{seed}.csv"
                write_trace_csv(traces[label][seed], path)
                written.append(path)
                artifacts["traces"][(label, seed)] = path

        t_max = max(tr.total_time for by_seed in traces.values()
                    for tr in by_seed.values())
        grid = np.linspace(0.0, t_max, _GRID_POINTS)
        agg_path = out / "aggregate.csv"
        with open(agg_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(AGGREGATE_COLUMNS)
            for label in labels:
                agg = emit_time_grid_aggregate(
                    [traces[label][seed] for seed in spec.seeds], grid)
                for j, t in enumerate(agg["grid"]):
                    writer.writerow([label, repr(float(t)), repr(float(agg["loss"][j])),
                                     repr(float(agg["comm"][j])), repr(float(agg["comp"][j])),
                                     repr(agg["mean_termination"])])
        written.append(agg_path)
        artifacts["aggregate"] = agg_path
        return artifacts
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise
