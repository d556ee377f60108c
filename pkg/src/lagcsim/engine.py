"""Unified per-iteration simulator for all schemes.

One parameterized loop covers GD, GC, LAG, G-GD, LAGC and G-LAG: the named
schemes are presets of (M, M_G, r, F, xi). Each iteration selects groups by
the lazy condition, samples computing times for the workers that download,
waits for the F fastest per selected group, recovers the group gradients
through the coding layer, applies the gradient step and records loads.

Two interchangeable backends execute the loop: a compiled kernel
(lagcsim._core, built from Cython) and the pure-numpy reference implemented
by ``run_iteration``. The compiled backend is selected at import when
available; set LAGCSIM_PURE=1 to force the fallback. Both consume the
timing RNG identically (one draw block per iteration).
"""

from __future__ import annotations

import csv
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import coding, selection
from .dataset import Assignment, Dataset, build_assignment
from .errors import ConfigError, DivergenceError
from .gradient import param_vector, partial_gradient
from .selection import LazyState, commit_iteration, select_groups, threshold_coefficient
from .timing import TimingModel, sample_times

try:
    from . import _core
except ImportError:
    _core = None

PRESETS = ("GD", "GC", "LAG", "G-GD", "LAGC", "G-LAG", "custom")

_DEFAULT_MAX_ITERS = 1_000_000
_DIVERGENCE_FACTOR = 1e6
_RECORD_VECTOR_CAP = 200_000


def compiled_backend_available() -> bool:
    return _core is not None


def default_backend() -> str:
    if os.environ.get("LAGCSIM_PURE", "").lower() in ("1", "true", "yes"):
        return "pure"
    return "compiled" if compiled_backend_available() else "pure"


@dataclass(frozen=True)
class SchemeConfig:
    """Scheme parameterization; named presets are constraints on these fields."""

    preset: str
    workers: int               # M
    group_size: int            # M_G
    redundancy: int            # r
    threshold: int             # F
    xi: float
    window: int                # D
    alpha: float
    timing: TimingModel
    coding_seed: int = 0

    @property
    def group_count(self) -> int:
        return self.workers // self.group_size

    @property
    def group_redundancy(self) -> int:
        return min(self.redundancy, self.group_size)

    @property
    def lazy(self) -> bool:
        return self.xi > 0.0

    def validate(self) -> "SchemeConfig":
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.workers < 1:
            raise ConfigError("M must be positive")
        if self.workers % self.group_size != 0:
            raise ConfigError(f"M_G={self.group_size} must be an integer divisor "
                              f"of M={self.workers}")
        if not 1 <= self.redundancy <= self.workers:
            raise ConfigError(f"need 1 <= r <= M, got r={self.redundancy}")
        min_f = self.group_size - self.group_redundancy + 1
        if not min_f <= self.threshold <= self.group_size:
            raise ConfigError(f"F={self.threshold} violates F >= M_G - r_G + 1 = {min_f} "
                              f"(or F <= M_G = {self.group_size})")
        if self.xi < 0:
            raise ConfigError("xi must be nonnegative")
        if self.window < 1:
            raise ConfigError("D must be at least 1")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        self._check_preset()
        return self

    def _check_preset(self):
        p = self.preset
        if p == "GD" and not (self.group_size == 1 and self.redundancy == 1
                              and self.xi == 0 and self.threshold == 1):
            raise ConfigError("GD preset requires M_G=1, r=1, xi=0, F=1")
        if p == "GC" and not (self.group_size == self.workers and self.xi == 0):
            raise ConfigError("GC preset requires M_G=M and xi=0")
        if p == "LAG" and not (self.group_size == 1 and self.redundancy == 1
                               and self.xi > 0 and self.threshold == 1):
            raise ConfigError("LAG preset requires M_G=1, r=1, xi>0, F=1")
        if p == "G-GD" and self.xi != 0:
            raise ConfigError("G-GD preset requires xi=0")
        if p == "G-LAG" and not (self.group_size <= self.redundancy and self.xi > 0
                                 and self.threshold == 1):
            raise ConfigError("G-LAG preset requires M_G <= r, xi>0, F=1")
        if p == "LAGC" and not self.xi > 0:
            raise ConfigError("LAGC preset requires xi>0")


def preset_config(name: str, workers: int, alpha: float, timing: TimingModel, *,
                  redundancy: int | None = None, group_size: int | None = None,
                  threshold: int | None = None, xi: float | None = None,
                  window: int = 10, coding_seed: int = 0) -> SchemeConfig:
    """Build a SchemeConfig for a named preset, filling the scheme's defaults."""
    name = name.strip()
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}")
    if name in ("GD", "LAG"):
        if redundancy not in (None, 1):
            raise ConfigError(f"{name} does not use storage redundancy (r=1)")
        redundancy, group_size = 1, 1
    elif name == "GC":
        if redundancy is None:
            raise ConfigError("GC requires r")
        group_size = workers
    elif name in ("G-GD", "G-LAG"):
        if redundancy is None:
            raise ConfigError(f"{name} requires r")
        if group_size is None:
            group_size = min(redundancy, workers)
    elif name == "LAGC":
        if redundancy is None or group_size is None:
            raise ConfigError("LAGC requires r and M_G")
    else:
        if redundancy is None or group_size is None:
            raise ConfigError("custom preset requires explicit r and M_G")
    group_red = min(redundancy, group_size)
    if threshold is None:
        threshold = 1 if group_red == group_size else group_size - group_red + 1
    if xi is None:
        xi = 1.0 if name in ("LAG", "LAGC", "G-LAG") else 0.0
    return SchemeConfig(preset=name, workers=workers, group_size=group_size,
                        redundancy=redundancy, threshold=threshold, xi=xi,
                        window=window, alpha=alpha, timing=timing,
                        coding_seed=coding_seed).validate()


@dataclass(frozen=True)
class Workload:
    """Scheme-shaped view of a dataset: stacked batches plus the group code."""

    x: np.ndarray                     # (M, n, d) batch design matrices
    y: np.ndarray                     # (M, n)
    group_smoothness: np.ndarray      # (G,) sum of member partition constants
    encoding: coding.EncodingMatrix
    cfg: SchemeConfig

    def loss(self, theta: np.ndarray) -> float:
        resid = self.x @ theta - self.y
        return float(np.sum(resid * resid))


def build_workload(dataset: Dataset, assignment: Assignment, cfg: SchemeConfig) -> Workload:
    """Stack dataset partitions into the (group, batch) layout of the scheme.

    Group g owns the M_G consecutive partitions g*M_G .. (g+1)*M_G - 1 as its
    batches, so the dataset must provide exactly S = M partitions. The group
    smoothness constant is the sum of its members' (an upper bound for the
    grouped loss).
    """
    cfg.validate()
    if dataset.s_count != cfg.workers:
        raise ConfigError(f"dataset has S={dataset.s_count} partitions but the "
                          f"scheme needs S=M={cfg.workers}")
    if (assignment.workers, assignment.group_size, assignment.redundancy) != \
            (cfg.workers, cfg.group_size, cfg.redundancy):
        raise ConfigError("assignment does not match the scheme configuration")
    rows = {p.n_rows for p in dataset.partitions}
    if len(rows) != 1:
        raise ConfigError("partitions must have equal sizes for batching")
    x = np.ascontiguousarray(np.stack([p.x for p in dataset.partitions]))
    y = np.ascontiguousarray(np.stack([p.y for p in dataset.partitions]))
    per_part = dataset.partition_smoothness
    group_l = per_part.reshape(cfg.group_count, cfg.group_size).sum(axis=1)
    enc = coding.build_encoding_matrix(cfg.group_size, cfg.group_redundancy,
                                       seed=cfg.coding_seed, threshold=cfg.threshold)
    return Workload(x=x, y=y, group_smoothness=group_l, encoding=enc, cfg=cfg)


def estimate_gradient(fresh_gradients, state: LazyState, group_count: int) -> np.ndarray:
    """Gradient estimate: fresh recoveries plus stale caches for the rest."""
    missing = [g for g in range(group_count)
               if g not in fresh_gradients and not state.has_gradient[g]]
    if missing:
        raise ValueError(f"no cached gradient for unselected groups {missing}")
    dim = state.stale_gradients.shape[1]
    out = np.zeros(dim)
    for g in sorted(fresh_gradients):
        out += fresh_gradients[g]
    for g in range(group_count):
        if g not in fresh_gradients:
            out += state.stale_gradients[g]
    return out


@dataclass
class IterationRecord:
    iteration: int
    duration: float
    downloads: int             # |M_D|
    uploads: int               # |M_U|
    loss_gap: float
    selected: tuple[int, ...]


@dataclass
class RunState:
    """Single-owner mutable state of one simulation run (pure backend)."""

    workload: Workload
    theta: np.ndarray
    lazy: LazyState
    rng: np.random.Generator
    iteration: int = 0
    last_estimate: np.ndarray | None = None

    @property
    def cfg(self) -> SchemeConfig:
        return self.workload.cfg


def start_run(dataset: Dataset, assignment: Assignment, cfg: SchemeConfig,
              seed: int = 0, theta0=None) -> RunState:
    workload = build_workload(dataset, assignment, cfg)
    theta = param_vector(np.zeros(dataset.dim) if theta0 is None else theta0).copy()
    lazy = LazyState.initial(cfg.group_count, theta, cfg.window)
    return RunState(workload=workload, theta=theta, lazy=lazy,
                    rng=np.random.default_rng(seed))


def run_iteration(run: RunState) -> IterationRecord:
    """Advance one iteration (reference implementation of the protocol)."""
    cfg = run.cfg
    w = run.workload
    m_g, f = cfg.group_size, cfg.threshold
    selected = select_groups(run.lazy, run.theta, w.group_smoothness, cfg)
    sel = sorted(selected)

    duration = 0.0
    fresh = {}
    if sel:
        times = sample_times(cfg.timing, cfg.group_redundancy, len(sel) * m_g, run.rng)
        for k, g in enumerate(sel):
            group_times = times[k * m_g:(k + 1) * m_g]
            picked = np.argpartition(group_times, f - 1)[:f]
            duration = max(duration, float(np.max(group_times[picked])))
            subset = np.sort(picked)
            grads = {j: partial_gradient(w.x[g * m_g + j], w.y[g * m_g + j], run.theta)
                     for j in range(m_g)}
            encoded = [coding.encode(w.encoding, int(m),
                                     {int(j): grads[int(j)] for j in w.encoding.support[m]})
                       for m in subset]
            fresh[g] = coding.decode(w.encoding, subset.tolist(), encoded)

    estimate = estimate_gradient(fresh, run.lazy, cfg.group_count)
    theta_new = run.theta - cfg.alpha * estimate
    commit_iteration(run.lazy, theta_new, run.theta, selected, fresh)
    run.theta = theta_new
    run.last_estimate = estimate
    run.iteration += 1
    return IterationRecord(iteration=run.iteration, duration=duration,
                           downloads=len(sel) * m_g, uploads=len(sel) * f,
                           loss_gap=w.loss(theta_new) - 0.0,
                           selected=tuple(sel))


@dataclass
class MetricsTrace:
    """Column-oriented record of one run, plus derived load curves."""

    durations: np.ndarray
    downloads: np.ndarray
    uploads: np.ndarray
    loss_gaps: np.ndarray
    selected: np.ndarray          # (I, G) bool
    initial_gap: float
    status: str                   # 'converged' | 'max_iters'
    config: SchemeConfig
    seed: int
    thetas: np.ndarray | None = None
    estimates: np.ndarray | None = None
    _cum_times: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_iterations(self) -> int:
        return int(self.durations.shape[0])

    @property
    def cum_times(self) -> np.ndarray:
        if self._cum_times is None:
            object.__setattr__(self, "_cum_times", np.cumsum(self.durations))
        return self._cum_times

    @property
    def comm_per_iter(self) -> np.ndarray:
        return self.downloads + self.uploads

    @property
    def comm_cum(self) -> np.ndarray:
        return np.cumsum(self.comm_per_iter)

    @property
    def comp_per_iter(self) -> np.ndarray:
        return (self.config.group_redundancy / self.config.workers) * self.downloads

    @property
    def comp_cum(self) -> np.ndarray:
        return np.cumsum(self.comp_per_iter)

    @property
    def total_time(self) -> float:
        return float(self.cum_times[-1]) if self.n_iterations else 0.0

    @property
    def final_gap(self) -> float:
        return float(self.loss_gaps[-1]) if self.n_iterations else self.initial_gap

    @property
    def records(self) -> list[IterationRecord]:
        return [IterationRecord(iteration=i + 1, duration=float(self.durations[i]),
                                downloads=int(self.downloads[i]), uploads=int(self.uploads[i]),
                                loss_gap=float(self.loss_gaps[i]),
                                selected=tuple(np.flatnonzero(self.selected[i]).tolist()))
                for i in range(self.n_iterations)]


def _empty_trace(cfg: SchemeConfig, seed: int, initial_gap: float,
                 record_vectors: bool, theta0: np.ndarray) -> MetricsTrace:
    g = cfg.group_count
    return MetricsTrace(durations=np.zeros(0), downloads=np.zeros(0, dtype=np.int64),
                        uploads=np.zeros(0, dtype=np.int64), loss_gaps=np.zeros(0),
                        selected=np.zeros((0, g), dtype=bool), initial_gap=initial_gap,
                        status="converged", config=cfg, seed=seed,
                        thetas=theta0[None, :].copy() if record_vectors else None,
                        estimates=np.zeros((0, theta0.shape[0])) if record_vectors else None)


def _run_pure(run: RunState, epsilon: float, max_iters: int, div_limit: float,
              record_vectors: bool):
    durations, md, mu, gaps, sel_rows = [], [], [], [], []
    thetas = [run.theta.copy()] if record_vectors else None
    ests = [] if record_vectors else None
    g = run.cfg.group_count
    status = "max_iters"
    for _ in range(max_iters):
        rec = run_iteration(run)
        durations.append(rec.duration)
        md.append(rec.downloads)
        mu.append(rec.uploads)
        gaps.append(rec.loss_gap)
        row = np.zeros(g, dtype=bool)
        row[list(rec.selected)] = True
        sel_rows.append(row)
        if record_vectors:
            thetas.append(run.theta.copy())
            ests.append(run.last_estimate.copy())
        if not np.isfinite(rec.loss_gap) or rec.loss_gap > div_limit:
            raise DivergenceError(f"optimality gap exploded (alpha={run.cfg.alpha}); "
                                  f"reduce the stepsize below 1/L")
        if rec.loss_gap <= epsilon:
            status = "converged"
            break
    return (status, np.array(durations), np.array(md, dtype=np.int64),
            np.array(mu, dtype=np.int64), np.array(gaps),
            np.array(sel_rows, dtype=bool) if sel_rows else np.zeros((0, g), dtype=bool),
            np.array(thetas) if record_vectors else None,
            np.array(ests) if record_vectors else None)


def run_until(dataset: Dataset, assignment: Assignment, cfg: SchemeConfig, *,
              epsilon: float, max_iters: int = _DEFAULT_MAX_ITERS, seed: int = 0,
              theta0=None, record_vectors: bool = False,
              backend: str | None = None) -> MetricsTrace:
    """Simulate until the optimality gap reaches epsilon or max_iters elapse.

    Deterministic for a fixed (dataset, cfg, seed): the seed drives only the
    computing-time draws. Raises DivergenceError if the gap exceeds 1e6 times
    its initial value.
    """
    cfg.validate()
    backend = backend or default_backend()
    if backend not in ("pure", "compiled"):
        raise ConfigError(f"unknown backend {backend!r}")
    if backend == "compiled" and _core is None:
        raise ConfigError("compiled backend requested but lagcsim._core is not built")
    if record_vectors and max_iters > _RECORD_VECTOR_CAP:
        raise ConfigError(f"record_vectors requires max_iters <= {_RECORD_VECTOR_CAP}")
    if cfg.alpha >= 1.0 / dataset.smoothness:
        warnings.warn(f"stepsize alpha={cfg.alpha:g} is not below 1/L="
                      f"{1.0 / dataset.smoothness:g}; convergence is not guaranteed",
                      RuntimeWarning, stacklevel=2)

    run = start_run(dataset, assignment, cfg, seed=seed, theta0=theta0)
    initial_gap = run.workload.loss(run.theta)
    if initial_gap <= epsilon:
        return _empty_trace(cfg, seed, initial_gap, record_vectors, run.theta)
    div_limit = _DIVERGENCE_FACTOR * initial_gap

    if backend == "pure":
        status, durations, md, mu, gaps, sel, thetas, ests = _run_pure(
            run, epsilon, max_iters, div_limit, record_vectors)
        return MetricsTrace(durations=durations, downloads=md, uploads=mu,
                            loss_gaps=gaps, selected=sel, initial_gap=initial_gap,
                            status=status, config=cfg, seed=seed,
                            thetas=thetas, estimates=ests)

    w = run.workload
    table = coding.decode_table(w.encoding)
    coef = threshold_coefficient(cfg.xi, cfg.alpha, cfg.workers, cfg.window, cfg.group_size)
    sampler = _make_sampler(cfg, run.rng)
    res = _core.run_loop(w.x, w.y, run.theta, w.group_smoothness,
                         w.encoding.matrix, w.encoding.support, table,
                         cfg.group_size, cfg.threshold, cfg.alpha, coef, cfg.window,
                         epsilon, div_limit, max_iters, sampler, record_vectors)
    status_code, durations, md, mu, gaps, sel, thetas, ests = res
    if status_code == 2:
        raise DivergenceError(f"optimality gap exploded (alpha={cfg.alpha}); "
                              f"reduce the stepsize below 1/L")
    return MetricsTrace(durations=durations, downloads=md, uploads=mu, loss_gaps=gaps,
                        selected=sel.astype(bool), initial_gap=initial_gap,
                        status="converged" if status_code == 0 else "max_iters",
                        config=cfg, seed=seed, thetas=thetas, estimates=ests)


def _make_sampler(cfg: SchemeConfig, rng: np.random.Generator):
    r_g = cfg.group_redundancy
    timing = cfg.timing

    def sampler(count: int) -> np.ndarray:
        return sample_times(timing, r_g, count, rng)

    return sampler


def trace_functions(trace: MetricsTrace, t: float):
    """(iterations, communication, computation, gap) completed by time t."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    i_t = int(np.searchsorted(trace.cum_times, t, side="right"))
    if i_t == 0:
        return 0, 0, 0.0, trace.initial_gap
    return (i_t, int(trace.comm_cum[i_t - 1]), float(trace.comp_cum[i_t - 1]),
            float(trace.loss_gaps[i_t - 1]))


TRACE_COLUMNS = ("iter", "duration", "cum_time", "md", "mu",
                 "comm_cum", "comp_cum", "loss_gap")


def write_trace_csv(trace: MetricsTrace, path) -> Path:
    path = Path(path)
    cum_t = trace.cum_times
    comm = trace.comm_cum
    comp = trace.comp_cum
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for i in range(trace.n_iterations):
            writer.writerow([i + 1, repr(float(trace.durations[i])), repr(float(cum_t[i])),
                             int(trace.downloads[i]), int(trace.uploads[i]),
                             int(comm[i]), repr(float(comp[i])),
                             repr(float(trace.loss_gaps[i]))])
    return path


def read_trace_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace columns {header}")
        rows = list(reader)
    cols = {name: np.array([float(row[k]) for row in rows]) for k, name in enumerate(header)}
    for name in ("iter", "md", "mu", "comm_cum"):
        cols[name] = cols[name].astype(np.int64)
    return cols


def assignment_for(cfg: SchemeConfig) -> Assignment:
    """The storage map implied by a scheme configuration."""
    return build_assignment(cfg.workers, cfg.group_size, cfg.redundancy)
