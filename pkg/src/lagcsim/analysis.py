"""Closed-form complexity predictions per scheme.

For exact schemes (xi = 0) the per-iteration loads are deterministic and the
expected iteration time follows from order statistics; the predictions are
exact. For lazy schemes (xi > 0) the selection-frequency argument yields an
upper bound on the average number of selected groups, and the reported time,
communication and computation values are upper bounds (flagged as such).

All quantities reduce to one unified form over groups: an iteration waits for
the F fastest of M_G workers in each of the (on average) ``a`` active groups,
moves M_G + F messages per active group and computes r_G/M of the data per
downloading worker. The per-scheme formulas in the report are instances of
this form at a = G (exact) or a = mean-selected bound (lazy).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .engine import SchemeConfig
from .gradient import total_loss
from .timing import (EXPONENTIAL, TimingModel, expected_max_group_time,
                     expected_order_stat)


def iteration_complexity(kappa: float, delta_l0: float, epsilon: float,
                         alpha_l: float | None = None, lazy: bool = False) -> float:
    """Iterations to an epsilon gap: kappa*ln(delta0/eps), divided by alpha*L
    for lazy schemes (natural log convention)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if epsilon > delta_l0:
        raise ValueError(f"epsilon={epsilon} exceeds the initial gap {delta_l0}")
    if kappa < 1:
        raise ValueError("condition number must be >= 1")
    base = kappa * math.log(delta_l0 / epsilon)
    if not lazy:
        return base
    if alpha_l is None or not 0 < alpha_l < 1:
        raise ValueError("lazy schemes need 0 < alpha*L < 1")
    return base / alpha_l


def mean_selected_bound(smoothness, xi: float, alpha: float, count: int,
                        window: int) -> float:
    """Upper bound on the average number of selected units per iteration.

    A unit (worker or group) whose squared smoothness falls between
    consecutive thresholds xi/(D*d*alpha^2*count^2), d = 1..D, is selected at
    most once every d+1 iterations; the bound weights the unit fractions
    accordingly. With xi = 0 every unit is always selected. Values exactly on
    a threshold join the lower-d (more frequently selected) bucket.
    """
    smoothness = np.asarray(smoothness, dtype=float)
    if smoothness.shape[0] != count:
        raise ValueError(f"expected {count} smoothness constants, got {smoothness.shape[0]}")
    if xi == 0.0:
        return float(count)
    thresholds = np.array([xi / (window * d * alpha**2 * count**2)
                           for d in range(1, window + 1)])
    buckets = (smoothness[:, None] ** 2 < thresholds[None, :]).sum(axis=1)
    weights = 1.0 / (buckets + 1.0)
    return float(count * weights.mean())


def m_bar(worker_smoothness, xi: float, alpha: float, workers: int, window: int) -> float:
    """Worker-level mean-selection bound (ungrouped lazy scheme)."""
    return mean_selected_bound(worker_smoothness, xi, alpha, workers, window)


def g_bar(group_smoothness, xi: float, alpha: float, groups: int, window: int) -> float:
    """Group-level mean-selection bound."""
    return mean_selected_bound(group_smoothness, xi, alpha, groups, window)


def _expected_max_groups(cfg: SchemeConfig, a: int) -> float:
    """E[max of a group completion times] for integer a, closed form if possible."""
    timing = cfg.timing
    m_g, f, r_g = cfg.group_size, cfg.threshold, cfg.group_redundancy
    if m_g == 1:
        return expected_order_stat(timing, a, a, r_g)
    if a == 1:
        return expected_order_stat(timing, f, m_g, r_g)
    return expected_max_group_time(timing, r_g, m_g, f, a)


def iteration_time_mean(cfg: SchemeConfig, active_groups: float) -> float:
    """Expected per-iteration duration with ``active_groups`` groups working.

    Fractional counts (the lazy bounds) interpolate linearly between the
    adjacent integer order statistics.
    """
    if active_groups < 1:
        raise ValueError("at least one active group is required")
    lo = math.floor(active_groups)
    hi = math.ceil(active_groups)
    t_lo = _expected_max_groups(cfg, lo)
    if hi == lo:
        return t_lo
    t_hi = _expected_max_groups(cfg, hi)
    return t_lo + (active_groups - lo) * (t_hi - t_lo)


def time_complexity(cfg: SchemeConfig, iterations: float, active_groups: float) -> float:
    return iterations * iteration_time_mean(cfg, active_groups)


def communication_complexity(cfg: SchemeConfig, iterations: float,
                             active_groups: float) -> float:
    """(M_G + F) messages per active group per iteration."""
    return iterations * (cfg.group_size + cfg.threshold) * active_groups


def computation_complexity(cfg: SchemeConfig, iterations: float,
                           active_groups: float) -> float:
    """Gradients per data point: r_G/M per downloading worker."""
    return iterations * cfg.group_redundancy * cfg.group_size * active_groups / cfg.workers


@dataclass(frozen=True)
class ComplexityReport:
    scheme: str
    iterations: float
    time: float
    communication: float
    computation: float
    time_is_bound: bool
    comm_is_bound: bool
    comp_is_bound: bool


def complexity_report(dataset: Dataset, cfg: SchemeConfig, epsilon: float,
                      theta0=None) -> ComplexityReport:
    """Evaluate the scheme's complexity predictions on a concrete workload.

    The condition number and initial gap are measured from the dataset
    (kappa = L/mu, theta0 defaults to the zero vector).
    """
    cfg.validate()
    theta0 = np.zeros(dataset.dim) if theta0 is None else np.asarray(theta0, dtype=float)
    kappa = dataset.smoothness / dataset.pl_constant
    delta0 = total_loss(dataset, theta0) - dataset.optimal_loss
    alpha_l = cfg.alpha * dataset.smoothness
    iters = iteration_complexity(kappa, delta0, epsilon,
                                 alpha_l=alpha_l if cfg.lazy else None, lazy=cfg.lazy)
    if cfg.lazy:
        per_part = dataset.partition_smoothness
        group_l = per_part.reshape(cfg.group_count, cfg.group_size).sum(axis=1)
        active = g_bar(group_l, cfg.xi, cfg.alpha, cfg.group_count, cfg.window)
    else:
        active = float(cfg.group_count)
    return ComplexityReport(
        scheme=cfg.preset,
        iterations=iters,
        time=time_complexity(cfg, iters, active),
        communication=communication_complexity(cfg, iters, active),
        computation=computation_complexity(cfg, iters, active),
        time_is_bound=cfg.lazy, comm_is_bound=cfg.lazy, comp_is_bound=cfg.lazy)


REPORT_COLUMNS = ("scheme", "I", "T", "C", "P", "is_bound_T", "is_bound_C", "is_bound_P")


def write_report_csv(reports, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for rep in reports:
            writer.writerow([rep.scheme, repr(rep.iterations), repr(rep.time),
                             repr(rep.communication), repr(rep.computation),
                             int(rep.time_is_bound), int(rep.comm_is_bound),
                             int(rep.comp_is_bound)])
    return path
