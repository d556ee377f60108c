"""Exact gradients and losses for the quadratic workload.

All sums follow the unnormalized convention L(theta) = sum_s ||X_s theta - y_s||^2
(no 1/N factor). numpy's pairwise summation keeps batch-additivity identities
tight enough for 1e-12 relative assertions at the dimensions used here.
"""

from __future__ import annotations

import numpy as np

from .dataset import Dataset


def param_vector(values) -> np.ndarray:
    """Validate and return a parameter vector (finite float64 1-D array)."""
    theta = np.asarray(values, dtype=float)
    if theta.ndim != 1:
        raise ValueError("parameter vector must be one-dimensional")
    if not np.all(np.isfinite(theta)):
        raise ValueError("parameter vector contains NaN or infinite entries")
    return theta


def partial_gradient(x: np.ndarray, y: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Gradient 2 X^T (X theta - y) of one batch or partition loss."""
    if theta.shape[0] != x.shape[1]:
        raise ValueError(f"dimension mismatch: theta has {theta.shape[0]}, X has {x.shape[1]}")
    return 2.0 * (x.T @ (x @ theta - y))


def partition_loss(x: np.ndarray, y: np.ndarray, theta: np.ndarray) -> float:
    if theta.shape[0] != x.shape[1]:
        raise ValueError(f"dimension mismatch: theta has {theta.shape[0]}, X has {x.shape[1]}")
    resid = x @ theta - y
    return float(resid @ resid)


def total_gradient(dataset: Dataset, theta: np.ndarray) -> np.ndarray:
    """Full gradient: sum of the per-partition gradients."""
    grad = np.zeros_like(theta)
    for part in dataset.partitions:
        grad += partial_gradient(part.x, part.y, theta)
    return grad


def total_loss(dataset: Dataset, theta: np.ndarray) -> float:
    return sum(partition_loss(part.x, part.y, theta) for part in dataset.partitions)


def optimality_gap(dataset: Dataset, theta: np.ndarray) -> float:
    """L(theta) - L(theta*); the optimum is zero by construction."""
    return total_loss(dataset, theta) - dataset.optimal_loss
