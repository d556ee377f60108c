"""Lazy-aggregation state and the per-group download rule.

The server keeps, per group, the parameter vector the group last computed at
and the gradient it last uploaded, plus a ring buffer of the D most recent
squared step norms ||theta^{i+1-d} - theta^{i-d}||^2. A group is re-selected
when its predicted gradient change beats the recent average step activity:

    L_g^2 ||theta_g_stale - theta||^2  >=  (M_G^2 xi) / (alpha^2 M^2 D) * sum(history)

With xi = 0 the right-hand side vanishes and every group is selected each
iteration (the exact-gradient schemes). The inequality is taken literally, so
an empty history (iteration 1) selects all groups and bootstraps the caches.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np


def threshold_coefficient(xi: float, alpha: float, workers: int, window: int,
                          group_size: int) -> float:
    """Constant multiplying the history sum on the condition's right side."""
    return (group_size**2 * xi) / (alpha**2 * workers**2 * window)


def selection_threshold(history, xi: float, alpha: float, workers: int,
                        window: int, group_size: int) -> float:
    """Right-hand side of the selection condition; missing terms count zero."""
    coef = threshold_coefficient(xi, alpha, workers, window, group_size)
    if coef == 0.0:
        return 0.0
    return coef * float(np.sum(np.fromiter(history, dtype=float, count=len(history))))


@dataclass
class LazyState:
    """Mutable per-run selection state (single-owner, one simulation run)."""

    stale_params: np.ndarray                  # (G, d)
    stale_gradients: np.ndarray               # (G, d)
    has_gradient: np.ndarray                  # (G,) bool, False until bootstrapped
    history: deque = field(default_factory=deque)   # squared step norms, maxlen D

    @classmethod
    def initial(cls, group_count: int, theta0: np.ndarray, window: int) -> "LazyState":
        return cls(stale_params=np.tile(theta0, (group_count, 1)),
                   stale_gradients=np.zeros((group_count, theta0.shape[0])),
                   has_gradient=np.zeros(group_count, dtype=bool),
                   history=deque(maxlen=window))


def select_groups(state: LazyState, theta: np.ndarray, group_smoothness, cfg) -> set[int]:
    """Groups whose predicted gradient change meets the threshold (ties select)."""
    rhs = selection_threshold(state.history, cfg.xi, cfg.alpha, cfg.workers,
                              cfg.window, cfg.group_size)
    diffs = state.stale_params - theta
    lhs = np.asarray(group_smoothness) ** 2 * np.einsum("gd,gd->g", diffs, diffs)
    return set(np.flatnonzero(lhs >= rhs).tolist())


def commit_iteration(state: LazyState, theta_new: np.ndarray, theta_old: np.ndarray,
                     selected, fresh_gradients) -> LazyState:
    """Fold one finished iteration into the state.

    Selected groups pin their stale parameter to the iterate they computed at
    and cache the gradient the server recovered; others are untouched. The
    squared step norm is pushed regardless (the ring evicts beyond D).
    """
    for g in sorted(selected):
        if g not in fresh_gradients:
            raise ValueError(f"selected group {g} has no fresh gradient")
        state.stale_params[g] = theta_old
        state.stale_gradients[g] = fresh_gradients[g]
        state.has_gradient[g] = True
    step = theta_new - theta_old
    state.history.append(float(step @ step))
    return state
