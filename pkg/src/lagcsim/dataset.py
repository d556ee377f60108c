"""Synthetic least-squares workloads with controlled smoothness, and storage maps.

Each partition holds a design matrix X_s and noiseless targets y_s = X_s theta*,
rescaled so that the partition loss ||X_s theta - y_s||^2 has a prescribed
gradient-Lipschitz constant L_s = 2 lambda_max(X_s^T X_s). Because targets are
noiseless the optimal loss is exactly zero, which pins the optimality-gap
origin without solving the least-squares problem.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataGenerationError

_POWER_TOL = 1e-10
_POWER_MAX_ITERS = 10_000
_GENERATION_RETRIES = 5


def paper_smoothness_law(s_count: int, base: float = 1.3) -> list[float]:
    """Per-partition smoothness constants (base^(s-1) + 1)^2, s = 1..S."""
    return [(base ** (s - 1) + 1.0) ** 2 for s in range(1, s_count + 1)]


def dominant_eigenvalue(a: np.ndarray, tol: float = _POWER_TOL,
                        max_iters: int = _POWER_MAX_ITERS) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Deterministic start vector; stops when the Rayleigh quotient is stable
    to ``tol`` relative.
    """
    d = a.shape[0]
    v = 1.0 + 1e-3 * np.arange(d)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iters):
        w = a @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        lam_new = float(v @ (a @ v))
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1.0):
            return lam_new
        lam = lam_new
    raise DataGenerationError("power iteration did not converge")


@dataclass(frozen=True)
class Partition:
    """One data partition: rows of the design matrix plus matching targets."""

    index: int
    x: np.ndarray
    y: np.ndarray
    smoothness: float

    def __post_init__(self):
        if self.x.ndim != 2 or self.y.shape != (self.x.shape[0],):
            raise ConfigError("partition shapes inconsistent")
        if self.smoothness <= 0:
            raise ConfigError("smoothness must be positive")

    @property
    def n_rows(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class Dataset:
    """Collection of partitions plus the global curvature constants.

    ``smoothness`` is 2 lambda_max of the summed Gram matrix and ``pl_constant``
    is 2 lambda_min; both are measured, not assumed. ``optimal_loss`` is zero
    by construction.
    """

    partitions: tuple[Partition, ...]
    theta_star: np.ndarray
    smoothness: float          # global L
    pl_constant: float         # mu
    optimal_loss: float = 0.0

    @property
    def s_count(self) -> int:
        return len(self.partitions)

    @property
    def dim(self) -> int:
        return self.theta_star.shape[0]

    @property
    def partition_smoothness(self) -> np.ndarray:
        return np.array([p.smoothness for p in self.partitions])


def rescale_to_smoothness(x: np.ndarray, l_target: float) -> np.ndarray:
    """Scale a design matrix so that 2 lambda_max(X^T X) equals ``l_target``."""
    if l_target <= 0:
        raise ConfigError("target smoothness must be positive")
    lam = dominant_eigenvalue(x.T @ x)
    if lam <= 0.0:
        raise ConfigError("cannot rescale a zero design matrix")
    return x * np.sqrt(l_target / (2.0 * lam))


def generate_dataset(d: int, n_per_partition: int, s_count: int,
                     l_targets, seed: int = 0) -> Dataset:
    """Generate S partitions of i.i.d. normal rows rescaled to given smoothness.

    Retries with fresh seeds (bounded) if the summed Gram matrix comes out
    numerically rank deficient, which would break the PL constant.
    """
    l_targets = [float(v) for v in l_targets]
    if len(l_targets) != s_count:
        raise ConfigError(f"expected {s_count} smoothness targets, got {len(l_targets)}")
    if s_count * n_per_partition <= d:
        raise ConfigError("need S * n_per_partition > d for a positive PL constant")

    for attempt in range(_GENERATION_RETRIES):
        rng = np.random.default_rng(seed + attempt)
        theta_star = rng.standard_normal(d)
        partitions = []
        gram = np.zeros((d, d))
        for s in range(s_count):
            x = rescale_to_smoothness(rng.standard_normal((n_per_partition, d)), l_targets[s])
            partitions.append(Partition(index=s + 1, x=x, y=x @ theta_star,
                                        smoothness=l_targets[s]))
            gram += x.T @ x
        l_global = 2.0 * dominant_eigenvalue(gram)
        mu = 2.0 * float(np.linalg.eigvalsh(gram)[0])
        if mu > 1e-12 * l_global:
            return Dataset(partitions=tuple(partitions), theta_star=theta_star,
                           smoothness=l_global, pl_constant=mu)
    raise DataGenerationError(
        f"rank-deficient workload after {_GENERATION_RETRIES} attempts (mu too small)")


@dataclass(frozen=True)
class Assignment:
    """Cyclic worker -> batch storage map within groups.

    Workers are split into G = M / M_G groups. Within a group the partition
    is split into M_G batches and local worker m stores batches
    [m + i] mod M_G for i = 0..r_G-1, with r_G = min(r, M_G). Batch (g, j)
    is identified with global batch index g * M_G + j.
    """

    workers: int                # M
    group_size: int             # M_G
    redundancy: int             # r
    storage: tuple[tuple[int, ...], ...] = field(repr=False, default=())

    @property
    def group_count(self) -> int:
        return self.workers // self.group_size

    @property
    def group_redundancy(self) -> int:
        return min(self.redundancy, self.group_size)

    def group_of(self, worker: int) -> int:
        return worker // self.group_size

    def stored_batches(self, worker: int) -> tuple[int, ...]:
        return self.storage[worker]


def build_assignment(workers: int, group_size: int, redundancy: int) -> Assignment:
    """Build the cyclic per-group storage map (all indices 0-based)."""
    if workers < 1 or group_size < 1:
        raise ConfigError("M and M_G must be positive")
    if workers % group_size != 0:
        raise ConfigError(f"M_G={group_size} must be an integer divisor of M={workers}")
    if not 1 <= redundancy <= workers:
        raise ConfigError(f"need 1 <= r <= M, got r={redundancy}")
    r_g = min(redundancy, group_size)
    storage = []
    for worker in range(workers):
        group = worker // group_size
        local = worker % group_size
        storage.append(tuple(group * group_size + (local + i) % group_size
                             for i in range(r_g)))
    return Assignment(workers=workers, group_size=group_size, redundancy=redundancy,
                      storage=tuple(storage))


def dataset_from_config(cfg: dict) -> Dataset:
    """Build a dataset from a key-value mapping (the ``dataset`` config section).

    Keys: d, n_per_partition, partitions, smoothness ('paper' or explicit list),
    seed (optional). Unknown keys are rejected.
    """
    allowed = {"d", "n_per_partition", "partitions", "smoothness", "seed"}
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown dataset config keys: {sorted(unknown)}")
    for key in ("d", "n_per_partition", "partitions", "smoothness"):
        if key not in cfg:
            raise ConfigError(f"dataset config missing key {key!r}")
    s_count = int(cfg["partitions"])
    smoothness = cfg["smoothness"]
    if smoothness == "paper":
        l_targets = paper_smoothness_law(s_count)
    elif isinstance(smoothness, (list, tuple)):
        l_targets = [float(v) for v in smoothness]
    else:
        raise ConfigError("smoothness must be 'paper' or an explicit list")
    return generate_dataset(int(cfg["d"]), int(cfg["n_per_partition"]), s_count,
                            l_targets, seed=int(cfg.get("seed", 0)))


def export_partitions_csv(dataset: Dataset, out_dir) -> list[Path]:
    """Write one CSV per partition: n_s rows, d+1 columns, last column = target."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for part in dataset.partitions:
        path = out_dir / f"partition_{part.index:03d}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row, target in zip(part.x, part.y):
                writer.writerow([repr(float(v)) for v in row] + [repr(float(target))])
        paths.append(path)
    return paths
