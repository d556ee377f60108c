"""Linear gradient coding within a group.

Worker m of a group holds batch gradients on the cyclic support
{[m+i] mod M_G : i = 0..r_G-1} and uploads one linear combination of them
(row m of the coefficient matrix B). The server recovers the summed group
gradient from any F >= M_G - r_G + 1 uploads by solving a^T B_U = 1^T for
the realized upload subset U.

Rows are drawn (seeded) from a common F-dimensional subspace chosen to
contain the all-ones vector: the nullspace of a random (M_G - F) x M_G
matrix H whose rows are orthogonal to all-ones. Each row is then the
nullspace's intersection with the worker's cyclic support pattern. Any F
linearly independent rows of such a matrix span the whole subspace and
hence the all-ones vector, which makes every F-subset decodable with
probability one; construction is verified and reseeded on the rare
ill-conditioned draw. Full replication (r_G = M_G) uses the all-ones
matrix, so any single upload is already the group gradient.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import ConfigError, DecodeError

_MIN_COEF = 0.05
_RESIDUAL_TOL = 1e-10
_SOLUTION_NORM_CAP = 1e6
_BUILD_RETRIES = 5
_EXHAUSTIVE_VERIFY_LIMIT = 12
_SAMPLED_SUBSETS = 200


@dataclass
class EncodingMatrix:
    """Per-group combination coefficients plus the decode threshold F."""

    matrix: np.ndarray                 # (M_G, M_G), row m supported cyclically
    group_size: int                    # M_G
    group_redundancy: int              # r_G
    threshold: int                     # F
    _decode_cache: dict = field(default_factory=dict, repr=False)

    @cached_property
    def support(self) -> np.ndarray:
        """(M_G, r_G) int array: stored local batch columns per local worker."""
        m_g, r_g = self.group_size, self.group_redundancy
        return np.array([[(m + i) % m_g for i in range(r_g)] for m in range(m_g)],
                        dtype=np.int64)

    def decode_coefficients(self, worker_ids) -> np.ndarray:
        """Combination weights a with a^T B_U = 1^T for an upload subset.

        ``worker_ids`` are local (0-based) indices; the minimum-norm solution
        is cached per sorted subset.
        """
        key = tuple(sorted(worker_ids))
        if len(key) != self.threshold:
            raise DecodeError(f"expected {self.threshold} uploads, got {len(key)} ({key})")
        cached = self._decode_cache.get(key)
        if cached is not None:
            return cached
        b_u = self.matrix[list(key)]
        coeffs, *_ = np.linalg.lstsq(b_u.T, np.ones(self.group_size), rcond=None)
        residual = b_u.T @ coeffs - 1.0
        if np.max(np.abs(residual)) > _RESIDUAL_TOL or np.linalg.norm(coeffs) > _SOLUTION_NORM_CAP:
            raise DecodeError(f"upload subset {key} cannot recover the group gradient")
        self._decode_cache[key] = coeffs
        return coeffs


def _cyclic_random_matrix(m_g: int, r_g: int, f: int, rng: np.random.Generator) -> np.ndarray:
    """Random banded matrix whose rows share one F-dim subspace containing 1."""
    if f == m_g:
        # Decoding may use all rows; any nonsingular banded matrix works.
        b = np.zeros((m_g, m_g))
        for m in range(m_g):
            for i in range(r_g):
                coef = 0.0
                while abs(coef) < _MIN_COEF:
                    coef = rng.uniform(-1.0, 1.0)
                b[m, (m + i) % m_g] = coef
        return b
    h = rng.standard_normal((m_g - f, m_g))
    h -= h.mean(axis=1, keepdims=True)        # rows orthogonal to all-ones
    b = np.zeros((m_g, m_g))
    for m in range(m_g):
        window = [(m + i) % m_g for i in range(r_g)]
        # Nullspace of H restricted to the support: dim r_G - (M_G - F) >= 1.
        _, sing, vt = np.linalg.svd(h[:, window])
        null_dim = r_g - (m_g - f)
        basis = vt[r_g - null_dim:]
        row = basis[0] if null_dim == 1 else rng.standard_normal(null_dim) @ basis
        scale = np.max(np.abs(row))
        if scale > 0:
            row = row / scale
        b[m, window] = row
    return b


def _verify_decodable(enc: EncodingMatrix, rng: np.random.Generator) -> bool:
    m_g, f = enc.group_size, enc.threshold
    if m_g <= _EXHAUSTIVE_VERIFY_LIMIT:
        subsets = combinations(range(m_g), f)
    else:
        subsets = {tuple(sorted(rng.choice(m_g, size=f, replace=False)))
                   for _ in range(_SAMPLED_SUBSETS)}
    try:
        for subset in subsets:
            enc.decode_coefficients(subset)
    except DecodeError:
        return False
    return True


def build_encoding_matrix(group_size: int, group_redundancy: int, seed: int = 0,
                          threshold: int | None = None) -> EncodingMatrix:
    """Construct a decodable cyclic encoding matrix for one group.

    ``threshold`` defaults to the minimal admissible F = M_G - r_G + 1.
    """
    if not 1 <= group_redundancy <= group_size:
        raise ConfigError(f"need 1 <= r_G <= M_G, got r_G={group_redundancy}, M_G={group_size}")
    min_f = group_size - group_redundancy + 1
    f = min_f if threshold is None else threshold
    if not min_f <= f <= group_size:
        raise ConfigError(f"F={f} violates M_G - r_G + 1 <= F <= M_G "
                          f"(M_G={group_size}, r_G={group_redundancy})")

    if group_redundancy == group_size:
        # Full replication: every worker can ship the whole group gradient.
        return EncodingMatrix(matrix=np.ones((group_size, group_size)),
                              group_size=group_size, group_redundancy=group_redundancy,
                              threshold=f)

    for attempt in range(_BUILD_RETRIES):
        rng = np.random.default_rng(seed + attempt)
        enc = EncodingMatrix(matrix=_cyclic_random_matrix(group_size, group_redundancy,
                                                          f, rng),
                             group_size=group_size, group_redundancy=group_redundancy,
                             threshold=f)
        if _verify_decodable(enc, rng):
            return enc
    raise ConfigError(f"could not build a decodable code for M_G={group_size}, "
                      f"r_G={group_redundancy} after {_BUILD_RETRIES} seeds")


def encode(enc: EncodingMatrix, worker: int, batch_gradients: dict) -> np.ndarray:
    """Worker upload: sum of B[m, j] * g_j over the worker's stored batches.

    ``batch_gradients`` maps local batch index -> gradient vector and must
    cover exactly the worker's support.
    """
    row = enc.matrix[worker]
    out = None
    for j in enc.support[worker]:
        j = int(j)
        if j not in batch_gradients:
            raise ValueError(f"worker {worker} is missing the gradient of batch {j}")
        term = row[j] * batch_gradients[j]
        out = term if out is None else out + term
    return out


def decode(enc: EncodingMatrix, worker_ids, encoded) -> np.ndarray:
    """Recover the summed group gradient from F encoded uploads."""
    key = tuple(sorted(worker_ids))
    coeffs = enc.decode_coefficients(key)
    order = np.argsort(np.asarray(worker_ids))
    out = np.zeros_like(np.asarray(encoded[0], dtype=float))
    for weight, pos in zip(coeffs, order):
        out += weight * encoded[int(pos)]
    return out


def colex_rank(subset) -> int:
    """Rank of a sorted index subset in colexicographic order."""
    return sum(math.comb(int(c), i + 1) for i, c in enumerate(subset))


def decode_table(enc: EncodingMatrix) -> np.ndarray:
    """Decode coefficients for every F-subset, indexed by colex rank.

    Used by the compiled simulation loop, which ranks the realized upload
    subset instead of hashing it.
    """
    n = math.comb(enc.group_size, enc.threshold)
    table = np.zeros((n, enc.threshold))
    for subset in combinations(range(enc.group_size), enc.threshold):
        table[colex_rank(subset)] = enc.decode_coefficients(subset)
    return table


def save_matrix_csv(enc: EncodingMatrix, path) -> Path:
    """Dump the coefficient matrix for inspection."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in enc.matrix:
            writer.writerow([repr(float(v)) for v in row])
    return path
