"""Dataset generation: smoothness control, curvature constants, storage maps."""

import numpy as np
import pytest

from lagcsim.dataset import (Assignment, build_assignment, dataset_from_config,
                             dominant_eigenvalue, export_partitions_csv,
                             generate_dataset, paper_smoothness_law,
                             rescale_to_smoothness)
from lagcsim.errors import ConfigError
from lagcsim.gradient import partial_gradient, partition_loss, total_gradient, total_loss


def _lambda_max_dense(x):
    return float(np.linalg.eigvalsh(x.T @ x)[-1])


class TestRescale:
    def test_identity_unchanged(self):
        x = np.eye(2)
        assert np.allclose(rescale_to_smoothness(x, 2.0), x)

    def test_identity_scaled(self):
        x = np.eye(2)
        assert np.allclose(rescale_to_smoothness(x, 8.0), 2.0 * x)

    def test_random_matrix_hits_target(self):
        # The s = 2 value of the geometric law: (1.3 + 1)^2.
        target = (1.3 + 1.0) ** 2
        x = rescale_to_smoothness(np.random.default_rng(0).standard_normal((50, 10)), target)
        assert 2.0 * _lambda_max_dense(x) == pytest.approx(target, rel=1e-8)

    def test_zero_matrix_rejected(self):
        with pytest.raises(ConfigError):
            rescale_to_smoothness(np.zeros((4, 3)), 1.0)


def test_dominant_eigenvalue_matches_dense():
    rng = np.random.default_rng(1)
    for _ in range(5):
        x = rng.standard_normal((30, 8))
        a = x.T @ x
        assert dominant_eigenvalue(a) == pytest.approx(float(np.linalg.eigvalsh(a)[-1]),
                                                       rel=1e-8)


class TestGenerateDataset:
    def test_partition_smoothness_and_targets(self):
        ds = generate_dataset(d=5, n_per_partition=20, s_count=4,
                              l_targets=[2.0, 3.0, 4.0, 5.0], seed=2)
        for part, target in zip(ds.partitions, [2.0, 3.0, 4.0, 5.0]):
            assert 2.0 * _lambda_max_dense(part.x) == pytest.approx(target, rel=1e-8)
            assert np.allclose(part.y, part.x @ ds.theta_star)

    def test_global_smoothness_bounded_by_sum(self):
        ds = generate_dataset(d=5, n_per_partition=20, s_count=4,
                              l_targets=[2.0, 3.0, 4.0, 5.0], seed=2)
        gram = sum(p.x.T @ p.x for p in ds.partitions)
        assert ds.smoothness == pytest.approx(2.0 * float(np.linalg.eigvalsh(gram)[-1]),
                                              rel=1e-8)
        assert ds.smoothness <= 14.0 + 1e-9
        assert 0.0 < ds.pl_constant <= ds.smoothness

    def test_single_partition_trivial_scale(self):
        ds = generate_dataset(d=2, n_per_partition=10, s_count=1, l_targets=[2.0], seed=3)
        assert 2.0 * _lambda_max_dense(ds.partitions[0].x) == pytest.approx(2.0, rel=1e-8)

    def test_preconditions(self):
        with pytest.raises(ConfigError):
            generate_dataset(d=10, n_per_partition=2, s_count=3, l_targets=[1, 1, 1])
        with pytest.raises(ConfigError):
            generate_dataset(d=2, n_per_partition=10, s_count=2, l_targets=[1.0])

    def test_deterministic_per_seed(self):
        a = generate_dataset(d=4, n_per_partition=8, s_count=3, l_targets=[1, 2, 3], seed=9)
        b = generate_dataset(d=4, n_per_partition=8, s_count=3, l_targets=[1, 2, 3], seed=9)
        assert np.array_equal(a.partitions[2].x, b.partitions[2].x)
        assert np.array_equal(a.theta_star, b.theta_star)


class TestDatasetProperties:
    """Gradient, smoothness and PL inequalities on generated data."""

    def test_gradient_matches_finite_differences(self, make_dataset):
        ds = make_dataset()
        part = ds.partitions[3]
        rng = np.random.default_rng(4)
        for _ in range(10):
            theta = rng.standard_normal(ds.dim)
            grad = partial_gradient(part.x, part.y, theta)
            h = 1e-6
            for k in rng.choice(ds.dim, size=5, replace=False):
                e = np.zeros(ds.dim)
                e[k] = h
                fd = (partition_loss(part.x, part.y, theta + e)
                      - partition_loss(part.x, part.y, theta - e)) / (2 * h)
                assert grad[k] == pytest.approx(fd, rel=1e-5, abs=1e-7)

    def test_partition_smoothness_inequality(self, make_dataset):
        ds = make_dataset()
        rng = np.random.default_rng(5)
        for _ in range(100):
            t1 = rng.standard_normal(ds.dim)
            t2 = rng.standard_normal(ds.dim)
            for part in (ds.partitions[0], ds.partitions[-1]):
                lhs = np.linalg.norm(partial_gradient(part.x, part.y, t1)
                                     - partial_gradient(part.x, part.y, t2))
                assert lhs <= part.smoothness * np.linalg.norm(t1 - t2) * (1 + 1e-9)

    def test_pl_inequality(self, make_dataset):
        ds = make_dataset()
        rng = np.random.default_rng(6)
        for _ in range(100):
            theta = rng.standard_normal(ds.dim)
            gap = total_loss(ds, theta) - ds.optimal_loss
            grad_sq = float(np.sum(total_gradient(ds, theta) ** 2))
            assert 2.0 * ds.pl_constant * gap <= grad_sq * (1 + 1e-9)


class TestAssignment:
    def test_single_group_cyclic(self):
        a = build_assignment(3, 3, 2)
        assert a.stored_batches(0) == (0, 1)
        assert a.stored_batches(1) == (1, 2)
        assert a.stored_batches(2) == (2, 0)

    def test_full_replication_groups(self):
        a = build_assignment(6, 2, 2)
        assert a.group_count == 3
        for worker in range(6):
            group = a.group_of(worker)
            assert sorted(a.stored_batches(worker)) == [2 * group, 2 * group + 1]

    def test_disjoint_layout(self):
        a = build_assignment(4, 1, 1)
        assert [a.stored_batches(w) for w in range(4)] == [(0,), (1,), (2,), (3,)]

    def test_coverage_and_replication(self):
        for m, m_g, r in [(12, 4, 3), (12, 6, 2), (8, 8, 5), (10, 2, 7)]:
            a = build_assignment(m, m_g, r)
            r_g = a.group_redundancy
            for g in range(a.group_count):
                counts = {}
                for w in range(g * m_g, (g + 1) * m_g):
                    for b in a.stored_batches(w):
                        assert g * m_g <= b < (g + 1) * m_g   # only own group's batches
                        counts[b] = counts.get(b, 0) + 1
                assert sorted(counts) == list(range(g * m_g, (g + 1) * m_g))
                assert all(c == r_g for c in counts.values())

    def test_invalid_configs(self):
        with pytest.raises(ConfigError):
            build_assignment(20, 7, 4)
        with pytest.raises(ConfigError):
            build_assignment(4, 2, 0)
        with pytest.raises(ConfigError):
            build_assignment(4, 2, 5)


class TestConfigAndExport:
    def test_config_roundtrip(self):
        ds = dataset_from_config({"d": 6, "n_per_partition": 10, "partitions": 3,
                                  "smoothness": [1.0, 2.0, 3.0], "seed": 11})
        assert ds.s_count == 3
        assert ds.partitions[1].smoothness == 2.0

    def test_paper_law(self):
        law = paper_smoothness_law(3)
        assert law == pytest.approx([4.0, (1.3 + 1) ** 2, (1.69 + 1) ** 2])
        ds = dataset_from_config({"d": 4, "n_per_partition": 8, "partitions": 3,
                                  "smoothness": "paper"})
        assert ds.partitions[2].smoothness == pytest.approx((1.69 + 1) ** 2)

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError):
            dataset_from_config({"d": 4, "n_per_partition": 8, "partitions": 2,
                                 "smoothness": "paper", "rows": 5})
        with pytest.raises(ConfigError):
            dataset_from_config({"d": 4, "partitions": 2, "smoothness": "paper"})

    def test_csv_export(self, tmp_path):
        ds = generate_dataset(d=3, n_per_partition=5, s_count=2, l_targets=[1.0, 2.0],
                              seed=0)
        paths = export_partitions_csv(ds, tmp_path)
        assert len(paths) == 2
        rows = np.loadtxt(paths[0], delimiter=",")
        assert rows.shape == (5, 4)
        assert np.allclose(rows[:, :3], ds.partitions[0].x)
        assert np.allclose(rows[:, 3], ds.partitions[0].y)
