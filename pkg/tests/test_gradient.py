"""Exact gradient/loss evaluation and additivity identities."""

import numpy as np
import pytest

from lagcsim.gradient import (optimality_gap, param_vector, partial_gradient,
                              partition_loss, total_gradient, total_loss)


class TestParamVector:
    def test_accepts_finite(self):
        v = param_vector([1.0, -2.0])
        assert v.dtype == np.float64

    def test_rejects_nan_and_inf(self):
        with pytest.raises(ValueError):
            param_vector([1.0, np.nan])
        with pytest.raises(ValueError):
            param_vector([np.inf, 0.0])
        with pytest.raises(ValueError):
            param_vector(np.ones((2, 2)))


class TestPartialGradient:
    def test_zero_at_optimum(self, make_dataset):
        ds = make_dataset()
        for part in ds.partitions[:3]:
            assert np.allclose(partial_gradient(part.x, part.y, ds.theta_star), 0.0,
                               atol=1e-9)

    def test_identity_case(self):
        grad = partial_gradient(np.eye(2), np.zeros(2), np.array([1.0, 2.0]))
        assert np.allclose(grad, [2.0, 4.0])

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        x, y = rng.standard_normal((20, 5)), rng.standard_normal(20)
        theta = rng.standard_normal(5)
        grad = partial_gradient(x, y, theta)
        h = 1e-6
        for k in range(5):
            e = np.zeros(5)
            e[k] = h
            fd = (partition_loss(x, y, theta + e) - partition_loss(x, y, theta - e)) / (2 * h)
            assert grad[k] == pytest.approx(fd, rel=1e-5)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            partial_gradient(np.ones((3, 2)), np.ones(3), np.ones(4))

    def test_batch_additivity(self, make_dataset):
        # Gradient of stacked batches = sum of batch gradients, to 1e-12 rel.
        ds = make_dataset()
        theta = np.random.default_rng(8).standard_normal(ds.dim)
        group = ds.partitions[0:4]
        stacked_x = np.vstack([p.x for p in group])
        stacked_y = np.concatenate([p.y for p in group])
        whole = partial_gradient(stacked_x, stacked_y, theta)
        parts = sum(partial_gradient(p.x, p.y, theta) for p in group)
        assert np.allclose(whole, parts, rtol=1e-12, atol=1e-12 * np.linalg.norm(whole))


class TestTotalLoss:
    def test_zero_at_optimum(self, make_dataset):
        ds = make_dataset()
        assert total_loss(ds, ds.theta_star) == pytest.approx(0.0, abs=1e-12)
        assert optimality_gap(ds, ds.theta_star) == pytest.approx(0.0, abs=1e-12)

    def test_identity_case(self, make_dataset):
        loss = partition_loss(np.eye(2), np.zeros(2), np.full(2, 1.0))
        assert loss == pytest.approx(2.0)

    def test_total_is_sum_of_partitions(self, make_dataset):
        ds = make_dataset()
        theta = np.zeros(ds.dim)
        per_part = [partition_loss(p.x, p.y, theta) for p in ds.partitions]
        assert total_loss(ds, theta) == pytest.approx(sum(per_part), rel=1e-12)

    def test_gap_nonnegative(self, make_dataset):
        ds = make_dataset()
        rng = np.random.default_rng(9)
        for _ in range(20):
            assert optimality_gap(ds, rng.standard_normal(ds.dim)) >= 0.0

    def test_total_gradient_additivity(self, make_dataset):
        ds = make_dataset()
        theta = np.random.default_rng(10).standard_normal(ds.dim)
        total = total_gradient(ds, theta)
        parts = sum(partial_gradient(p.x, p.y, theta) for p in ds.partitions)
        assert np.allclose(total, parts, rtol=1e-12, atol=1e-12 * np.linalg.norm(total))

    def test_gap_monotone_under_exact_gd(self, make_dataset):
        ds = make_dataset()
        alpha = 1.0 / (2.0 * ds.smoothness)
        theta = np.zeros(ds.dim)
        prev = optimality_gap(ds, theta)
        for _ in range(100):
            theta = theta - alpha * total_gradient(ds, theta)
            gap = optimality_gap(ds, theta)
            assert gap <= prev * (1 + 1e-12)
            prev = gap
