import math

import numpy as np
import pytest

from covpart import (
    Partition,
    conditional_expectation,
    covariance,
    covariance_loss,
    equalize_min_cell_size,
    from_rows,
    synthetic_data,
)
from covpart.partition import BudgetExceededError, PartitionError, cell_sizes, residual_second_moment

from conftest import random_dist


def loop_cell_means(points, weights, labels):
    out = {}
    for x, w, lab in zip(points, weights, labels):
        s, m = out.get(lab, (np.zeros(len(x)), 0.0))
        out[lab] = (s + w * np.asarray(x), m + w)
    return {lab: (s / m, m) for lab, (s, m) in out.items()}


THREE = [(1, 0), (-1, 0), (0, 1)]
SQUARE = [(1, 0), (0, 1), (-1, 0), (0, -1)]


def test_partition_validation():
    with pytest.raises(PartitionError):
        Partition(np.array([0, 2]), 3)
    with pytest.raises(BudgetExceededError):
        Partition(np.array([0, 1, 2]), 2)
    p = Partition.from_labels(["b", "a", "b"], 4)
    assert p.labels.tolist() == [0, 1, 0] and p.cell_count == 2


def test_partition_json_roundtrip():
    p = Partition.from_labels([3, 3, 1, 0], 5)
    q = Partition.from_json(p.to_json())
    assert q.labels.tolist() == p.labels.tolist() and q.k_budget == 5


def test_discrete_partition_gives_y_equal_x(rng):
    d = random_dist(rng, 10, 3)
    cond = conditional_expectation(d, Partition.discrete(d.size))
    np.testing.assert_allclose(cond.cell_means, d.points)
    assert covariance_loss(d, Partition.discrete(d.size)).loss_frobenius <= 1e-12


def test_trivial_partition_gives_mean(rng):
    d = random_dist(rng, 10, 3)
    cond = conditional_expectation(d, Partition.trivial(d.size))
    np.testing.assert_allclose(cond.cell_means[0], d.mean(), atol=1e-15)
    assert cond.cell_weights[0] == pytest.approx(1.0, abs=1e-12)
    rep = covariance_loss(d, Partition.trivial(d.size))
    assert rep.loss_frobenius == pytest.approx(np.linalg.norm(covariance(d)), abs=1e-12)


def test_three_point_conditional_means():
    d = from_rows(THREE)
    part = Partition(np.array([0, 0, 1]), 2)
    cond = conditional_expectation(d, part)
    oracle = loop_cell_means(d.points, d.weights, part.labels)
    for lab in (0, 1):
        np.testing.assert_allclose(cond.cell_means[lab], oracle[lab][0], atol=1e-15)
        assert cond.cell_weights[lab] == pytest.approx(oracle[lab][1], abs=1e-15)
    np.testing.assert_allclose(cond.cell_means, [[0, 0], [0, 1]], atol=1e-15)
    np.testing.assert_allclose(cond.cell_weights, [2 / 3, 1 / 3], atol=1e-15)


def test_three_point_loss_matches_residual_identity():
    d = from_rows(THREE)
    part = Partition(np.array([0, 0, 1]), 2)
    rep = covariance_loss(d, part)
    # residuals are (+-1, 0) with mass 1/3 each: E(X-Y)(X-Y)^T = diag(2/3, 0)
    assert rep.loss_frobenius == pytest.approx(2 / 3, abs=1e-15)
    assert rep.loss_frobenius == pytest.approx(np.linalg.norm(residual_second_moment(d, part)), abs=1e-15)
    assert rep.loss_raw_moment == pytest.approx(rep.loss_frobenius, abs=1e-15)


def test_antipodal_trivial_loss_is_one():
    rep = covariance_loss(from_rows([(1, 0), (-1, 0)]), Partition.trivial(2))
    assert rep.loss_frobenius == pytest.approx(1.0, abs=1e-15)


def test_label_count_mismatch():
    with pytest.raises(PartitionError):
        conditional_expectation(from_rows(THREE), Partition.trivial(2))


def sized_partition(sizes, m=2, seed=0):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.5, 0.5, size=(sum(sizes), m))
    labels = np.repeat(np.arange(len(sizes)), sizes)
    return from_rows(pts), Partition(labels, len(sizes))


def test_equalize_already_feasible():
    d, p = sized_partition([5, 5])
    assert equalize_min_cell_size(d, p, 3) is p


def test_equalize_forced_merge():
    d, p = sized_partition([9, 1])
    out = equalize_min_cell_size(d, p, 2)
    assert out.cell_count == 1 and cell_sizes(d, out).tolist() == [10]


def test_equalize_three_cells():
    d, p = sized_partition([4, 3, 1], seed=3)
    out = equalize_min_cell_size(d, p, 2)
    sizes = sorted(cell_sizes(d, out).tolist())
    assert sizes in ([3, 5], [4, 4])
    assert out.cell_count <= p.cell_count
    # the singleton went to the cell with the nearest mean
    cond = conditional_expectation(d, p)
    gaps = np.linalg.norm(cond.cell_means[:2] - cond.cell_means[2], axis=1)
    target = int(np.argmin(gaps))
    assert out.labels[-1] == out.labels[np.flatnonzero(p.labels == target)[0]]


def test_equalize_infeasible():
    d, p = sized_partition([2, 2])
    with pytest.raises(PartitionError):
        equalize_min_cell_size(d, p, 5)


def test_equalize_counts_duplicates():
    d = from_rows([(0.1, 0), (0.1, 0), (0.1, 0), (-0.5, 0)])
    p = Partition(np.array([0, 1]), 2)
    assert cell_sizes(d, p).tolist() == [3, 1]
    out = equalize_min_cell_size(d, p, 2)
    assert out.cell_count == 1


def test_synthetic_one_cell():
    d = from_rows([(0.1, 0.2), (0.3, -0.1), (-0.4, 0.0), (0.0, 0.5)])
    s = synthetic_data(d, Partition.trivial(4))
    assert s.anonymity_level == 4
    np.testing.assert_allclose(s.rows, np.tile(d.mean(), (4, 1)), atol=1e-15)


def test_synthetic_discrete():
    d = from_rows(SQUARE)
    s = synthetic_data(d, Partition.discrete(4))
    assert s.anonymity_level == 1
    np.testing.assert_array_equal(s.rows, d.points)


def test_synthetic_pairs():
    d = from_rows(SQUARE)
    s = synthetic_data(d, Partition(np.array([0, 0, 1, 1]), 2))
    np.testing.assert_allclose(s.rows, [(0.5, 0.5), (0.5, 0.5), (-0.5, -0.5), (-0.5, -0.5)], atol=1e-15)
    assert s.anonymity_level == 2
    assert s.source_cells.tolist() == [0, 0, 1, 1]


def test_synthetic_emits_one_row_per_record():
    d = from_rows([(0.2, 0), (0.2, 0), (-0.2, 0)])
    s = synthetic_data(d, Partition.discrete(d.size))
    assert len(s.rows) == 3 and s.anonymity_level == 1
    np.testing.assert_allclose(s.rows.mean(axis=0), [0.2 / 3, 0], atol=1e-15)


def test_synthetic_requires_uniform_weights():
    d = from_rows([(0.2, 0), (-0.2, 0)], [1, 2])
    with pytest.raises(ValueError):
        synthetic_data(d, Partition.discrete(2))


def test_tensor_losses_reported(rng):
    d = random_dist(rng, 15, 3)
    part = Partition.from_labels(rng.integers(0, 4, size=d.size))
    rep = covariance_loss(d, part, [2, 3])
    assert rep.tensor_losses[2] == pytest.approx(rep.loss_raw_moment, abs=1e-12)
    assert math.isfinite(rep.tensor_losses[3])
    js = rep.to_json()
    assert set(js["tensor_losses"]) == {"2", "3"}
