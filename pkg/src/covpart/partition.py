"""Partitions of a support, conditional expectations and covariance loss."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .covariance import (
    frobenius_distance,
    weighted_covariance,
    weighted_moment_tensor,
    weighted_second_moment,
)
from .distribution import EmpiricalDistribution


class PartitionError(ValueError):
    """Raised for labels that do not describe a valid partition."""


class BudgetExceededError(RuntimeError):
    """A construction produced more cells than its budget allows."""


@dataclass(frozen=True, eq=False)
class Partition:
    """Cell labels 0..cell_count-1 (no gaps) for each support point."""

    labels: np.ndarray
    k_budget: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or not np.issubdtype(labels.dtype, np.integer):
            raise PartitionError("labels must be a 1-d integer array")
        uniq = np.unique(labels)
        if not np.array_equal(uniq, np.arange(len(uniq))):
            raise PartitionError("labels must be 0..cell_count-1 without gaps")
        labels = labels.astype(np.int64, copy=True)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        if self.cell_count > self.k_budget:
            raise BudgetExceededError(
                f"partition has {self.cell_count} cells but the budget is {self.k_budget}"
            )

    @classmethod
    def from_labels(cls, labels: Iterable, k_budget: Optional[int] = None) -> "Partition":
        """Relabel arbitrary hashable cell keys to 0..c-1 in first-seen order."""
        mapping: dict = {}
        out = [mapping.setdefault(lab, len(mapping)) for lab in labels]
        arr = np.asarray(out, dtype=np.int64)
        return cls(arr, len(mapping) if k_budget is None else int(k_budget))

    @classmethod
    def discrete(cls, n: int, k_budget: Optional[int] = None) -> "Partition":
        return cls(np.arange(n, dtype=np.int64), n if k_budget is None else k_budget)

    @classmethod
    def trivial(cls, n: int, k_budget: int = 1) -> "Partition":
        return cls(np.zeros(n, dtype=np.int64), k_budget)

    @property
    def cell_count(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def size(self) -> int:
        return len(self.labels)

    def cells(self) -> list[np.ndarray]:
        order = np.argsort(self.labels, kind="stable")
        bounds = np.searchsorted(self.labels[order], np.arange(self.cell_count + 1))
        return [order[bounds[i]:bounds[i + 1]] for i in range(self.cell_count)]

    def refines(self, other: "Partition") -> bool:
        """True when every cell of ``self`` lies inside a cell of ``other``."""
        if self.size != other.size:
            return False
        seen: dict[int, int] = {}
        for a, b in zip(self.labels.tolist(), other.labels.tolist()):
            if seen.setdefault(a, b) != b:
                return False
        return True

    def to_json(self) -> dict:
        return {"labels": self.labels.tolist(), "k_budget": self.k_budget}

    @classmethod
    def from_json(cls, obj: dict) -> "Partition":
        return cls(np.asarray(obj["labels"], dtype=np.int64), int(obj["k_budget"]))


@dataclass(frozen=True, eq=False)
class ConditionalDistribution:
    """Values of Y = E[X | F] on each cell together with the cell masses."""

    cell_means: np.ndarray
    cell_weights: np.ndarray

    def mean(self) -> np.ndarray:
        return self.cell_weights @ self.cell_means


@dataclass(eq=False)
class CovarianceReport:
    sigma_x: np.ndarray
    sigma_y: np.ndarray
    loss_frobenius: float
    loss_raw_moment: float
    cell_count: int
    min_cell_mass: float
    tensor_losses: dict[int, float] = field(default_factory=dict)
    extra: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "loss_frobenius": self.loss_frobenius,
            "loss_raw_moment": self.loss_raw_moment,
            "cell_count": self.cell_count,
            "min_cell_mass": self.min_cell_mass,
            "tensor_losses": {str(d): v for d, v in sorted(self.tensor_losses.items())},
            "sigma_x": self.sigma_x.tolist(),
            "sigma_y": self.sigma_y.tolist(),
        }
        out.update(self.extra)
        return out


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    """One synthetic row per input record plus the cell each came from."""

    rows: np.ndarray
    anonymity_level: int
    source_cells: np.ndarray
    cell_sizes: np.ndarray


def _check(dist: EmpiricalDistribution, part: Partition) -> None:
    if part.size != dist.size:
        raise PartitionError(f"partition labels {part.size} points, distribution has {dist.size}")


def conditional_expectation(dist: EmpiricalDistribution, part: Partition) -> ConditionalDistribution:
    """Weighted mean and total mass of every cell."""
    _check(dist, part)
    c = part.cell_count
    mass = np.bincount(part.labels, weights=dist.weights, minlength=c)
    sums = np.zeros((c, dist.dim))
    np.add.at(sums, part.labels, dist.points * dist.weights[:, None])
    return ConditionalDistribution(sums / mass[:, None], mass)


def residual_second_moment(dist: EmpiricalDistribution, part: Partition) -> np.ndarray:
    """E[(X - Y)(X - Y)^T] computed point by point."""
    cond = conditional_expectation(dist, part)
    r = dist.points - cond.cell_means[part.labels]
    return weighted_second_moment(r, dist.weights)


def covariance_loss(
    dist: EmpiricalDistribution,
    part: Partition,
    tensor_orders: Optional[Sequence[int]] = None,
) -> CovarianceReport:
    """Covariance lost by replacing X with E[X | cells of ``part``]."""
    cond = conditional_expectation(dist, part)
    sx = weighted_covariance(dist.points, dist.weights)
    sy = weighted_covariance(cond.cell_means, cond.cell_weights)
    raw = frobenius_distance(
        weighted_second_moment(dist.points, dist.weights),
        weighted_second_moment(cond.cell_means, cond.cell_weights),
    )
    tensors = {}
    for d in tensor_orders or ():
        tx = weighted_moment_tensor(dist.points, dist.weights, d)
        ty = weighted_moment_tensor(cond.cell_means, cond.cell_weights, d)
        tensors[int(d)] = float(np.sqrt(np.sum((tx - ty) ** 2)))
    return CovarianceReport(
        sigma_x=sx,
        sigma_y=sy,
        loss_frobenius=frobenius_distance(sx, sy),
        loss_raw_moment=raw,
        cell_count=part.cell_count,
        min_cell_mass=float(cond.cell_weights.min()),
        tensor_losses=tensors,
    )


def cell_sizes(dist: EmpiricalDistribution, part: Partition) -> np.ndarray:
    """Number of input records in each cell."""
    _check(dist, part)
    return np.bincount(part.labels, weights=dist.record_counts(), minlength=part.cell_count).astype(np.int64)


def equalize_min_cell_size(dist: EmpiricalDistribution, part: Partition, min_count: int) -> Partition:
    """Merge undersized cells until every cell holds at least ``min_count`` records.

    The smallest cell (lowest index on ties) is repeatedly merged into the cell
    whose mean is nearest to its own (lowest index on ties).
    """
    sizes = cell_sizes(dist, part).astype(float)
    total = int(sizes.sum())
    if min_count > total:
        raise PartitionError(f"cannot give every cell {min_count} records out of {total}")
    if min_count <= 1 or sizes.min() >= min_count:
        return part
    cond = conditional_expectation(dist, part)
    mass = cond.cell_weights.copy()
    sums = cond.cell_means * mass[:, None]
    alive = np.ones(part.cell_count, dtype=bool)
    parent = np.arange(part.cell_count)
    while True:
        live = np.flatnonzero(alive)
        small = live[np.argmin(sizes[live])]
        if sizes[small] >= min_count:
            break
        others = live[live != small]
        means = sums[others] / mass[others, None]
        dist2 = np.sum((means - sums[small] / mass[small]) ** 2, axis=1)
        target = others[np.argmin(dist2)]
        sizes[target] += sizes[small]
        mass[target] += mass[small]
        sums[target] += sums[small]
        alive[small] = False
        parent[parent == small] = target
    return Partition.from_labels(parent[part.labels], part.k_budget)


def synthetic_data(dist: EmpiricalDistribution, part: Partition) -> SyntheticDataset:
    """Replace every input record by the mean of its cell."""
    sizes = cell_sizes(dist, part)
    cond = conditional_expectation(dist, part)
    rows = dist.record_rows()
    cells = part.labels[rows]
    return SyntheticDataset(
        rows=cond.cell_means[cells],
        anonymity_level=int(sizes.min()),
        source_cells=cells,
        cell_sizes=sizes,
    )
