"""Reference partitioners: weighted k-means, volumetric grid net, exhaustive search."""

from __future__ import annotations

import math

import numpy as np

from .distribution import EmpiricalDistribution
from .general import GeneralConfig, pca_reduce
from .partition import Partition, covariance_loss

BRUTE_FORCE_MAX_POINTS = 10
BRUTE_FORCE_BUDGET = 10**6


def _kmeans_pp(points, weights, k, rng):
    n = len(points)
    centers = [points[rng.choice(n, p=weights)]]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        score = weights * d2
        if score.sum() <= 0:
            break
        j = rng.choice(n, p=score / score.sum())
        centers.append(points[j])
        d2 = np.minimum(d2, np.sum((points - points[j]) ** 2, axis=1))
    return np.array(centers)


def kmeans_partition(dist: EmpiricalDistribution, k: int, seed: int = 0, iters: int = 100) -> Partition:
    """Weighted Lloyd iterations from a k-means++ start."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if dist.size <= k:
        return Partition.discrete(dist.size, k)
    pts, w = dist.points, dist.weights
    rng = np.random.default_rng(seed % 2**64)
    centers = _kmeans_pp(pts, w, k, rng)
    labels = None
    for _ in range(iters):
        d2 = np.sum((pts[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new = np.argmin(d2, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(len(centers)):
            mask = labels == j
            if np.any(mask):
                centers[j] = (w[mask] @ pts[mask]) / w[mask].sum()
    return Partition.from_labels(labels, k)


def grid_resolution(k: int, p: int) -> int:
    """Bins per axis: the largest power of two r with r^p <= k."""
    return 2 ** ((k.bit_length() - 1) // p)


def epsnet_partition(dist: EmpiricalDistribution, k: int, practical_mode: bool = True) -> Partition:
    """Quantize the PCA-reduced data on a uniform grid over [-1, 1]^p.

    The grid has r^p <= k boxes with r a power of two, so increasing k only
    refines the partition. Uses the same reduced dimension as the general
    clusterer.
    """
    cfg = GeneralConfig(k, practical_mode=practical_mode)
    if dist.size <= k:
        return Partition.discrete(dist.size, k)
    p = min(cfg.dim, dist.dim)
    projected, reduction = pca_reduce(dist, p)
    r = grid_resolution(k, p)
    bins = np.clip(np.floor((projected.points + 1.0) * r / 2.0), 0, r - 1).astype(np.int64)
    keys = map(bytes, bins.astype(np.int32))
    return reduction.pull_back(Partition.from_labels(keys, k))


def restricted_growth_strings(n: int, k: int):
    """All labelings of n items into at most k blocks, in lexicographic order."""
    if n == 0:
        yield ()
        return
    labels = [0] * n

    def rec(i, used):
        if i == n:
            yield tuple(labels)
            return
        for lab in range(min(used + 1, k)):
            labels[i] = lab
            yield from rec(i + 1, max(used, lab + 1))

    yield from rec(1, 1)


def stirling2(n: int, j: int) -> int:
    return sum((-1) ** i * math.comb(j, i) * (j - i) ** n for i in range(j + 1)) // math.factorial(j)


def brute_force_optimal(dist: EmpiricalDistribution, k: int) -> tuple[Partition, float]:
    """Exhaustive minimum of the covariance loss over partitions into <= k cells."""
    n = dist.size
    if n > BRUTE_FORCE_MAX_POINTS:
        raise ValueError(f"support size {n} exceeds the exhaustive-search limit {BRUTE_FORCE_MAX_POINTS}")
    count = sum(stirling2(n, j) for j in range(1, min(k, n) + 1))
    if count > BRUTE_FORCE_BUDGET:
        raise ValueError(f"{count} partitions exceed the search budget {BRUTE_FORCE_BUDGET}")
    best_labels, best_loss = None, math.inf
    for labels in restricted_growth_strings(n, k):
        part = Partition(np.asarray(labels, dtype=np.int64), k)
        loss = covariance_loss(dist, part).loss_frobenius
        if loss < best_loss - 1e-15:
            best_labels, best_loss = part, loss
    return best_labels, best_loss
