"""Moments of empirical distributions: covariance, raw moments, tensors."""

from __future__ import annotations

import numpy as np

from .distribution import EmpiricalDistribution

PSD_TOL = 1e-9
MAX_TENSOR_ORDER = 4
MAX_TENSOR_ENTRIES = 10**7


def weighted_covariance(points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Two-pass centered covariance of a weighted point cloud."""
    mu = weights @ points
    centered = points - mu
    cov = (centered * weights[:, None]).T @ centered
    return 0.5 * (cov + cov.T)


def weighted_second_moment(points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    s = (points * weights[:, None]).T @ points
    return 0.5 * (s + s.T)


def covariance(dist: EmpiricalDistribution) -> np.ndarray:
    """Covariance matrix E[(X - EX)(X - EX)^T] computed exactly."""
    return weighted_covariance(dist.points, dist.weights)


def second_moment(dist: EmpiricalDistribution) -> np.ndarray:
    """Uncentered second moment E[X X^T]."""
    return weighted_second_moment(dist.points, dist.weights)


def frobenius_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def min_eigenvalue(a: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return float(np.linalg.eigvalsh(a)[0])


def is_psd(a: np.ndarray, tol: float = PSD_TOL) -> bool:
    return min_eigenvalue(a) >= -tol


def weighted_moment_tensor(points: np.ndarray, weights: np.ndarray, order: int) -> np.ndarray:
    """E[X^{(x)d}] for a weighted point cloud, accumulated in chunks."""
    if not 1 <= order <= MAX_TENSOR_ORDER:
        raise ValueError(f"tensor order must be in 1..{MAX_TENSOR_ORDER}, got {order}")
    n, m = points.shape
    if m**order > MAX_TENSOR_ENTRIES:
        raise ValueError(f"moment tensor would have {m**order} entries (limit {MAX_TENSOR_ENTRIES})")
    if order == 1:
        return weights @ points
    out = np.zeros(m**order)
    chunk = max(1, MAX_TENSOR_ENTRIES // (4 * m ** (order - 1)))
    for lo in range(0, n, chunk):
        pts = points[lo:lo + chunk]
        # rows of `power` are vec(x^{(x)(order-1)}) for each point
        power = pts
        for _ in range(order - 2):
            power = (power[:, :, None] * pts[:, None, :]).reshape(len(pts), -1)
        out += ((power * weights[lo:lo + chunk, None]).T @ pts).reshape(-1)
    return out.reshape((m,) * order)


def moment_tensor(dist: EmpiricalDistribution, d: int) -> np.ndarray:
    """Order-``d`` raw moment tensor; entry (i1..id) is E[X(i1)...X(id)]."""
    return weighted_moment_tensor(dist.points, dist.weights, d)
