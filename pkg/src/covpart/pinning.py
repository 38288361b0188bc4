"""Partitioning Boolean data by pinning a random set of coordinates.

For X supported on {+-1}^m / sqrt(m), pick t uniformly from {0, ..., floor(log2 k)},
a uniformly random t-subset S of the coordinates, and split the support by the
sign pattern of X on S. The expected covariance loss of this scheme is at most
3 / sqrt(log2 k); a draw is accepted when its loss is at most 9 / sqrt(log2 k),
which happens with probability at least 2/3.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .distribution import EmpiricalDistribution
from .partition import CovarianceReport, Partition, covariance_loss

BOOLEAN_TOL = 1e-12
AUDIT_ENUMERATION_LIMIT = 10**6
AUDIT_MIN_SAMPLES = 10**4


class NotBooleanError(ValueError):
    """Support points are not all in {+-1/sqrt(m)}^m."""


@dataclass(frozen=True)
class PinningConfig:
    k: int
    seed: int = 0
    max_retries: int = 16

    def __post_init__(self):
        if self.k < 3:
            raise ValueError(f"k must be at least 3, got {self.k}")
        if self.max_retries < 1:
            raise ValueError("max_retries must be at least 1")

    @property
    def levels(self) -> int:
        """Largest pinning-set size, floor(log2 k)."""
        return self.k.bit_length() - 1

    @property
    def expectation_bound(self) -> float:
        return 3.0 / math.sqrt(self.levels)

    @property
    def threshold(self) -> float:
        return 9.0 / math.sqrt(self.levels)


def check_boolean(dist: EmpiricalDistribution) -> None:
    scale = 1.0 / math.sqrt(dist.dim)
    if not np.all(np.abs(np.abs(dist.points) - scale) <= BOOLEAN_TOL):
        raise NotBooleanError(f"support is not contained in {{+-1/sqrt({dist.dim})}}^{dist.dim}")


def sign_partition(dist: EmpiricalDistribution, coords, k_budget: int) -> Partition:
    """Cells are the sign patterns of the support on ``coords``."""
    coords = list(coords)
    if not coords:
        return Partition.trivial(dist.size, k_budget)
    keys = map(bytes, (dist.points[:, coords] > 0).astype(np.uint8))
    return Partition.from_labels(keys, k_budget)


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed % 2**64, stream])


def draw_pinning_set(m: int, levels: int, rng: np.random.Generator) -> tuple[int, list[int]]:
    t = int(rng.integers(0, levels + 1))
    s = sorted(int(i) for i in rng.choice(m, size=t, replace=False))
    return t, s


def pin_partition(
    dist: EmpiricalDistribution, cfg: PinningConfig
) -> tuple[Partition, CovarianceReport, int]:
    """Pin a random coordinate set, retrying until the loss is acceptable.

    Attempt ``a`` draws its randomness from ``(seed, a)`` only. If no attempt
    is accepted within ``max_retries`` the lowest-loss attempt is returned and
    the report is flagged ``accepted = False``.
    """
    check_boolean(dist)
    m, levels = dist.dim, cfg.levels
    if m <= levels or dist.size <= cfg.k:
        # at most k support points: each one its own cell
        part = Partition.discrete(dist.size, cfg.k)
        report = covariance_loss(dist, part)
        report.extra.update(
            t=None, S=None, attempts=1, accepted=True, threshold=cfg.threshold, discrete=True
        )
        return part, report, 1

    best = None
    for attempt in range(cfg.max_retries):
        t, s = draw_pinning_set(m, levels, _rng(cfg.seed, attempt))
        part = sign_partition(dist, s, cfg.k)
        report = covariance_loss(dist, part)
        if best is None or report.loss_frobenius < best[1].loss_frobenius:
            best = (part, report, t, s)
        if report.loss_frobenius <= cfg.threshold:
            break
    part, report, t, s = best
    attempts = attempt + 1
    report.extra.update(
        t=t,
        S=s,
        attempts=attempts,
        accepted=report.loss_frobenius <= cfg.threshold,
        threshold=cfg.threshold,
        discrete=False,
    )
    return part, report, attempts


def expected_pinning_loss(dist: EmpiricalDistribution, k: int, shortcut: bool = True) -> float:
    """Exact mean loss over the uniform choice of (t, S), by enumeration.

    With ``shortcut`` (what :func:`pin_partition` does) supports of at most k
    points, or dimensions m <= floor(log2 k), lose nothing. Without it the
    enumeration always runs and draws with t > m pin every coordinate.
    """
    check_boolean(dist)
    levels = PinningConfig(k).levels
    m = dist.dim
    if shortcut and (m <= levels or dist.size <= k):
        return 0.0
    total = 0.0
    for t in range(levels + 1):
        losses = [
            covariance_loss(dist, sign_partition(dist, s, k)).loss_frobenius
            for s in itertools.combinations(range(m), min(t, m))
        ]
        total += math.fsum(losses) / len(losses)
    return total / (levels + 1)


def _offdiag_sq_conditional_cov(signs: np.ndarray, weights: np.ndarray, coords) -> float:
    """E over X_S of sum_{i != j} Cov(X_i, X_j | X_S)^2 for +-1 variables."""
    if coords:
        keys = map(bytes, (signs[:, list(coords)] > 0).astype(np.uint8))
        labels = Partition.from_labels(keys).labels
    else:
        labels = np.zeros(len(signs), dtype=np.int64)
    total = 0.0
    for c in range(int(labels.max()) + 1):
        idx = labels == c
        w = weights[idx]
        mass = w.sum()
        x = signs[idx]
        mu = (w @ x) / mass
        cen = x - mu
        cov = (cen * (w / mass)[:, None]).T @ cen
        total += mass * (np.sum(cov**2) - np.sum(np.diag(cov) ** 2))
    return float(total)


def pinning_expectation_audit(
    dist: EmpiricalDistribution,
    k: int,
    sample: bool = False,
    n_samples: int = AUDIT_MIN_SAMPLES,
    seed: int = 0,
) -> float:
    """Average squared off-diagonal conditional covariance of the +-1 coordinates.

    The average runs over t uniform in {0, ..., l}, l = floor(log2 k), and S a
    uniform t-subset; when t exceeds m every coordinate is pinned. The value is
    for the unnormalized +-1 variables and should be compared with
    8 m^2 log(2) / l. Enumeration is used when at most 10^6 subsets are
    involved; otherwise ``sample=True`` switches to Monte Carlo.
    """
    check_boolean(dist)
    m = dist.dim
    if k < 2:
        raise ValueError("k must be at least 2")
    levels = k.bit_length() - 1
    signs = np.sign(dist.points)
    w = dist.weights
    if m == 1:
        return 0.0
    n_subsets = sum(math.comb(m, min(t, m)) for t in range(levels + 1))
    if n_subsets <= AUDIT_ENUMERATION_LIMIT:
        per_t = []
        for t in range(levels + 1):
            vals = [
                _offdiag_sq_conditional_cov(signs, w, s)
                for s in itertools.combinations(range(m), min(t, m))
            ]
            per_t.append(math.fsum(vals) / len(vals))
        return math.fsum(per_t) / (levels + 1)
    if not sample:
        raise ValueError(
            f"{n_subsets} pinning sets exceed the enumeration budget; pass sample=True"
        )
    rng = np.random.default_rng(seed)
    n_samples = max(n_samples, AUDIT_MIN_SAMPLES)
    vals = []
    for _ in range(n_samples):
        t = min(int(rng.integers(0, levels + 1)), m)
        s = sorted(rng.choice(m, size=t, replace=False).tolist())
        vals.append(_offdiag_sq_conditional_cov(signs, w, s))
    return math.fsum(vals) / n_samples


def audit_bound(m: int, k: int) -> float:
    """Right-hand side 8 m^2 log(2) / floor(log2 k)."""
    return 8.0 * m * m * math.log(2) / (k.bit_length() - 1)
