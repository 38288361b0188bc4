"""Uniform entry point over all partitioning algorithms."""

from __future__ import annotations

from typing import Any, Optional, Sequence

from .baselines import epsnet_partition, kmeans_partition
from .distribution import EmpiricalDistribution
from .general import GeneralConfig, build_partition
from .partition import CovarianceReport, Partition, covariance_loss
from .pinning import PinningConfig, pin_partition

ALGORITHMS = ("pinning", "general", "kmeans", "epsnet")


def run_algorithm(
    algo: str,
    dist: EmpiricalDistribution,
    k: int,
    seed: int = 0,
    *,
    c: Optional[float] = None,
    paper_mode: bool = False,
    audit: bool = False,
    max_retries: int = 16,
    kmeans_iters: int = 100,
    tensor_orders: Sequence[int] = (),
) -> tuple[Partition, CovarianceReport, dict[str, Any]]:
    """Run ``algo`` and return its partition, loss report and diagnostics."""
    diag: dict[str, Any] = {}
    if algo == "pinning":
        part, report, _ = pin_partition(dist, PinningConfig(k, seed, max_retries))
    elif algo == "general":
        kw = {} if c is None else {"c": c}
        cfg = GeneralConfig(k, seed=seed, practical_mode=not paper_mode, audit=audit, **kw)
        part, report, diag = build_partition(dist, cfg)
    elif algo == "kmeans":
        part = kmeans_partition(dist, k, seed, kmeans_iters)
        report = covariance_loss(dist, part)
    elif algo == "epsnet":
        part = epsnet_partition(dist, k, practical_mode=not paper_mode)
        report = covariance_loss(dist, part)
    else:
        raise ValueError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGORITHMS)}")
    if tensor_orders:
        extra = report.extra
        report = covariance_loss(dist, part, tensor_orders)
        report.extra.update(extra)
    return part, report, diag
