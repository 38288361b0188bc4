"""Partitions that preserve covariance under conditional expectation."""

__version__ = "0.1.0"

from .covariance import covariance, frobenius_distance, min_eigenvalue, moment_tensor, second_moment
from .distribution import (
    DistributionError,
    EmpiricalDistribution,
    from_rows,
    rescale_to_unit_ball,
    snap_to_grid,
)
from .partition import (
    BudgetExceededError,
    ConditionalDistribution,
    CovarianceReport,
    Partition,
    SyntheticDataset,
    conditional_expectation,
    covariance_loss,
    equalize_min_cell_size,
    synthetic_data,
)
from .pinning import PinningConfig, pin_partition, pinning_expectation_audit
from .general import GeneralConfig, build_partition, pca_reduce
from .baselines import brute_force_optimal, epsnet_partition, kmeans_partition
from .runner import ALGORITHMS, run_algorithm
