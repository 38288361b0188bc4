"""Covariance-preserving partitions for arbitrary data in the unit ball.

Pipeline: project onto the top-p eigenvectors of E[XX^T], give every heavy
point (mass >= 3/k) its own cell, grid the remaining points into cubes of side
gamma, keep light cubes (mass <= k^-1/2) as single cells, and split the other
cubes by randomly rounding each point to a corner of the inflated cube
x0 + {+-3 gamma/2}^p. The resulting partition of the projected support is
pulled back to the original support.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .covariance import (
    frobenius_distance,
    weighted_covariance,
    weighted_second_moment,
)
from .distribution import EmpiricalDistribution, normalize_support
from .partition import BudgetExceededError, CovarianceReport, Partition, covariance_loss

log = logging.getLogger(__name__)

MAX_PRACTICAL_DIM = 12
MAX_ENUMERATION_DIM = 20
CUBE_TOL = 1e-12
# decimals used to decide that two projected points coincide
FIBER_DECIMALS = 12


@dataclass(frozen=True)
class GeneralConfig:
    k: int
    c: float = 1.0 / 121.0
    seed: int = 0
    practical_mode: bool = True
    heavy_threshold_override: Optional[float] = None
    case1_threshold_override: Optional[float] = None
    audit: bool = False

    def __post_init__(self):
        if self.k < 3:
            raise ValueError(f"k must be at least 3, got {self.k}")
        if not 0 < self.c < 1.0 / 120.0:
            raise ValueError(f"c must lie in (0, 1/120), got {self.c}")

    @property
    def dim(self) -> int:
        """Reduced dimension p."""
        if self.practical_mode:
            return max(1, min(MAX_PRACTICAL_DIM, int(math.log2(self.k)) // 2))
        return max(1, int(self.c * math.log(self.k)))

    @property
    def gamma(self) -> float:
        """Cube side length for the reduced dimension in force."""
        p, logk = self.dim, math.log(self.k)
        if self.practical_mode:
            return 1.0 / math.sqrt(p * logk)
        return math.exp(-logk / (4 * p)) / math.sqrt(p)

    @property
    def heavy_threshold(self) -> float:
        if self.heavy_threshold_override is not None:
            return self.heavy_threshold_override
        return 3.0 / self.k

    @property
    def case1_threshold(self) -> float:
        if self.case1_threshold_override is not None:
            return self.case1_threshold_override
        return self.k ** -0.5


# -- dimension reduction ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class PCAReduction:
    """Top-t eigenbasis of E[XX^T] and the fibers of X -> PX."""

    basis: np.ndarray  # (m, t), columns are eigenvectors
    eigenvalues: np.ndarray  # all m, descending
    fiber: np.ndarray  # support index of X -> support index of PX
    measured_tail: float

    @property
    def t(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def pull_back(self, part: Partition) -> Partition:
        """Partition of the X-support induced by a partition of the PX-support."""
        return Partition.from_labels(part.labels[self.fiber], part.k_budget)


def sorted_eigh(s: np.ndarray, tie_tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs in descending order with a deterministic basis.

    Each eigenvector's first nonzero coordinate is made positive; eigenvalues
    equal within ``tie_tol`` are ordered by lexicographically largest vector.
    """
    vals, vecs = np.linalg.eigh(s)
    vals, vecs = vals[::-1], vecs[:, ::-1].copy()
    for j in range(vecs.shape[1]):
        nz = np.flatnonzero(np.abs(vecs[:, j]) > 1e-14)
        if nz.size and vecs[nz[0], j] < 0:
            vecs[:, j] *= -1
    order = list(range(len(vals)))
    i = 0
    while i < len(vals):
        j = i
        while j + 1 < len(vals) and vals[i] - vals[j + 1] <= tie_tol:
            j += 1
        if j > i:
            block = sorted(range(i, j + 1), key=lambda c: tuple(vecs[:, c]), reverse=True)
            order[i:j + 1] = block
        i = j + 1
    return vals[order], vecs[:, order]


def pca_reduce(dist: EmpiricalDistribution, t: int) -> tuple[EmpiricalDistribution, PCAReduction]:
    """Project onto the top-``t`` eigenspace of the (uncentered) second moment.

    Returns the law of PX in eigenbasis coordinates and the reduction handle.
    The tail ||(I-P) E[XX^T] (I-P)||_F is at most 1/sqrt(t).
    """
    m = dist.dim
    if not 1 <= t <= m:
        raise ValueError(f"t must be in 1..{m}, got {t}")
    s = weighted_second_moment(dist.points, dist.weights)
    if not np.all(np.isfinite(s)):
        raise ValueError("second moment has non-finite entries")
    vals, vecs = sorted_eigh(s)
    basis = vecs[:, :t]
    q = np.eye(m) - basis @ basis.T
    tail = float(np.linalg.norm(q @ s @ q))
    coords = dist.points @ basis
    keys = np.round(coords, FIBER_DECIMALS) + 0.0
    # group identical projections; representative coordinates are the first member's
    uniq, first, fiber = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    fiber = fiber.reshape(-1)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    reps = coords[first[order]]
    w = np.zeros(len(order))
    np.add.at(w, rank[fiber], dist.weights)
    norms = np.linalg.norm(reps, axis=1)
    over = norms > 1.0
    reps[over] /= norms[over, None]
    projected = normalize_support(reps, w, None, None)
    return projected, PCAReduction(basis, vals, rank[fiber], tail)


# -- heavy points and cubes --------------------------------------------------


def split_heavy(dist: EmpiricalDistribution, k: int, threshold: Optional[float] = None):
    """Indices of points with mass >= 3/k (or ``threshold``) and the rest."""
    if k < 3:
        raise ValueError("k must be at least 3")
    thr = 3.0 / k if threshold is None else threshold
    heavy = dist.weights >= thr
    return np.flatnonzero(heavy), np.flatnonzero(~heavy)


@dataclass(eq=False)
class CubeCell:
    index: tuple  # integer grid coordinates
    anchor: np.ndarray  # cube center x0
    side: float
    members: np.ndarray  # support indices
    mass: float

    def contains(self, x: np.ndarray, tol: float = CUBE_TOL) -> bool:
        return bool(np.all(np.abs(x - self.anchor) <= self.side / 2 + tol))


def decompose_cubes(
    dist: EmpiricalDistribution, gamma: float, indices=None
) -> list[CubeCell]:
    """Assign points to half-open grid boxes [j gamma, (j+1) gamma)^p.

    Only nonempty cubes are returned, ordered by grid index.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    idx = np.arange(dist.size) if indices is None else np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        return []
    grid = np.floor(dist.points[idx] / gamma).astype(np.int64)
    uniq, inverse = np.unique(grid, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    cells = []
    for c, g in enumerate(uniq):
        members = idx[inverse == c]
        cells.append(
            CubeCell(
                index=tuple(int(v) for v in g),
                anchor=(g + 0.5) * gamma,
                side=gamma,
                members=members,
                mass=float(dist.weights[members].sum()),
            )
        )
    return cells


def classify_cubes(cells: list[CubeCell], k: int, threshold: Optional[float] = None):
    """Split cubes into (light, intermediate) by mass; a tie counts as light."""
    thr = k ** -0.5 if threshold is None else threshold
    case1 = [c for c in cells if c.mass <= thr]
    case2 = [c for c in cells if c.mass > thr]
    return case1, case2


# -- randomized rounding ---------------------------------------------------


def corner_probabilities(points: np.ndarray, anchor: np.ndarray, gamma: float) -> np.ndarray:
    """Per-coordinate probability of rounding up to x0 + 3 gamma / 2.

    Chosen so that the rounded corner has mean exactly x; lies in [1/3, 2/3]
    for points inside the cube.
    """
    return (points - anchor + 1.5 * gamma) / (3.0 * gamma)


def sample_corners(
    points: np.ndarray, anchor: np.ndarray, gamma: float, rng: np.random.Generator, size=None
) -> np.ndarray:
    """Boolean sign patterns (True = upper corner); shape ``size + points.shape``."""
    prob = corner_probabilities(points, anchor, gamma)
    shape = points.shape if size is None else tuple(np.atleast_1d(size)) + points.shape
    return rng.random(shape) < prob


def corner_points(signs: np.ndarray, anchor: np.ndarray, gamma: float) -> np.ndarray:
    return anchor + np.where(signs, 1.5 * gamma, -1.5 * gamma)


def round_cube(
    cell: CubeCell,
    conditional: EmpiricalDistribution,
    gamma: float,
    rng: np.random.Generator,
    k: Optional[int] = None,
) -> tuple[Partition, dict]:
    """Cluster the points of one cube by their randomly rounded corner.

    ``conditional`` is the law of X given the cube (member order). Returns a
    partition of the members and a diagnostics dict; a member mass above
    k^-1/3 is logged rather than rejected.
    """
    pts = conditional.points
    lo = np.abs(pts - cell.anchor) - gamma / 2
    if np.any(lo > CUBE_TOL):
        raise ValueError(f"cube {cell.index}: member lies outside the cube")
    info: dict[str, Any] = {"cube": list(cell.index)}
    if k is not None:
        bound = k ** (-1.0 / 3.0)
        heaviest = float(conditional.weights.max())
        info["max_conditional_mass"] = heaviest
        info["weight_bound_ok"] = heaviest <= bound
        if heaviest > bound:
            log.warning(
                "cube %s: conditional mass %.4g exceeds k^(-1/3) = %.4g", cell.index, heaviest, bound
            )
    signs = sample_corners(pts, cell.anchor, gamma, rng)
    keys = map(bytes, signs.astype(np.uint8))
    part = Partition.from_labels(keys, 2 ** pts.shape[1])
    info["clusters"] = part.cell_count
    return part, info


@dataclass(frozen=True, eq=False)
class IdealizedRounding:
    """Corner masses q_w and conditional means z_w averaged over the rounding."""

    signs: np.ndarray  # (2^p, p) booleans
    q: np.ndarray
    z: np.ndarray

    def second_moment(self) -> np.ndarray:
        return weighted_second_moment(self.z, self.q)

    def covariance(self) -> np.ndarray:
        return weighted_covariance(self.z, self.q)


def idealized_moments(
    cell: CubeCell, conditional: EmpiricalDistribution, gamma: float
) -> IdealizedRounding:
    """Exact q_w and z_w for every corner by enumerating all 2^p patterns."""
    pts, w = conditional.points, conditional.weights
    p = pts.shape[1]
    if p > MAX_ENUMERATION_DIM:
        raise ValueError(f"2^{p} corners exceed the enumeration limit 2^{MAX_ENUMERATION_DIM}")
    prob = np.clip(corner_probabilities(pts, cell.anchor, gamma), 0.0, 1.0)
    # rows: corners in binary order with coordinate 0 as the most significant bit
    signs = ((np.arange(2**p)[:, None] >> np.arange(p - 1, -1, -1)) & 1).astype(bool)
    like = np.ones((1, len(pts)))
    # the coordinate processed last ends up as the most significant bit
    for i in reversed(range(p)):
        like = np.concatenate([like * (1 - prob[:, i]), like * prob[:, i]], axis=0)
    mu = like * w  # mu[w, x] = P[X = x] P[w_x = w]
    q = mu.sum(axis=1)
    z = (mu @ pts) / q[:, None]
    return IdealizedRounding(signs, q, z)


def rounding_bound(gamma: float, p: int) -> float:
    """36 gamma^2 sqrt(p): worst-case second-moment gap of idealized rounding."""
    return 36.0 * gamma**2 * math.sqrt(p)


def rounding_audit(cell: CubeCell, conditional: EmpiricalDistribution, gamma: float) -> dict:
    ideal = idealized_moments(cell, conditional, gamma)
    cov_gap = frobenius_distance(
        weighted_covariance(conditional.points, conditional.weights), ideal.covariance()
    )
    raw_gap = frobenius_distance(
        weighted_second_moment(conditional.points, conditional.weights), ideal.second_moment()
    )
    p = conditional.dim
    return {
        "cube": list(cell.index),
        "covariance_gap": cov_gap,
        "second_moment_gap": raw_gap,
        "bound": rounding_bound(gamma, p),
        "min_q": float(ideal.q.min()),
    }


# -- assembly ----------------------------------------------------------------


@dataclass
class _Plan:
    gamma: float
    case1: list
    case2: list
    coarsenings: int = 0
    demoted: int = 0


def _plan_cubes(projected, light, gamma, cfg, p, n_heavy) -> _Plan:
    """Choose the cube grid so that the worst-case cluster count fits in k.

    A Case II cube can emit at most min(2^p, |members|) clusters. While the
    worst case overflows, the grid side is doubled; once every coordinate fits
    in two boxes (side >= 2) the lightest Case II cubes are collapsed instead.
    """
    budget = cfg.k - n_heavy
    plan = _Plan(gamma, [], [])
    while True:
        cells = decompose_cubes(projected, plan.gamma, light)
        plan.case1, plan.case2 = classify_cubes(cells, cfg.k, cfg.case1_threshold)
        caps = [min(2**p, len(c.members)) for c in plan.case2]
        worst = len(plan.case1) + sum(caps)
        if worst <= budget:
            return plan
        if plan.gamma >= 2.0:
            break
        plan.gamma *= 2.0
        plan.coarsenings += 1
    order = sorted(range(len(plan.case2)), key=lambda i: (plan.case2[i].mass, plan.case2[i].index))
    keep = set(range(len(plan.case2)))
    for i in order:
        if worst <= budget:
            break
        worst -= caps[i] - 1
        keep.discard(i)
        plan.demoted += 1
    plan.case1 = plan.case1 + [plan.case2[i] for i in sorted(set(range(len(plan.case2))) - keep)]
    plan.case2 = [plan.case2[i] for i in sorted(keep)]
    if worst > budget:
        raise BudgetExceededError(f"cannot fit {worst} clusters into a budget of {budget}")
    return plan


def build_partition(
    dist: EmpiricalDistribution, cfg: GeneralConfig
) -> tuple[Partition, CovarianceReport, dict]:
    """Partition ``dist`` into at most ``cfg.k`` cells with small covariance loss."""
    k = cfg.k
    diag: dict[str, Any] = {"budget_k": k, "practical_mode": cfg.practical_mode}
    if dist.size <= k:
        part = Partition.discrete(dist.size, k)
        diag.update(shortcut="discrete", clusters_emitted=dist.size, pca_tail=0.0, pca_tail_bound=1.0)
        return part, covariance_loss(dist, part), diag

    p = min(cfg.dim, dist.dim)
    gamma0 = cfg.gamma
    projected, reduction = pca_reduce(dist, p)
    heavy, light = split_heavy(projected, k, cfg.heavy_threshold)
    plan = _plan_cubes(projected, light, gamma0, cfg, p, len(heavy))
    gamma = plan.gamma

    labels = np.full(projected.size, -1, dtype=np.int64)
    next_label = 0
    for cell in plan.case1:
        labels[cell.members] = next_label
        next_label += 1
    cube_info = []
    audits = []
    for cube_no, cell in enumerate(plan.case2):
        cond = projected.restrict(cell.members)
        rng = np.random.default_rng([cfg.seed % 2**64, cube_no])
        sub, info = round_cube(cell, cond, gamma, rng, k)
        labels[cell.members] = next_label + sub.labels
        next_label += sub.cell_count
        cube_info.append(info)
        if cfg.audit and p <= MAX_ENUMERATION_DIM:
            audits.append(rounding_audit(cell, cond, gamma))
    for i in heavy:
        labels[i] = next_label
        next_label += 1
    assert np.all(labels >= 0)

    reduced = Partition.from_labels(labels, k)
    part = reduction.pull_back(reduced)
    if part.cell_count > k:
        raise BudgetExceededError(f"{part.cell_count} cells exceed k = {k}")
    report = covariance_loss(dist, part)
    diag.update(
        p=p,
        gamma_initial=gamma0,
        gamma=gamma,
        coarsenings=plan.coarsenings,
        demoted_case2=plan.demoted,
        heavy=int(len(heavy)),
        cubes_case1=len(plan.case1),
        cubes_case2=len(plan.case2),
        clusters_emitted=part.cell_count,
        pca_tail=reduction.measured_tail,
        pca_tail_bound=1.0 / math.sqrt(p),
        weight_bound_violations=sum(1 for i in cube_info if not i.get("weight_bound_ok", True)),
        case2_clusters=[i["clusters"] for i in cube_info],
    )
    if cfg.audit:
        diag["rounding_audit"] = audits
    return part, report, diag
