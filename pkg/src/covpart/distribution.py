"""Finitely supported distributions on the Euclidean unit ball."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

# norms in (1, 1 + NORM_CLAMP] are pulled back onto the sphere; larger ones are rejected
NORM_CLAMP = 1e-9
# already-normalized weights are left untouched so construction is idempotent
_WEIGHT_SUM_TOL = 1e-14


class DistributionError(ValueError):
    """Raised for malformed or out-of-ball input data."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    """Weighted finite support in R^m with every point inside the unit ball.

    ``points`` is an (n, m) array of distinct support points and ``weights``
    their probabilities. When the distribution was built from unweighted rows,
    ``counts`` holds how many input rows landed on each support point and
    ``row_map`` maps every input row to its support index; both are ``None``
    for explicitly weighted input.
    """

    points: np.ndarray
    weights: np.ndarray
    counts: Optional[np.ndarray] = None
    row_map: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def n_rows(self) -> int:
        """Number of input records (support size if no row bookkeeping)."""
        return self.size if self.row_map is None else len(self.row_map)

    @property
    def is_uniform(self) -> bool:
        """True when weights have count semantics (every record weighs 1/n)."""
        if self.counts is not None:
            return True
        return bool(np.all(self.weights == self.weights[0]))

    def record_counts(self) -> np.ndarray:
        """Per support point record multiplicity; requires uniform weights."""
        if self.counts is not None:
            return self.counts
        if not self.is_uniform:
            raise DistributionError("distribution does not have uniform record weights")
        return np.ones(self.size, dtype=np.int64)

    def record_rows(self) -> np.ndarray:
        return np.arange(self.size) if self.row_map is None else self.row_map

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def restrict(self, indices: Sequence[int]) -> "EmpiricalDistribution":
        """Conditional distribution on a subset of the support."""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size == 0:
            raise DistributionError("cannot restrict to an empty set of points")
        w = self.weights[idx]
        return EmpiricalDistribution(_frozen(self.points[idx].copy()), _frozen(w / math.fsum(w)))

    def shifted(self, v: Sequence[float]) -> "EmpiricalDistribution":
        """Translate every support point by ``v`` (must stay inside the ball)."""
        return from_rows(self.points + np.asarray(v, dtype=float), self.weights)


def _merge(points: np.ndarray, weights: np.ndarray, counts: Optional[np.ndarray]):
    """Merge bitwise-equal rows in first-occurrence order."""
    index: dict[bytes, int] = {}
    inverse = np.empty(len(points), dtype=np.int64)
    for i, row in enumerate(points):
        # +0.0 canonicalizes -0.0 so that signed zeros merge
        key = (row + 0.0).tobytes()
        j = index.setdefault(key, len(index))
        inverse[i] = j
    n = len(index)
    if n == len(points):
        return points, weights, counts, inverse
    first = np.full(n, -1, dtype=np.int64)
    for i in range(len(points) - 1, -1, -1):
        first[inverse[i]] = i
    merged_w = np.zeros(n)
    np.add.at(merged_w, inverse, weights)
    merged_c = None
    if counts is not None:
        merged_c = np.zeros(n, dtype=np.int64)
        np.add.at(merged_c, inverse, counts)
    return points[first], merged_w, merged_c, inverse


def normalize_support(points, weights, counts=None, row_map=None) -> EmpiricalDistribution:
    """Drop zero weights, merge duplicate rows and renormalize (no ball check)."""
    keep = weights > 0
    if not np.all(keep):
        if row_map is not None:
            raise DistributionError("zero-weight points cannot carry record bookkeeping")
        points, weights = points[keep], weights[keep]
        counts = None if counts is None else counts[keep]
    points, weights, counts, inverse = _merge(points, weights, counts)
    if row_map is None:
        row_map = inverse if counts is not None else None
    else:
        row_map = inverse[row_map]
    total = math.fsum(weights)
    if abs(total - 1.0) > _WEIGHT_SUM_TOL:
        weights = weights / total
    return EmpiricalDistribution(
        _frozen(points),
        _frozen(np.asarray(weights, dtype=float)),
        None if counts is None else _frozen(counts),
        None if row_map is None else _frozen(row_map),
    )


def _clamp_norms(points: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(points, axis=1)
    bad = norms > 1.0 + NORM_CLAMP
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DistributionError(
            f"row {i} has norm {norms[i]:.12g} > 1; rescale the data into the unit ball"
        )
    over = norms > 1.0
    if np.any(over):
        points = points.copy()
        points[over] /= norms[over, None]
    return points


def _as_matrix(rows) -> np.ndarray:
    if len(rows) == 0:
        raise DistributionError("no rows given")
    try:
        pts = np.array(rows, dtype=float)
    except ValueError as exc:
        raise DistributionError(f"rows must all have the same dimension ({exc})") from None
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[1] == 0:
        raise DistributionError("rows must be nonempty vectors of equal dimension")
    if not np.all(np.isfinite(pts)):
        raise DistributionError("rows contain non-finite values")
    return pts


def from_rows(rows, weights=None) -> EmpiricalDistribution:
    """Build a normalized distribution from data rows.

    Without ``weights`` every row gets mass 1/n and record bookkeeping is kept
    so downstream synthetic data can emit one output per input row.
    """
    pts = _clamp_norms(_as_matrix(rows))
    n = len(pts)
    if weights is None:
        return normalize_support(pts, np.full(n, 1.0 / n), np.ones(n, dtype=np.int64), None)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if len(w) != n:
        raise DistributionError(f"got {len(w)} weights for {n} rows")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise DistributionError("weights must be finite and nonnegative")
    if not math.fsum(w) > 0:
        raise DistributionError("weights sum to zero")
    return normalize_support(pts, w, None, None)


def rescale_to_unit_ball(rows, weights=None) -> tuple[EmpiricalDistribution, float]:
    """Divide all rows by the largest row norm when it exceeds 1."""
    pts = _as_matrix(rows)
    scale = float(np.max(np.linalg.norm(pts, axis=1)))
    if scale <= 1.0:
        scale = 1.0
    return from_rows(pts / scale, weights), scale


def snap_to_grid(dist: EmpiricalDistribution, epsilon: float) -> EmpiricalDistribution:
    """Round every coordinate to the nearest multiple of ``epsilon`` and merge."""
    if not epsilon > 0:
        raise DistributionError("epsilon must be positive")
    snapped = np.round(dist.points / epsilon) * epsilon
    norms = np.linalg.norm(snapped, axis=1)
    over = norms > 1.0
    if np.any(over):
        snapped[over] /= norms[over, None]
    return normalize_support(snapped, dist.weights.copy(), dist.counts, dist.row_map)


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_csv(path, weight_column: bool = False):
    """Read a CSV of coordinates, optionally with a trailing weight column.

    A first row that does not parse as numbers is treated as a header.
    Returns ``(rows, weights or None, header or None)``; the header excludes
    the weight column.
    """
    with open(Path(path), newline="", encoding="utf-8") as fh:
        records = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    header = None
    if records and not all(_is_number(c) for c in records[0]):
        header = [c.strip() for c in records[0]]
        records = records[1:]
    if not records:
        raise DistributionError(f"{path}: no data rows")
    try:
        data = np.array([[float(c) for c in r] for r in records])
    except ValueError as exc:
        raise DistributionError(f"{path}: {exc}") from None
    if weight_column:
        if data.shape[1] < 2:
            raise DistributionError(f"{path}: weight column requested but only one column present")
        return data[:, :-1], data[:, -1], None if header is None else header[:-1]
    return data, None, header


def write_csv(path, rows: np.ndarray, header: Optional[Sequence[str]] = None) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if header is not None:
            w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) for v in r])
