"""Test-set descriptors and their geometric complexity statistics.

A test set T is one of: a finite point cloud, the unit sphere, a sparse
sphere (unit vectors supported on at most ell coordinates of an index set),
an axis-aligned ellipsoid, or the difference set V - V of a cloud V.

For each variant this module computes the Euclidean radius d_T, the Gaussian
mean width  E sup_{t in T} |<G, t>|  (closed form where available, Monte
Carlo with a reported standard error otherwise), the critical dimension
(mean width / radius)^2, its max with log n, the dyadic scale indices used
by the chaining diagnostics, and greedy admissible sequences on finite
clouds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .embedding_core import load_matrix_csv
from .errors import BudgetError, ConfigurationError, DegenerateSetError, DimensionError


@dataclass(frozen=True)
class FiniteCloud:
    """Finite, non-empty set of points in R^n, stored as rows (N, n)."""

    points: np.ndarray
    variant: str = "finite_cloud"

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise DimensionError("finite_cloud needs a non-empty (N, n) point array")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class UnitSphere:
    n: int
    variant: str = "unit_sphere"

    def __post_init__(self) -> None:
        if self.n < 1:
            raise DimensionError("unit_sphere dimension must be >= 1")


@dataclass(frozen=True)
class SparseSphere:
    """Unit vectors supported on at most `ell` coordinates of `indices`."""

    indices: np.ndarray
    ell: int
    n: int
    variant: str = "sparse_sphere"

    def __post_init__(self) -> None:
        idx = np.unique(np.asarray(self.indices, dtype=np.int64))
        if idx.size == 0:
            raise DimensionError("sparse_sphere needs a non-empty index set")
        if self.ell < 1:
            raise DimensionError("sparse_sphere sparsity ell must be >= 1")
        if idx.min() < 0 or idx.max() >= self.n:
            raise DimensionError("sparse_sphere indices out of range")
        object.__setattr__(self, "indices", idx)


@dataclass(frozen=True)
class Ellipsoid:
    """Axis-aligned ellipsoid {x : sum_i x_i^2 / a_i^2 <= 1}."""

    semi_axes: np.ndarray
    variant: str = "ellipsoid"

    def __post_init__(self) -> None:
        axes = np.asarray(self.semi_axes, dtype=np.float64)
        if axes.ndim != 1 or axes.size == 0 or np.any(axes < 0):
            raise DimensionError("ellipsoid needs a vector of nonnegative semi-axes")
        object.__setattr__(self, "semi_axes", axes)

    @property
    def n(self) -> int:
        return self.semi_axes.size


@dataclass(frozen=True)
class DifferenceSet:
    """Materialized {x - y : x, y in base}; always contains 0."""

    base: FiniteCloud
    variant: str = "difference_set"

    @property
    def points(self) -> np.ndarray:
        pts = self.base.points
        return (pts[:, None, :] - pts[None, :, :]).reshape(-1, pts.shape[1])

    @property
    def n(self) -> int:
        return self.base.n


SetDescriptor = Union[FiniteCloud, UnitSphere, SparseSphere, Ellipsoid, DifferenceSet]


def load_cloud_csv(path: str | Path) -> FiniteCloud:
    """Read a finite cloud from CSV, one point per row."""
    return FiniteCloud(points=load_matrix_csv(path))


def ambient_dim(T: SetDescriptor) -> int:
    return T.n


def diameter(T: SetDescriptor) -> float:
    """sup_{t in T} ||t||_2 (exact for every variant)."""
    if isinstance(T, UnitSphere):
        return 1.0
    if isinstance(T, SparseSphere):
        return 1.0
    if isinstance(T, Ellipsoid):
        return float(T.semi_axes.max())
    if isinstance(T, (FiniteCloud, DifferenceSet)):
        return float(np.linalg.norm(T.points, axis=1).max())
    raise ConfigurationError(f"unknown set variant {T!r}")


@dataclass(frozen=True)
class WidthEstimate:
    """Gaussian mean width value; std_error == 0 exactly when exact."""

    value: float
    std_error: float
    mc_samples: int
    exact: bool

    def __post_init__(self) -> None:
        if self.exact != (self.std_error == 0.0):
            raise ConfigurationError("std_error must be 0 iff the estimate is exact")


def _sphere_mean_norm(n: int) -> float:
    # E ||g||_2 for g standard normal in R^n
    return math.sqrt(2.0) * math.exp(math.lgamma((n + 1) / 2.0) - math.lgamma(n / 2.0))


def estimate_mean_width(
    T: SetDescriptor,
    mc_samples: int = 4000,
    stream: np.random.Generator | None = None,
    chunk: int = 4096,
) -> WidthEstimate:
    """E sup_{t in T} |<G, t>| for a standard Gaussian G.

    Closed form for the unit sphere and single-point clouds; Monte Carlo
    otherwise.  For a sparse sphere the inner supremum is the l2 norm of the
    ell largest |g_i| over the index set (nonincreasing rearrangement).
    """
    if isinstance(T, UnitSphere):
        return WidthEstimate(_sphere_mean_norm(T.n), 0.0, 0, True)
    if isinstance(T, (FiniteCloud, DifferenceSet)):
        pts = T.points
        if pts.shape[0] == 1:
            value = math.sqrt(2.0 / math.pi) * float(np.linalg.norm(pts[0]))
            return WidthEstimate(value, 0.0, 0, True)
    if mc_samples < 1000:
        raise ConfigurationError("Monte Carlo width estimation needs mc_samples >= 1000")
    if stream is None:
        raise ConfigurationError("Monte Carlo width estimation needs an explicit stream")

    n = ambient_dim(T)
    sups = np.empty(mc_samples)
    done = 0
    while done < mc_samples:
        batch = min(chunk, mc_samples - done)
        g = stream.standard_normal((batch, n))
        if isinstance(T, (FiniteCloud, DifferenceSet)):
            sups[done : done + batch] = np.abs(g @ T.points.T).max(axis=1)
        elif isinstance(T, Ellipsoid):
            sups[done : done + batch] = np.linalg.norm(g * T.semi_axes, axis=1)
        elif isinstance(T, SparseSphere):
            sub = np.abs(g[:, T.indices])
            k = min(T.ell, sub.shape[1])
            if k < sub.shape[1]:
                sub = np.partition(sub, sub.shape[1] - k, axis=1)[:, -k:]
            sups[done : done + batch] = np.linalg.norm(sub, axis=1)
        else:
            raise ConfigurationError(f"unknown set variant {T!r}")
        done += batch
    value = float(sups.mean())
    std_error = float(sups.std(ddof=1) / math.sqrt(mc_samples))
    return WidthEstimate(value, std_error, mc_samples, False)


def critical_dimension(T: SetDescriptor, width: WidthEstimate) -> float:
    """(mean width / radius)^2, the set's effective dimension."""
    d = diameter(T)
    if d == 0.0:
        raise DegenerateSetError("critical dimension undefined for a zero-radius set")
    return (width.value / d) ** 2


def lambda_star(T: SetDescriptor, width: WidthEstimate, n: int) -> float:
    """max(critical dimension, log n); the scale where chaining starts."""
    return max(critical_dimension(T, width), math.log(n))


def _pow2_ceil_exponent(x: float) -> int:
    if x <= 1.0:
        return 0
    return max(0, math.ceil(math.log2(x) - 1e-12))


def scales_s0_s1(k_star: float, n: int, m: int) -> tuple[int, int]:
    """Dyadic scale indices: 2^s0 covers max(k*, 1) rounded up to a power of
    two, 2^s1 = max(2^s0, m rounded up to a power of two)."""
    if n < 1 or m < 1:
        raise DimensionError("n and m must be >= 1")
    if k_star < 0:
        raise DimensionError("k_star must be nonnegative")
    s0 = _pow2_ceil_exponent(max(k_star, 1.0))
    s1 = max(s0, (m - 1).bit_length())
    return s0, s1


def _level_cap(s: int) -> int:
    return 1 if s == 0 else 2 ** (2**s)


@dataclass(frozen=True)
class AdmissibleSequence:
    """Nested approximating subsets of a finite cloud.

    Level s holds at most 2^(2^s) points (level 0 holds exactly one); the
    projection of a point is its nearest level member, ties broken toward the
    lowest original point index.  Levels stop once the full cloud is reached,
    after which projections are the identity and increments vanish.
    """

    points: np.ndarray
    level_indices: tuple[np.ndarray, ...]
    assignments: np.ndarray  # (num_levels, N) original index of the projection

    @property
    def num_levels(self) -> int:
        return len(self.level_indices)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def level(self, s: int) -> np.ndarray:
        return self.level_indices[min(s, self.num_levels - 1)]

    def pi_index(self, s: int, i: int) -> int:
        return int(self.assignments[min(s, self.num_levels - 1), i])

    def pi(self, s: int, i: int) -> np.ndarray:
        return self.points[self.pi_index(s, i)]

    def delta(self, s: int, i: int) -> np.ndarray:
        """Increment pi_{s+1}(t_i) - pi_s(t_i); zero once levels stabilize."""
        return self.pi(s + 1, i) - self.pi(s, i)

    def delta_all(self, s: int) -> np.ndarray:
        """(N, n) array of increments at scale s for every point."""
        lo = min(s, self.num_levels - 1)
        hi = min(s + 1, self.num_levels - 1)
        return self.points[self.assignments[hi]] - self.points[self.assignments[lo]]

    def tail_norm_sums(self, s_from: int) -> np.ndarray:
        """Per point: sum over s >= s_from of ||Delta_s t||_2."""
        total = np.zeros(self.size)
        for s in range(s_from, self.num_levels - 1):
            total += np.linalg.norm(self.delta_all(s), axis=1)
        return total


def _greedy_farthest_order(points: np.ndarray, count: int) -> np.ndarray:
    """First `count` indices of a farthest-point traversal starting at index 0."""
    n_pts = points.shape[0]
    order = np.empty(min(count, n_pts), dtype=np.int64)
    order[0] = 0
    dist = np.linalg.norm(points - points[0], axis=1)
    for k in range(1, len(order)):
        nxt = int(np.argmax(dist))  # ties resolve to the lowest index
        order[k] = nxt
        dist = np.minimum(dist, np.linalg.norm(points - points[nxt], axis=1))
    return order


def _nearest_assignment(points: np.ndarray, member_idx: np.ndarray) -> np.ndarray:
    members = points[member_idx]
    # squared distances; argmin's first-occurrence rule + ascending member
    # order implements the lowest-index tie break
    d2 = (
        np.sum(points * points, axis=1)[:, None]
        - 2.0 * points @ members.T
        + np.sum(members * members, axis=1)[None, :]
    )
    return member_idx[np.argmin(d2, axis=1)]


def build_admissible_sequence(T: FiniteCloud) -> AdmissibleSequence:
    """Greedy farthest-point admissible sequence for a finite cloud.

    Level s keeps the first min(2^(2^s), N) points of the traversal, so the
    levels are nested and stabilize at the full cloud.  The resulting
    sum_s sqrt(2^s) ||Delta_s t|| is an upper proxy for the optimal chaining
    functional, never the functional itself.
    """
    if T.size > 2**16:
        raise BudgetError(f"admissible sequences support at most 2^16 points, got {T.size}")
    points = T.points
    n_pts = T.size

    sizes = []
    s = 0
    while True:
        sizes.append(min(_level_cap(s), n_pts))
        if _level_cap(s) >= n_pts:
            break
        s += 1
    largest_proper = max((sz for sz in sizes if sz < n_pts), default=1)
    order = _greedy_farthest_order(points, largest_proper)

    level_indices = []
    assignments = np.empty((len(sizes), n_pts), dtype=np.int64)
    # map each point to the first occurrence of its value so that exact
    # duplicates project to the lowest index even at the identity level
    _, first_occurrence, inverse = np.unique(
        points, axis=0, return_index=True, return_inverse=True
    )
    identity_assign = first_occurrence[inverse]
    for lvl, size in enumerate(sizes):
        if size >= n_pts:
            idx = np.arange(n_pts, dtype=np.int64)
            level_indices.append(idx)
            assignments[lvl] = identity_assign
        else:
            idx = np.sort(order[:size])
            level_indices.append(idx)
            assignments[lvl] = _nearest_assignment(points, idx)
    return AdmissibleSequence(
        points=points,
        level_indices=tuple(level_indices),
        assignments=assignments,
    )
