"""Seeded k-means with elbow-based selection of the cluster count.

Hand-rolled on numpy rather than delegated to a library: the contract
pins k-means++ seeding, Lloyd iteration to an assignment fixpoint,
deterministic empty-cluster reseeding, and a per-iteration WCSS trace,
none of which library implementations expose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gateway import DimensionMismatch

MAX_LLOYD_ITERATIONS = 100
DEFAULT_RESTARTS = 5


@dataclass(frozen=True)
class ClusterResult:
    k: int
    assignments: tuple[int, ...]
    centroids: np.ndarray
    wcss: float
    history: tuple[float, ...]  # WCSS after init and after each Lloyd iteration

    def members(self, cluster: int) -> list[int]:
        return [i for i, a in enumerate(self.assignments) if a == cluster]


def _as_matrix(points) -> np.ndarray:
    try:
        matrix = np.asarray(points, dtype=float)
    except ValueError as exc:
        raise DimensionMismatch(f"points are not a uniform matrix: {exc}") from exc
    if matrix.ndim != 2:
        raise DimensionMismatch(f"expected 2-d point matrix, got shape {matrix.shape}")
    return matrix


def _sq_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _wcss(points: np.ndarray, assignments: np.ndarray, centroids: np.ndarray) -> float:
    return float(((points - centroids[assignments]) ** 2).sum())


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    while len(chosen) < k:
        d2 = _sq_distances(points, points[chosen]).min(axis=1)
        total = d2.sum()
        if total == 0.0:
            # all remaining mass on duplicates of chosen points
            chosen.append(int(rng.integers(n)))
            continue
        chosen.append(int(rng.choice(n, p=d2 / total)))
    return points[chosen].copy()


def _reseed_empty(points: np.ndarray, assignments: np.ndarray, centroids: np.ndarray) -> None:
    """Give each empty cluster the point currently farthest from its centroid."""
    k = centroids.shape[0]
    for empty in range(k):
        if (assignments == empty).any():
            continue
        distances = ((points - centroids[assignments]) ** 2).sum(axis=1)
        farthest = int(np.argmax(distances))
        centroids[empty] = points[farthest]
        assignments[farthest] = empty


def _lloyd(points: np.ndarray, k: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, list[float]]:
    centroids = _kmeanspp_init(points, k, rng)
    assignments = np.argmin(_sq_distances(points, centroids), axis=1)
    _reseed_empty(points, assignments, centroids)
    history = [_wcss(points, assignments, centroids)]
    for _ in range(MAX_LLOYD_ITERATIONS):
        for c in range(k):
            members = assignments == c
            if members.any():
                centroids[c] = points[members].mean(axis=0)
        new_assignments = np.argmin(_sq_distances(points, centroids), axis=1)
        _reseed_empty(points, new_assignments, centroids)
        history.append(_wcss(points, new_assignments, centroids))
        if np.array_equal(new_assignments, assignments):
            assignments = new_assignments
            break
        assignments = new_assignments
    return assignments, centroids, history


def kmeans(points, k: int, seed: int, restarts: int = DEFAULT_RESTARTS) -> ClusterResult:
    """Best of `restarts` seeded k-means++ runs, judged by final WCSS."""
    matrix = _as_matrix(points)
    n = matrix.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for {n} points")
    best: tuple[np.ndarray, np.ndarray, list[float]] | None = None
    for child in np.random.SeedSequence(seed).spawn(max(1, restarts)):
        run = _lloyd(matrix, k, np.random.default_rng(child))
        if best is None or run[2][-1] < best[2][-1]:
            best = run
    assert best is not None
    assignments, centroids, history = best
    return ClusterResult(
        k=k,
        assignments=tuple(int(a) for a in assignments),
        centroids=centroids,
        wcss=history[-1],
        history=tuple(history),
    )


def _chord_distances(ks: list[int], wcss: list[float]) -> list[float]:
    """Perpendicular distance of each curve point to the endpoint chord."""
    x1, y1 = float(ks[0]), wcss[0]
    x2, y2 = float(ks[-1]), wcss[-1]
    norm = np.hypot(x2 - x1, y2 - y1)
    if norm == 0.0:
        return [0.0] * len(ks)
    return [
        abs((y2 - y1) * k - (x2 - x1) * w + x2 * y1 - y2 * x1) / norm
        for k, w in zip(ks, wcss)
    ]


def select_k_elbow(points, kmin: int, kmax: int, seed: int) -> int:
    """Cluster count at the elbow of the WCSS-vs-k curve, ties toward smaller k.

    The search range is clamped to [kmin, min(kmax, n-1)]; degenerate
    inputs (n <= kmin) fall back to min(n, kmin).
    """
    if kmin < 2:
        raise ValueError("kmin must be >= 2")
    matrix = _as_matrix(points)
    n = matrix.shape[0]
    if n <= kmin:
        return min(n, kmin)
    k_hi = min(kmax, n - 1)
    if k_hi <= kmin:
        return kmin
    ks = list(range(kmin, k_hi + 1))
    curve = [kmeans(matrix, k, seed).wcss for k in ks]
    distances = _chord_distances(ks, curve)
    best_idx = 0
    for i, d in enumerate(distances):
        if d > distances[best_idx]:
            best_idx = i
    return ks[best_idx]
