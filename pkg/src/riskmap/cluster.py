"""k-means on embeddings, clustering quality metrics and tier labelling."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

ROMAN = ("I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI", "XII")


@dataclass
class Clustering:
    k: int
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    n_iter: int
    seed: int
    inertia_trace: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "labels": [int(l) for l in self.labels],
            "centers": self.centers.tolist(),
            "inertia": self.inertia,
            "n_iter": self.n_iter,
            "seed": self.seed,
        }


def _sq_dist_to_centers(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _init_centers(points, k, rng, init):
    n = points.shape[0]
    if init == "random":
        return points[rng.choice(n, size=k, replace=False)].copy()
    centers = [points[rng.integers(n)]]
    closest = _sq_dist_to_centers(points, np.array(centers))[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centers.append(points[idx])
        closest = np.minimum(closest, _sq_dist_to_centers(points, points[idx][None, :])[:, 0])
    return np.array(centers)


def _repair_empty(labels, d2, k):
    """Move the point farthest from its own center into each empty cluster."""
    for c in range(k):
        if np.any(labels == c):
            continue
        counts = np.bincount(labels, minlength=k)
        own = d2[np.arange(labels.size), labels]
        own = np.where(counts[labels] > 1, own, -np.inf)
        labels[int(np.argmax(own))] = c
    return labels


def _lloyd(points, centers, k, max_iter, tol):
    n = points.shape[0]
    trace = []
    prev = np.inf
    for it in range(1, max_iter + 1):
        d2 = _sq_dist_to_centers(points, centers)
        labels = _repair_empty(np.argmin(d2, axis=1), d2, k)
        centers = np.array([points[labels == c].mean(axis=0) for c in range(k)])
        diff = points - centers[labels]
        inertia = float(np.einsum("ij,ij->", diff, diff))
        if inertia > prev * (1 + 1e-12) + 1e-12:
            raise AssertionError(f"Lloyd inertia increased at iteration {it}: {prev} -> {inertia}")
        trace.append(inertia)
        if prev == inertia or (np.isfinite(prev) and (prev - inertia) <= tol * max(prev, 1e-300)):
            break
        prev = inertia
    assert labels.size == n
    return labels, centers, inertia, it, trace


def kmeans_fit(
    points,
    k: int,
    restarts: int = 10,
    seed: int = 0,
    init: str = "kmeans++",
    max_iter: int = 300,
    tol: float = 1e-6,
) -> Clustering:
    """Best-of-``restarts`` Lloyd k-means, deterministic for a given seed."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError("points must be a 2-D array")
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must satisfy 1 <= k <= n (k={k}, n={n})")
    if not np.all(np.isfinite(points)):
        raise ValueError("points contain non-finite values")
    if init not in ("kmeans++", "random"):
        raise ValueError(f"unknown init {init!r}")

    best = None
    for child in np.random.SeedSequence(seed).spawn(max(1, restarts)):
        rng = np.random.default_rng(child)
        centers = _init_centers(points, k, rng, init)
        result = _lloyd(points, centers, k, max_iter, tol)
        if best is None or result[2] < best[2]:
            best = result
    labels, centers, inertia, n_iter, trace = best
    return Clustering(k, labels, centers, inertia, n_iter, seed, trace)


def _euclidean(points):
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def silhouette_samples(points, labels) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    ids, inv = np.unique(labels, return_inverse=True)
    if ids.size < 2:
        raise ValueError("silhouette needs at least 2 clusters")
    dist = _euclidean(points)
    sums = np.stack([dist[:, inv == c].sum(axis=1) for c in range(ids.size)], axis=1)
    sizes = np.bincount(inv)
    own = sizes[inv]
    a = sums[np.arange(points.shape[0]), inv] / np.maximum(own - 1, 1)
    mean_other = sums / sizes
    mean_other[np.arange(points.shape[0]), inv] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return np.where(own > 1, s, 0.0)


def silhouette(points, labels) -> float:
    """Mean silhouette; singleton clusters and a = b = 0 contribute 0."""
    return float(silhouette_samples(points, labels).mean())


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return float(np.sum(x * (x - 1) / 2))


def adjusted_rand(labels_a, labels_b) -> float:
    a, b = np.asarray(labels_a), np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("label arrays must be 1-D and of equal length")
    n = a.size
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1 if n else 0, ib.max() + 1 if n else 0))
    np.add.at(table, (ia, ib), 1)
    index = _comb2(table)
    sum_a = _comb2(table.sum(axis=1))
    sum_b = _comb2(table.sum(axis=0))
    total = n * (n - 1) / 2
    expected = sum_a * sum_b / total if total else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # identical trivial partitions (one cluster, or all singletons)
        return 1.0
    return (index - expected) / (max_index - expected)


@dataclass
class TierAssignment:
    tier_of_cluster: dict[int, str]
    region_tiers: dict[str, str]
    cluster_means: dict[int, float]
    ties: list[tuple[int, int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "tier_of_cluster": {str(c): t for c, t in self.tier_of_cluster.items()},
            "region_tiers": dict(self.region_tiers),
            "cluster_means": {str(c): m for c, m in self.cluster_means.items()},
            "ties": [list(t) for t in self.ties],
        }

    @classmethod
    def from_dict(cls, data: dict) -> TierAssignment:
        return cls(
            {int(c): t for c, t in data["tier_of_cluster"].items()},
            dict(data["region_tiers"]),
            {int(c): float(m) for c, m in data["cluster_means"].items()},
            [tuple(t) for t in data.get("ties", [])],
        )


def tier_name(rank: int) -> str:
    return ROMAN[rank] if rank < len(ROMAN) else str(rank + 1)


def assign_tiers(clustering: Clustering, fm) -> TierAssignment:
    """Tier I is the cluster with the highest mean raw coefficient."""
    raw = fm.raw_values() if hasattr(fm, "raw_values") else np.asarray(fm)
    labels = np.asarray(clustering.labels)
    if raw.shape[0] != labels.size:
        raise ValueError("clustering and feature matrix cover different rows")
    region_means = raw.mean(axis=1)
    means = {c: float(region_means[labels == c].mean()) for c in range(clustering.k) if np.any(labels == c)}
    order = sorted(means, key=lambda c: (-means[c], c))
    ties = [(a, b) for a, b in zip(order, order[1:]) if means[a] == means[b]]
    if ties:
        log.warning("clusters with equal mean coefficient, ordered by id: %s", ties)
    tier_of = {c: tier_name(r) for r, c in enumerate(order)}
    ids = getattr(fm, "region_ids", tuple(str(i) for i in range(labels.size)))
    region_tiers = {rid: tier_of[int(l)] for rid, l in zip(ids, labels)}
    return TierAssignment(tier_of, region_tiers, means, ties)
