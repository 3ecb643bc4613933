"""Two-component PCA baseline with a cyclic Jacobi eigensolver.

Axis 1 is read as "development volume" and axis 2 as "business imbalance".
Those names are labels for reports only; nothing guarantees the axes mean
that on arbitrary data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tsne_core import Embedding

AXIS_LABELS = ("development volume", "business imbalance")


@dataclass(frozen=True)
class PcaModel:
    components: np.ndarray  # (2, d), orthonormal rows
    eigenvalues: np.ndarray  # (2,), descending
    explained_variance_ratio: np.ndarray
    column_means: np.ndarray
    total_variance: float

    def to_dict(self) -> dict:
        return {
            "components": self.components.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
            "column_means": self.column_means.tolist(),
            "total_variance": self.total_variance,
            "axis_labels": list(AXIS_LABELS),
        }

    @classmethod
    def from_dict(cls, data: dict) -> PcaModel:
        return cls(
            np.array(data["components"], dtype=float),
            np.array(data["eigenvalues"], dtype=float),
            np.array(data["explained_variance_ratio"], dtype=float),
            np.array(data["column_means"], dtype=float),
            float(data["total_variance"]),
        )


def jacobi_eigh(a: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decompose a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvectors as columns,
    eigenvalues sorted descending.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    v = np.eye(n)
    scale = max(np.abs(a).max(), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = math.sqrt(float(np.sum(np.triu(a, 1) ** 2)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q]
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :]
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
    else:
        raise RuntimeError("Jacobi eigensolver did not converge")
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    return vec if vec[np.argmax(np.abs(vec))] >= 0 else -vec


def pca_fit(fm) -> PcaModel:
    x = np.asarray(getattr(fm, "values", fm), dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("PCA needs at least 2 rows")
    if x.shape[1] < 2:
        raise ValueError("PCA needs at least 2 columns")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    means = x.mean(axis=0)
    xc = x - means
    cov = xc.T @ xc / (x.shape[0] - 1)
    cov = 0.5 * (cov + cov.T)
    w, v = jacobi_eigh(cov)
    w = np.maximum(w, 0.0)
    eig = w[:2].copy()
    comps = np.array([_fix_sign(v[:, 0]), _fix_sign(v[:, 1])])
    total = float(np.trace(cov))
    ratio = eig / total if total > 0 else np.zeros(2)
    return PcaModel(comps, eig, ratio, means, total)


def pca_project(model: PcaModel, fm) -> Embedding:
    x = np.asarray(getattr(fm, "values", fm), dtype=float)
    if x.ndim != 2 or x.shape[1] != model.components.shape[1]:
        raise ValueError(
            f"dimension mismatch: model has d={model.components.shape[1]}, input has shape {x.shape}"
        )
    coords = (x - model.column_means) @ model.components.T
    region_ids = getattr(fm, "region_ids", tuple(str(i) for i in range(x.shape[0])))
    return Embedding(coords, tuple(region_ids), method="pca")


def rank_regions(scores: Embedding) -> list[tuple[str, float]]:
    """Regions by descending axis-1 score, ties broken by region_id."""
    pairs = [(rid, float(s)) for rid, s in zip(scores.region_ids, scores.coords[:, 0])]
    return sorted(pairs, key=lambda p: (-p[1], p[0]))
