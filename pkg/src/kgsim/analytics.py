"""Two-component PCA of embedding tables and CSV export for plotting."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass
class Projection:
    coordinates: np.ndarray
    explained_variance: np.ndarray
    mean_vector: np.ndarray
    components: np.ndarray


def power_iteration(matrix: np.ndarray, tol: float = 1e-10, max_iter: int = 1000, seed: int = 0):
    """Dominant eigenpair of a symmetric PSD matrix.

    Returns ``(eigenvalue, unit eigenvector)``; a numerically zero matrix
    gives eigenvalue 0 and the deterministic start vector.
    """
    n = matrix.shape[0]
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    scale = np.abs(matrix).max()
    if scale == 0:
        return 0.0, v
    lam = 0.0
    for _ in range(max_iter):
        w = matrix @ v
        norm = np.linalg.norm(w)
        if norm <= 1e-14 * scale:
            return 0.0, v
        w /= norm
        mw = matrix @ w
        lam = float(w @ mw)
        v = w
        # Stop on the eigen-residual; it bounds the vector error by residual / gap.
        if np.linalg.norm(mw - lam * w) <= tol * scale:
            break
    return max(lam, 0.0), v


def _pin_sign(v):
    return v if v[np.argmax(np.abs(v))] >= 0 else -v


def pca_2d(embeddings: np.ndarray, tol: float = 1e-10, max_iter: int = 1000) -> Projection:
    """Project rows onto the top two principal axes of the sample covariance.

    Components come from power iteration with deflation. Each axis is signed
    so its largest-magnitude entry is positive.
    """
    x = np.asarray(embeddings, dtype=float)
    if x.ndim != 2 or x.shape[0] < 3 or x.shape[1] < 2:
        raise ValueError("need at least 3 rows and 2 columns")
    if not np.all(np.isfinite(x)):
        raise ValueError("embeddings contain non-finite values")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (x.shape[0] - 1)
    if np.abs(cov).max() == 0:
        raise ValueError("data has rank 0 (all rows identical)")

    vals, vecs = [], []
    deflated = cov.copy()
    for i in range(2):
        lam, v = power_iteration(deflated, tol, max_iter, seed=i)
        if vecs:
            if lam <= 1e-12 * vals[0]:
                # Rank-1 data: no second direction, pick a fixed orthogonal axis.
                lam = 0.0
                v = np.eye(len(v))[np.argmin(np.abs(vecs[0]))]
            v = v - (v @ vecs[0]) * vecs[0]
            v /= np.linalg.norm(v)
        v = _pin_sign(v)
        vals.append(lam)
        vecs.append(v)
        deflated = deflated - lam * np.outer(v, v)
    comps = np.column_stack(vecs)
    return Projection(xc @ comps, np.array(vals), mean, comps)


def export_projection(projection: Projection, labels, entity_types, path) -> None:
    """Write ``entity,x,y,type`` rows; entities without a type get ``unknown``."""
    entity_types = entity_types or {}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["entity", "x", "y", "type"])
        for i, (label, (x, y)) in enumerate(zip(labels, projection.coordinates)):
            writer.writerow([label, f"{x:.6f}", f"{y:.6f}", entity_types.get(i, "unknown")])
