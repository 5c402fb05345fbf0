"""Principal component projection for embedding dumps."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def fit_pca(x: np.ndarray, n_components: int) -> tuple[np.ndarray, np.ndarray]:
    """Returns (components [k, d], mean [d]) from an SVD of the centered
    rows. Component signs are fixed so the largest-magnitude coordinate of
    each component is positive."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"expected a [rows, dims] matrix, got shape {x.shape}")
    n, d = x.shape
    if not 1 <= n_components <= min(n, d):
        raise DataError(
            f"n_components must be in [1, {min(n, d)}] for a {n}x{d} matrix"
        )
    mean = x.mean(axis=0)
    _, _, vt = np.linalg.svd(x - mean, full_matrices=False)
    components = vt[:n_components]
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return components, mean


def project(x: np.ndarray, components: np.ndarray, mean: np.ndarray) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - mean) @ components.T


def reconstruct(coords: np.ndarray, components: np.ndarray, mean: np.ndarray) -> np.ndarray:
    return np.asarray(coords, dtype=np.float64) @ components + mean
