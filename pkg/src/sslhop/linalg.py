"""Dense containers and linear-algebra primitives shared by every other module.

Response maps are float64 arrays shaped ``(height, width, channels)``; patch
matrices are float64 arrays shaped ``(n_patches, dim)``.
"""
from typing import NamedTuple

import numpy as np

from .errors import SSLError

SYMMETRY_TOL = 1e-9


class SymEigResult(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def as_response_map(data, height=None, width=None, channels=None):
    """Return ``data`` as a finite float64 ``(H, W, C)`` array.

    A flat sequence is reshaped row-major using the given dimensions; a 2-D
    array is promoted to one channel.
    """
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        if None in (height, width, channels):
            raise SSLError("flat response data needs height, width and channels")
        if arr.size != height * width * channels:
            raise SSLError("shape mismatch")
        arr = arr.reshape(height, width, channels)
    elif arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise SSLError("shape mismatch")
    if not np.all(np.isfinite(arr)):
        raise SSLError("non-finite input")
    return np.ascontiguousarray(arr)


def as_patch_matrix(patches):
    arr = np.asarray(patches, dtype=np.float64)
    if arr.ndim != 2:
        raise SSLError("shape mismatch")
    if not np.all(np.isfinite(arr)):
        raise SSLError("non-finite input")
    return arr


def covariance(patches):
    """Column mean and unbiased (n-1) covariance of the rows of ``patches``."""
    x = as_patch_matrix(patches)
    n = x.shape[0]
    if n < 2:
        raise SSLError("insufficient samples")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered
    cov = 0.5 * (cov + cov.T)
    cov /= n - 1
    return mean, cov


def sym_eig(matrix):
    """Eigen-decompose a symmetric matrix, eigenvalues descending.

    Each eigenvector is flipped so that its largest-magnitude component
    (first one on ties) is nonnegative, which makes the result unique
    whenever the eigenvalues are distinct.
    """
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise SSLError("shape mismatch")
    if not np.all(np.isfinite(a)):
        raise SSLError("non-finite input")
    if np.max(np.abs(a - a.T)) > SYMMETRY_TOL:
        raise SSLError("not symmetric")
    try:
        values, vectors = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise SSLError("eigendecomposition did not converge") from exc
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = vectors[:, order]
    pivot = np.argmax(np.abs(vectors), axis=0)
    signs = np.where(vectors[pivot, np.arange(vectors.shape[1])] < 0, -1.0, 1.0)
    vectors = vectors * signs
    return SymEigResult(values, np.ascontiguousarray(vectors))


def project(patches, basis, offset=None):
    """Rows of ``basis`` applied to ``patches - offset``; returns n_patches x k."""
    x = as_patch_matrix(patches)
    b = np.asarray(basis, dtype=np.float64)
    if b.ndim == 1:
        b = b[None, :]
    if b.ndim != 2 or b.shape[1] != x.shape[1]:
        raise SSLError("shape mismatch")
    if offset is not None:
        off = np.asarray(offset, dtype=np.float64)
        if off.shape != (x.shape[1],):
            raise SSLError("shape mismatch")
        if np.any(off):
            x = x - off
    return x @ b.T
