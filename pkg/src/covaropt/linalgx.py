"""Dense symmetric-matrix helpers: PSD square roots and pseudo-inverse roots.

All factorizations go through ``numpy.linalg.eigh`` with eigenvalue clamping
at zero (threshold 1e-12 times the largest eigenvalue) so that PSD matrices
polluted by round-off never raise.
"""

from __future__ import annotations

import numpy as np

from .errors import FactorizationError

#: eigenvalues below CLAMP_RTOL * max(eigenvalue) are treated as exact zeros
CLAMP_RTOL = 1e-12


def check_symmetric(mat: np.ndarray, name: str = "matrix", tol: float = 1e-8) -> np.ndarray:
    """Validate symmetry (relative tolerance) and return the symmetrized copy."""
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise FactorizationError(f"{name} must be square, got shape {mat.shape}")
    scale = max(1.0, float(np.abs(mat).max(initial=0.0)))
    if np.abs(mat - mat.T).max(initial=0.0) > tol * scale:
        raise FactorizationError(f"{name} is not symmetric")
    return 0.5 * (mat + mat.T)


def clamped_eigh(mat: np.ndarray, name: str = "matrix") -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric PSD matrix with negatives clamped to 0.

    Raises ``FactorizationError`` when a clearly negative eigenvalue survives
    the clamp threshold, i.e. the matrix is not PSD even modulo round-off.
    """
    mat = check_symmetric(mat, name)
    if mat.size == 0:
        return np.zeros(0), np.zeros((0, 0))
    vals, vecs = np.linalg.eigh(mat)
    cutoff = CLAMP_RTOL * max(float(vals[-1]), 0.0)
    floor = -1e-8 * max(1.0, abs(float(vals[-1])))
    if vals[0] < floor:
        raise FactorizationError(
            f"{name} has negative eigenvalue {vals[0]:.3e}; not PSD"
        )
    vals = np.where(vals > cutoff, vals, 0.0)
    return vals, vecs


def psd_sqrt(mat: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Symmetric square root ``R`` with ``R @ R = mat`` (PSD input)."""
    vals, vecs = clamped_eigh(mat, name)
    return (vecs * np.sqrt(vals)) @ vecs.T


def psd_pinv_sqrt(mat: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Pseudo-inverse of the symmetric square root (zero eigenvalues dropped)."""
    vals, vecs = clamped_eigh(mat, name)
    inv = np.where(vals > 0.0, 1.0 / np.sqrt(np.where(vals > 0.0, vals, 1.0)), 0.0)
    return (vecs * inv) @ vecs.T
