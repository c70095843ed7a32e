"""Small dense linear-algebra helpers shared by the rate, WMMSE and solver code."""

import math

import numpy as np
import scipy.linalg

from src.config import HERMITIAN_TOL, MAX_CONDITION
from src.errors import DomainError, NumericalError


def hermitize(matrix: np.ndarray) -> np.ndarray:
    """Return (X + X^H) / 2."""
    x = np.asarray(matrix)
    return 0.5 * (x + x.conj().T)


def hermitian_defect(matrix: np.ndarray) -> float:
    """Relative size of the anti-Hermitian part, ||X - X^H||_F / max(1, ||X||_F)."""
    x = np.asarray(matrix)
    return float(np.linalg.norm(x - x.conj().T) / max(1.0, float(np.linalg.norm(x))))


def require_hermitian(matrix: np.ndarray, name: str, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Check that a square matrix is Hermitian within tol and return its symmetrized copy."""
    x = np.asarray(matrix)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise DomainError(f"{name} must be square, got shape {x.shape}")
    defect = hermitian_defect(x)
    if defect > tol:
        raise DomainError(f"{name} is not Hermitian (relative defect {defect:.3e})")
    return hermitize(x)


def logdet_pd(matrix: np.ndarray, name: str = "matrix") -> float:
    """Natural log-determinant of a Hermitian positive definite matrix via Cholesky."""
    try:
        factor = scipy.linalg.cholesky(hermitize(matrix), lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"{name} is not positive definite") from exc
    return float(2.0 * np.sum(np.log(np.abs(np.diag(factor)))))


def log2det_pd(matrix: np.ndarray, name: str = "matrix") -> float:
    return logdet_pd(matrix, name) / math.log(2.0)


def inv_pd(
    matrix: np.ndarray, name: str = "matrix", max_condition: float = MAX_CONDITION
) -> np.ndarray:
    """Inverse of a Hermitian positive definite matrix with an explicit condition check.

    Args:
        matrix: Hermitian PD matrix
        name: Label used in error messages
        max_condition: Largest accepted ratio of extreme eigenvalues

    Returns:
        The Hermitian-symmetrized inverse
    """
    x = hermitize(matrix)
    eigvals, eigvecs = scipy.linalg.eigh(x)
    smallest, largest = float(eigvals[0]), float(eigvals[-1])
    if not smallest > 0.0:
        raise NumericalError(f"{name} is not positive definite (min eigenvalue {smallest:.3e})")
    if largest / smallest > max_condition:
        raise NumericalError(
            f"{name} is ill-conditioned (condition {largest / smallest:.3e} > {max_condition:.0e})"
        )
    inverse = (eigvecs / eigvals) @ eigvecs.conj().T
    return hermitize(inverse)


def max_eigenvalue(matrix: np.ndarray, tol: float = 1e-8) -> float:
    """Largest eigenvalue of a Hermitian matrix.

    Raises:
        DomainError: if the matrix is non-Hermitian beyond tol
    """
    x = require_hermitian(matrix, "matrix", tol=tol)
    n = x.shape[0]
    top = scipy.linalg.eigh(x, eigvals_only=True, subset_by_index=[n - 1, n - 1])
    return float(top[0])


def min_eigenvalue(matrix: np.ndarray) -> float:
    """Smallest eigenvalue of the Hermitian part of a square matrix."""
    x = hermitize(matrix)
    if x.shape[0] == 0:
        return 0.0
    low = scipy.linalg.eigh(x, eigvals_only=True, subset_by_index=[0, 0])
    return float(low[0])
