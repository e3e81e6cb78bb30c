"""
This module provides the dense linear algebra used by the design formulas.

Matrices are plain numpy arrays. Symmetric matrices are validated by
`symmetric`, which returns a read-only float copy so that values handed
around by the other packages cannot be mutated in place.

Functions:
    symmetric: Validates and freezes a symmetric matrix.
    is_positive_definite: Relative eigenvalue test for nonsingularity.
    invert: Inverse of a positive definite matrix.
    pinv: Moore-Penrose pseudoinverse.
    max_eig: Largest eigenvalue of a symmetric matrix.
    column_space_contains: Column space inclusion test.
"""
import numpy as np

from errors import DimensionMismatch, SingularMatrix

SYMMETRY_TOL: float = 1e-12
SINGULARITY_REL_TOL: float = 1e-10
PINV_RCOND: float = 1e-12
COLUMN_SPACE_TOL: float = 1e-8

NOT_SQUARE_MSG: str = 'Matrix must be square'
NOT_SYMMETRIC_MSG: str = 'Matrix is not symmetric'
SINGULAR_MSG: str = 'Matrix is not positive definite'


def _as_square(a) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(f'{NOT_SQUARE_MSG}, got shape {arr.shape}')
    return arr


def symmetric(a) -> np.ndarray:
    """
    Validate a symmetric matrix and return it as a read-only float array.

    The asymmetry threshold scales with the largest entry, so that products of
    large matrices are not rejected for rounding noise.

    Args:
        a (array_like): Square matrix.

    Returns:
        np.ndarray: Read-only copy of the matrix.

    Raises:
        DimensionMismatch: If the matrix is not square.
        ValueError: If the matrix is not symmetric.
    """
    arr = _as_square(a).copy()
    if not np.all(np.isfinite(arr)):
        raise ValueError('Matrix entries must be finite')
    scale = max(1.0, float(np.max(np.abs(arr)))) if arr.size else 1.0
    if arr.size and np.max(np.abs(arr - arr.T)) >= SYMMETRY_TOL * scale:
        raise ValueError(NOT_SYMMETRIC_MSG)
    arr.setflags(write=False)
    return arr


def is_positive_definite(m, rel_tol: float = SINGULARITY_REL_TOL) -> bool:
    """
    Check whether a symmetric matrix counts as nonsingular.

    A matrix passes iff its smallest eigenvalue exceeds rel_tol times its
    largest eigenvalue (and the largest eigenvalue is positive).

    Args:
        m (array_like): Symmetric matrix.
        rel_tol (float): Relative eigenvalue threshold.

    Returns:
        bool: True if the matrix is positive definite.
    """
    eig = np.linalg.eigvalsh(_as_square(m))
    return bool(eig[-1] > 0 and eig[0] > rel_tol * eig[-1])


def positive_definite_mask(stack: np.ndarray, rel_tol: float = SINGULARITY_REL_TOL) -> np.ndarray:
    """
    Apply the positive definiteness test to a stack of symmetric matrices.

    Args:
        stack (np.ndarray): Array of shape (T, m, m).
        rel_tol (float): Relative eigenvalue threshold.

    Returns:
        np.ndarray: Boolean mask of length T.
    """
    eig = np.linalg.eigvalsh(stack)
    return (eig[:, -1] > 0) & (eig[:, 0] > rel_tol * eig[:, -1])


def invert(m) -> np.ndarray:
    """
    Invert a positive definite matrix.

    Args:
        m (array_like): Symmetric positive definite matrix.

    Returns:
        np.ndarray: The symmetrized inverse.

    Raises:
        SingularMatrix: If the matrix fails the definiteness test.
    """
    arr = _as_square(m)
    if not is_positive_definite(arr):
        raise SingularMatrix(SINGULAR_MSG)
    inv = np.linalg.inv(arr)
    return (inv + inv.T) / 2


def pinv(a) -> np.ndarray:
    """
    Moore-Penrose pseudoinverse via SVD, cutting singular values below
    1e-12 times the largest one.
    """
    return np.linalg.pinv(np.atleast_2d(np.asarray(a, dtype=float)), rcond=PINV_RCOND)


def max_eig(m) -> float:
    """
    Return the largest eigenvalue of a symmetric matrix.
    """
    return float(np.linalg.eigvalsh(_as_square(m))[-1])


def column_space_contains(m, x) -> bool:
    """
    Check whether the column space of m contains the columns of x.

    Args:
        m (array_like): Symmetric matrix.
        x (array_like): Matrix (or vector) with the same number of rows as m.

    Returns:
        bool: True iff ||(M M^+ - I) X||_F <= 1e-8 ||X||_F.

    Raises:
        DimensionMismatch: If the row counts differ.
    """
    arr = _as_square(m)
    xs = np.asarray(x, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    if xs.shape[0] != arr.shape[0]:
        raise DimensionMismatch(f'Expected {arr.shape[0]} rows, got {xs.shape[0]}')
    projector = arr @ pinv(arr)
    residual = (projector - np.eye(arr.shape[0])) @ xs
    return bool(np.linalg.norm(residual) <= COLUMN_SPACE_TOL * np.linalg.norm(xs))
