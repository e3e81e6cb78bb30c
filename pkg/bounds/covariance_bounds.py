"""
This module constructs elementwise bounds L <= Sigma* <= U on the covariance
matrix of an optimal design.

All bounds derive from one inequality: if tr(B_l' Sigma B_l) <= alpha for
every block and w is an approximate design on the blocks with
N(w) = sum_l w_l B_l B_l', then tr(X' Sigma X) <= alpha lambda_max(X' N^+(w) X)
whenever the columns of X lie in the column space of N(w). Choosing X = e_j
bounds the variances (type I, combined through |c_jk| <= sqrt(c_jj c_kk)),
and X = (e_j, e_k) bounds c_jj + c_kk (type II, combined through
|c_jk| <= (c_jj + c_kk) / 2). Two families of auxiliary designs are used:
the uniform design and the Moore-Penrose designs w^(j+).

Classes:
    CovBounds: Bound matrices L, U and the reference value alpha.
    BoundsOverride: JSON file with externally computed bounds.

Functions:
    reference_alpha: Criterion value of the reference design.
    mp_design: Moore-Penrose approximate design for e_j.
    trace_bound: alpha lambda_max(X' N^+(w) X).
    type1_bounds: Bounds from the variances.
    type2_bounds: Bounds from the sums of pairs of variances.
    bounds_from_alpha: Combined bounds for a given alpha.
    combined_bounds: Combined bounds for a reference design.
    load_bounds_override: Reads a bounds override file.
"""
import json
import logging
from functools import cached_property
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from design.problem import ApproximateDesign, CriterionSpec, DesignProblem, ExactDesign, criterion_value, info_matrix
from errors import ColumnSpaceViolation, DimensionMismatch, InfiniteBound
from linalg.dense import column_space_contains, invert, max_eig, pinv, symmetric

logger = logging.getLogger(__name__)

BOUND_TOL: float = 1e-9

COLUMN_SPACE_MSG: str = 'Columns of X are not in the column space of N(w)'
INFINITE_BOUND_MSG: str = 'Covariance bounds must be finite'


class CovBounds(BaseModel):
    """
    Elementwise bounds on the optimal covariance matrix.

    Attributes:
        lower (list[list[float]]): Symmetric matrix L with zero diagonal (JSON key "L").
        upper (list[list[float]]): Symmetric matrix U (JSON key "U").
        alpha (float | None): Criterion value of the reference design.
    """
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    lower: list[list[float]] = Field(alias='L')
    upper: list[list[float]] = Field(alias='U')
    alpha: float | None = None

    @model_validator(mode='after')
    def _check_bounds(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.ndim != 2 or lower.shape != upper.shape or lower.shape[0] != lower.shape[1]:
            raise DimensionMismatch('L and U must be square matrices of the same size')
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise InfiniteBound(INFINITE_BOUND_MSG)
        symmetric(lower)
        symmetric(upper)
        if np.any(lower > upper):
            raise ValueError('Bounds must satisfy L <= U')
        if np.any(np.diag(lower) != 0.0):
            raise ValueError('Lower bounds of the variances must be zero')
        return self

    @classmethod
    def from_arrays(cls, lower, upper, alpha: float | None = None) -> 'CovBounds':
        return cls(L=np.asarray(lower, dtype=float).tolist(), U=np.asarray(upper, dtype=float).tolist(),
                   alpha=alpha)

    @cached_property
    def L(self) -> np.ndarray:  # pylint: disable=invalid-name
        arr = np.asarray(self.lower, dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def U(self) -> np.ndarray:  # pylint: disable=invalid-name
        arr = np.asarray(self.upper, dtype=float)
        arr.setflags(write=False)
        return arr

    @property
    def m(self) -> int:
        return self.L.shape[0]

    def contains(self, sigma, tol: float = BOUND_TOL) -> bool:
        """
        Check L - tol <= Sigma <= U + tol elementwise.
        """
        s = np.asarray(sigma, dtype=float)
        return bool(np.all(s >= self.L - tol) and np.all(s <= self.U + tol))


class BoundsOverride(BaseModel):
    """
    Bounds override file {L, U}.
    """
    L: list[list[float]]  # pylint: disable=invalid-name
    U: list[list[float]]  # pylint: disable=invalid-name


def reference_alpha(problem: DesignProblem, spec: CriterionSpec, d0: ExactDesign) -> float:
    """
    Criterion value alpha of the reference design d0.

    Raises:
        SingularInformation: If M(d0) is singular.
    """
    return criterion_value(spec, info_matrix(problem, d0))


def _block_slices(spec: CriterionSpec) -> list[slice]:
    ends = list(spec.block_offsets[1:]) + [spec.B.shape[1]]
    return [slice(int(a), int(b)) for a, b in zip(spec.block_offsets, ends)]


def mp_design(spec: CriterionSpec, j: int) -> ApproximateDesign:
    """
    Moore-Penrose approximate design for e_j (0-based j).

    With (h_1', ..., h_K')' = B^+ e_j, the weights are ||h_l|| / sum_k ||h_k||.
    """
    if not 0 <= j < spec.m:
        raise IndexError(f'Coordinate {j} out of range 0..{spec.m - 1}')
    h = pinv(spec.B)[:, j]
    norms = np.array([np.linalg.norm(h[s]) for s in _block_slices(spec)])
    weights = norms / norms.sum()
    return ApproximateDesign(weights=tuple(float(w) for w in weights))


def _mixture(first: ApproximateDesign, second: ApproximateDesign) -> ApproximateDesign:
    weights = (first.as_array() + second.as_array()) / 2
    return ApproximateDesign(weights=tuple(float(w) for w in weights / weights.sum()))


def _n_matrix(spec: CriterionSpec, w: ApproximateDesign) -> np.ndarray:
    weights = w.as_array()
    if weights.size != spec.K:
        raise DimensionMismatch(f'Expected {spec.K} weights, got {weights.size}')
    return np.einsum('l,ljk->jk', weights, spec.grams)


def trace_bound(spec: CriterionSpec, alpha: float, w: ApproximateDesign, x) -> float:
    """
    Upper bound alpha lambda_max(X' N^+(w) X) on tr(X' Sigma X).

    Args:
        spec (CriterionSpec): Criterion blocks.
        alpha (float): Bound on every tr(B_l' Sigma B_l).
        w (ApproximateDesign): Weights on the K blocks.
        x (array_like): m x r matrix (or vector) X.

    Returns:
        float: The bound.

    Raises:
        ColumnSpaceViolation: If C(X) is not contained in C(N(w)).
    """
    n_mat = _n_matrix(spec, w)
    xs = np.asarray(x, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    if not column_space_contains(n_mat, xs):
        raise ColumnSpaceViolation(COLUMN_SPACE_MSG)
    inner = xs.T @ pinv(n_mat) @ xs
    return alpha * max(max_eig((inner + inner.T) / 2), 0.0)


def _uniform_pinv(spec: CriterionSpec) -> np.ndarray:
    """
    N^+ of the uniform design, K (BB')^-1.
    """
    return spec.K * invert(spec.B @ spec.B.T)


def _variance_bounds(spec: CriterionSpec, alpha: float) -> np.ndarray:
    uniform = alpha * np.diag(_uniform_pinv(spec))
    mp = np.array([alpha * pinv(_n_matrix(spec, mp_design(spec, j)))[j, j] for j in range(spec.m)])
    return np.minimum(uniform, mp)


def type1_bounds(spec: CriterionSpec, alpha: float) -> np.ndarray:
    """
    Type I bounds |c_jk| <= sqrt(D_j D_k), where D_j is the smaller of the
    uniform-design and Moore-Penrose-design bounds on c_jj.
    """
    variances = _variance_bounds(spec, alpha)
    return np.sqrt(np.outer(variances, variances))


def type2_bounds(spec: CriterionSpec, alpha: float) -> np.ndarray:
    """
    Type II bounds on the off-diagonal entries; the diagonal is taken from type I.

    For j != k, |c_jk| <= (alpha / 2) min(lambda_max(E' K (BB')^-1 E),
    lambda_max(E' N^+(w^(jk+)) E)) with E = (e_j, e_k).
    """
    result = type1_bounds(spec, alpha)
    uniform = _uniform_pinv(spec)
    designs = [mp_design(spec, j) for j in range(spec.m)]
    eye = np.eye(spec.m)
    for j in range(spec.m):
        for k in range(j + 1, spec.m):
            e = eye[:, [j, k]]
            by_uniform = alpha / 2 * max_eig(e.T @ uniform @ e)
            by_mp = trace_bound(spec, alpha, _mixture(designs[j], designs[k]), e) / 2
            result[j, k] = result[k, j] = min(by_uniform, by_mp)
    return result


def bounds_from_alpha(spec: CriterionSpec, alpha: float) -> CovBounds:
    """
    Combined bounds: U = min(type I, type II), L_jj = 0 and L_jk = -U_jk.
    """
    upper = np.minimum(type1_bounds(spec, alpha), type2_bounds(spec, alpha))
    upper = (upper + upper.T) / 2
    lower = -upper
    np.fill_diagonal(lower, 0.0)
    return CovBounds.from_arrays(lower, upper, alpha)


def combined_bounds(problem: DesignProblem, spec: CriterionSpec, d0: ExactDesign) -> CovBounds:
    """
    Covariance bounds from the reference design d0.

    Raises:
        SingularInformation: If M(d0) is singular.
    """
    alpha = reference_alpha(problem, spec, d0)
    bounds = bounds_from_alpha(spec, alpha)
    logger.info('Covariance bounds from alpha=%.10g: max U=%.6g', alpha, float(bounds.U.max()))
    return bounds


def load_bounds_override(path: str | Path, alpha: float | None = None) -> CovBounds:
    """
    Read externally computed bounds from a JSON file {L, U}.
    """
    data = BoundsOverride.model_validate(json.loads(Path(path).read_text(encoding='utf-8')))
    return CovBounds(L=data.L, U=data.U, alpha=alpha)
