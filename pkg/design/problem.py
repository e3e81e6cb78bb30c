"""
This module defines the domain types of an exact design problem and the
evaluation of minimax criteria.

A design problem is a finite list of regressors f_1..f_n in R^m together with
a run budget N. A criterion of the minimax family is given by blocks
B_1..B_K and evaluates an information matrix M as
max_l tr(B_l' M^-1 B_l); the same value expressed in the covariance matrix
Sigma = M^-1 is max_l tr(B_l' Sigma B_l).

Classes:
    CriterionKind: Tag of the supported criterion presets.
    DesignProblemBase: Base data model of a design problem (JSON schema).
    DesignProblem: Validated, immutable design problem.
    CriterionSpec: Validated criterion blocks.
    ExactDesign: Replication counts per design point.
    ApproximateDesign: Nonnegative weights summing to one.

Functions:
    load_problem: Reads a design problem from a JSON file.
    info_matrix: Information matrix of an exact design.
    information_matrices: Information matrices of a stack of count vectors.
    criterion_value: Criterion value of an information matrix.
    criterion_values: Criterion values of a stack of information matrices.
    psi_value: Criterion value expressed in the covariance matrix.
    psi_values: Vectorized psi_value over a stack of covariance matrices.
    neg_log_det_values: D-criterion values used by the G-optimality heuristic.
"""
import json
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, model_validator

from errors import DimensionMismatch, RankDeficient, SingularInformation
from linalg.dense import invert, is_positive_definite, positive_definite_mask, symmetric

WEIGHT_SUM_TOL: float = 1e-12
REPLICATIONS_CONTEXT: str = 'replications'

ZERO_REGRESSOR_MSG: str = 'Regressor {index} is the zero vector'
RANK_DEFICIENT_MSG: str = 'Regressors do not span R^{m}'
BLOCKS_RANK_MSG: str = 'Criterion blocks do not have full row rank {m}'
ZERO_COLUMN_MSG: str = 'Criterion blocks contain a zero column'
SINGULAR_INFORMATION_MSG: str = 'Information matrix is singular'


class CriterionKind(str, Enum):
    """
    Tag of a criterion preset.
    """
    A = 'A'
    I = 'I'
    MV = 'MV'
    G = 'G'
    CUSTOM = 'Custom'


class DesignProblemBase(BaseModel):
    """
    Base data model of a design problem, matching the JSON problem file.

    Attributes:
        regressors (list[list[float]]): The n regressors, each of length m.
        run_budget (int): Number of trials N (JSON key "N").
        labels (list[str] | None): Optional display string per design point.
    """
    model_config = ConfigDict(populate_by_name=True)

    regressors: list[list[float]] = Field(min_length=1)
    run_budget: int = Field(alias='N', gt=0)
    labels: list[str] | None = None


class DesignProblem(DesignProblemBase):
    """
    Validated, immutable design problem.

    The constructor rejects problems whose regressors are ragged, contain a
    zero vector or do not span R^m, and problems outside m <= N <= n. A problem
    validated with the replications context only needs m <= N, since its
    points may be repeated.
    """
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    @model_validator(mode='after')
    def _check_problem(self, info: ValidationInfo):
        widths = {len(row) for row in self.regressors}
        if len(widths) != 1 or 0 in widths:
            raise DimensionMismatch('All regressors must have the same positive length')
        arr = np.asarray(self.regressors, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError('Regressors must be finite')
        n, m = arr.shape
        replicated = bool(info.context and info.context.get(REPLICATIONS_CONTEXT))
        if self.run_budget < m:
            raise ValueError(f'Run budget must satisfy m <= N, got m={m}, N={self.run_budget}')
        if not replicated and self.run_budget > n:
            raise ValueError(f'Run budget must satisfy m <= N <= n, got m={m}, N={self.run_budget}, n={n}')
        zero_rows = np.flatnonzero(~np.any(arr != 0.0, axis=1))
        if zero_rows.size:
            raise ValueError(ZERO_REGRESSOR_MSG.format(index=int(zero_rows[0]) + 1))
        if np.linalg.matrix_rank(arr) < m:
            raise RankDeficient(RANK_DEFICIENT_MSG.format(m=m))
        if self.labels is not None and len(self.labels) != n:
            raise DimensionMismatch(f'Expected {n} labels, got {len(self.labels)}')
        return self

    @classmethod
    def from_array(cls, regressors, run_budget: int, labels=None, replications: bool = False) -> 'DesignProblem':
        """
        Build a problem from an n x m array of regressors.

        With replications=True the run budget may exceed the number of points.
        """
        arr = np.asarray(regressors, dtype=float)
        if arr.ndim != 2:
            raise DimensionMismatch('Regressors must form a two-dimensional array')
        return cls.model_validate({'regressors': arr.tolist(), 'N': int(run_budget),
                                   'labels': None if labels is None else [str(lab) for lab in labels]},
                                  context={REPLICATIONS_CONTEXT: replications})

    @cached_property
    def F(self) -> np.ndarray:  # pylint: disable=invalid-name
        """
        Regressors as a read-only n x m array.
        """
        arr = np.asarray(self.regressors, dtype=float)
        arr.setflags(write=False)
        return arr

    @property
    def n(self) -> int:
        return self.F.shape[0]

    @property
    def m(self) -> int:
        return self.F.shape[1]

    @cached_property
    def elementary(self) -> np.ndarray:
        """
        Elementary information matrices f_i f_i' stacked as (n, m, m).
        """
        outer = self.F[:, :, None] * self.F[:, None, :]
        outer.setflags(write=False)
        return outer

    def label(self, index: int) -> str:
        """
        Display label of a design point (0-based index).
        """
        if self.labels is not None:
            return self.labels[index]
        return str(index + 1)


class CriterionSpec(BaseModel):
    """
    Blocks B_1..B_K of a minimax criterion.

    Attributes:
        blocks (list[list[list[float]]]): K matrices of shape m x s_l.
        kind (CriterionKind): Preset tag, Custom for user blocks.
    """
    model_config = ConfigDict(frozen=True)

    blocks: list[list[list[float]]] = Field(min_length=1)
    kind: CriterionKind = CriterionKind.CUSTOM

    @model_validator(mode='after')
    def _check_blocks(self):
        arrays = [np.asarray(block, dtype=float) for block in self.blocks]
        if any(arr.ndim != 2 or arr.shape[1] == 0 for arr in arrays):
            raise DimensionMismatch('Each criterion block must be a non-empty m x s matrix')
        rows = {arr.shape[0] for arr in arrays}
        if len(rows) != 1:
            raise DimensionMismatch('All criterion blocks must have the same number of rows')
        stacked = np.hstack(arrays)
        if not np.all(np.isfinite(stacked)):
            raise ValueError('Criterion blocks must be finite')
        if not np.all(np.any(stacked != 0.0, axis=0)):
            raise ValueError(ZERO_COLUMN_MSG)
        m = stacked.shape[0]
        if np.linalg.matrix_rank(stacked) < m:
            raise RankDeficient(BLOCKS_RANK_MSG.format(m=m))
        return self

    @classmethod
    def from_arrays(cls, blocks, kind: CriterionKind = CriterionKind.CUSTOM) -> 'CriterionSpec':
        """
        Build a criterion from a sequence of numpy blocks.
        """
        as_lists = []
        for block in blocks:
            arr = np.asarray(block, dtype=float)
            if arr.ndim == 1:
                arr = arr[:, None]
            as_lists.append(arr.tolist())
        return cls(blocks=as_lists, kind=kind)

    @classmethod
    def a_optimality(cls, m: int) -> 'CriterionSpec':
        return cls.from_arrays([np.eye(m)], CriterionKind.A)

    @classmethod
    def i_optimality(cls, problem: DesignProblem) -> 'CriterionSpec':
        return cls.from_arrays([problem.F.T], CriterionKind.I)

    @classmethod
    def weighted_i_optimality(cls, problem: DesignProblem, weights) -> 'CriterionSpec':
        """
        Weighted I-optimality: sum_i a_i f_i' M^-1 f_i with positive weights a_i.
        """
        a = np.asarray(weights, dtype=float)
        if a.shape != (problem.n,) or np.any(a <= 0):
            raise ValueError('Weights must be positive, one per design point')
        return cls.from_arrays([problem.F.T * np.sqrt(a)], CriterionKind.CUSTOM)

    @classmethod
    def mv_optimality(cls, m: int) -> 'CriterionSpec':
        eye = np.eye(m)
        return cls.from_arrays([eye[:, [ell]] for ell in range(m)], CriterionKind.MV)

    @classmethod
    def g_optimality(cls, problem: DesignProblem) -> 'CriterionSpec':
        return cls.from_arrays([row[:, None] for row in problem.F], CriterionKind.G)

    @classmethod
    def preset(cls, tag: str, problem: DesignProblem) -> 'CriterionSpec':
        """
        Build a preset criterion from its string tag ("A", "I", "MV" or "G").

        Raises:
            ValueError: If the tag is unknown.
        """
        kind = CriterionKind(tag.upper())
        if kind is CriterionKind.A:
            return cls.a_optimality(problem.m)
        if kind is CriterionKind.I:
            return cls.i_optimality(problem)
        if kind is CriterionKind.MV:
            return cls.mv_optimality(problem.m)
        if kind is CriterionKind.G:
            return cls.g_optimality(problem)
        raise ValueError(f'Criterion tag {tag!r} is not a preset')

    @cached_property
    def block_arrays(self) -> tuple[np.ndarray, ...]:
        return tuple(np.asarray(block, dtype=float) for block in self.blocks)

    @cached_property
    def B(self) -> np.ndarray:  # pylint: disable=invalid-name
        """
        Concatenated blocks (B_1, ..., B_K) as an m x s array.
        """
        return np.hstack(self.block_arrays)

    @cached_property
    def block_offsets(self) -> np.ndarray:
        """
        Column offset of each block inside B.
        """
        widths = [arr.shape[1] for arr in self.block_arrays]
        return np.concatenate([[0], np.cumsum(widths)[:-1]]).astype(int)

    @cached_property
    def grams(self) -> np.ndarray:
        """
        Matrices G_l = B_l B_l' stacked as (K, m, m).
        """
        return np.stack([arr @ arr.T for arr in self.block_arrays])

    @property
    def m(self) -> int:
        return self.B.shape[0]

    @property
    def K(self) -> int:  # pylint: disable=invalid-name
        return len(self.blocks)


class ExactDesign(BaseModel):
    """
    Exact design: number of trials at each design point.

    Attributes:
        counts (tuple[int, ...]): Nonnegative replication counts d_i.
        binary (bool): Whether every count must be 0 or 1.
    """
    model_config = ConfigDict(frozen=True)

    counts: tuple[int, ...] = Field(min_length=1)
    binary: bool = True

    @model_validator(mode='after')
    def _check_counts(self):
        if any(c < 0 for c in self.counts):
            raise ValueError('Design counts must be nonnegative')
        if self.binary and any(c > 1 for c in self.counts):
            raise ValueError('Binary designs only allow counts 0 or 1')
        return self

    @classmethod
    def from_array(cls, counts, binary: bool = True) -> 'ExactDesign':
        arr = np.rint(np.asarray(counts, dtype=float)).astype(int)
        return cls(counts=tuple(int(c) for c in arr), binary=binary)

    @classmethod
    def from_support(cls, n: int, support, binary: bool = True) -> 'ExactDesign':
        """
        Build a design from the 0-based indices of its trials (repeats allowed).
        """
        counts = np.zeros(n, dtype=int)
        np.add.at(counts, np.asarray(list(support), dtype=int), 1)
        return cls.from_array(counts, binary=binary)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=int)

    @property
    def size(self) -> int:
        return int(sum(self.counts))

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.counts) if c > 0)


class ApproximateDesign(BaseModel):
    """
    Approximate design: nonnegative weights summing to one.
    """
    model_config = ConfigDict(frozen=True)

    weights: tuple[float, ...] = Field(min_length=1)

    @model_validator(mode='after')
    def _check_weights(self):
        arr = np.asarray(self.weights, dtype=float)
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError('Weights must be finite and nonnegative')
        if abs(arr.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f'Weights must sum to 1, got {arr.sum()!r}')
        return self

    @classmethod
    def uniform(cls, size: int) -> 'ApproximateDesign':
        return cls(weights=tuple([1.0 / size] * size))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)


def load_problem(path: str | Path, run_budget: int | None = None, replications: bool = False) -> DesignProblem:
    """
    Read a design problem from a JSON file.

    Args:
        path (str | Path): Path of a file with the keys regressors, N and optionally labels.
        run_budget (int | None): Overrides N from the file when given.
        replications (bool): Whether replication caps apply, which lets N exceed n.

    Returns:
        DesignProblem: The validated problem.
    """
    data = json.loads(Path(path).read_text(encoding='utf-8'))
    if run_budget is not None:
        data['N'] = run_budget
        data.pop('run_budget', None)
    return DesignProblem.model_validate(data, context={REPLICATIONS_CONTEXT: replications})


def _check_design(problem: DesignProblem, design: ExactDesign) -> np.ndarray:
    counts = design.as_array()
    if counts.shape != (problem.n,):
        raise DimensionMismatch(f'Design has {counts.size} entries, problem has {problem.n} points')
    return counts


def info_matrix(problem: DesignProblem, design: ExactDesign) -> np.ndarray:
    """
    Information matrix M(d) = sum_i d_i f_i f_i'.

    Args:
        problem (DesignProblem): The design problem.
        design (ExactDesign): Design with one count per design point.

    Returns:
        np.ndarray: Symmetric m x m matrix.

    Raises:
        DimensionMismatch: If the design length differs from n.
    """
    counts = _check_design(problem, design).astype(float)
    m = np.einsum('i,ijk->jk', counts, problem.elementary)
    return symmetric((m + m.T) / 2)


def information_matrices(problem: DesignProblem, counts: np.ndarray) -> np.ndarray:
    """
    Information matrices of a stack of count vectors of shape (T, n).
    """
    return np.einsum('ti,ijk->tjk', np.asarray(counts, dtype=float), problem.elementary)


def psi_value(spec: CriterionSpec, sigma) -> float:
    """
    Criterion value in covariance form, max_l tr(B_l' Sigma B_l).

    Sigma only has to be symmetric; definiteness is not required.

    Raises:
        DimensionMismatch: If Sigma is not m x m.
    """
    s = symmetric(sigma)
    if s.shape != (spec.m, spec.m):
        raise DimensionMismatch(f'Expected a {spec.m} x {spec.m} matrix, got {s.shape}')
    return float(psi_values(spec, s[None])[0])


def psi_values(spec: CriterionSpec, sigmas: np.ndarray) -> np.ndarray:
    """
    Vectorized psi_value over a stack of covariance matrices of shape (T, m, m).
    """
    quad = np.einsum('js,tjk,ks->ts', spec.B, sigmas, spec.B)
    return np.add.reduceat(quad, spec.block_offsets, axis=1).max(axis=1)


def criterion_value(spec: CriterionSpec, m) -> float:
    """
    Criterion value max_l tr(B_l' M^-1 B_l) of an information matrix.

    Raises:
        SingularInformation: If M fails the definiteness test.
        DimensionMismatch: If M is not m x m.
    """
    mat = symmetric(m)
    if mat.shape != (spec.m, spec.m):
        raise DimensionMismatch(f'Expected a {spec.m} x {spec.m} matrix, got {mat.shape}')
    if not is_positive_definite(mat):
        raise SingularInformation(SINGULAR_INFORMATION_MSG)
    return psi_value(spec, invert(mat))


def criterion_values(spec: CriterionSpec, ms: np.ndarray) -> np.ndarray:
    """
    Criterion values of a stack of information matrices; singular ones get +inf.
    """
    values = np.full(ms.shape[0], np.inf)
    if ms.shape[0] == 0:
        return values
    ok = positive_definite_mask(ms)
    if np.any(ok):
        sigmas = np.linalg.inv(ms[ok])
        sigmas = (sigmas + np.swapaxes(sigmas, 1, 2)) / 2
        values[ok] = psi_values(spec, sigmas)
    return values


def neg_log_det_values(ms: np.ndarray) -> np.ndarray:
    """
    Values of -log det M for a stack of information matrices; singular ones get +inf.
    """
    values = np.full(ms.shape[0], np.inf)
    if ms.shape[0] == 0:
        return values
    ok = positive_definite_mask(ms)
    if np.any(ok):
        _, logdet = np.linalg.slogdet(ms[ok])
        values[ok] = -logdet
    return values
