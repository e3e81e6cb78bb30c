"""
This module defines the side constraints that can be added to a design
problem: linear constraints on the design vector, linear constraints on the
covariance matrix, and augmentation of already performed trials.

Classes:
    ConstraintKind: Kind of a side constraint.
    Sense: Relation of a linear constraint.
    ExtraConstraint: A single side constraint.
    ConstraintItem: One entry of a constraint file.
    ConstraintFile: JSON constraint file.

Functions:
    covariance_constraint_from_criterion: Rows bounding a criterion in Sigma.
    design_matrix: Dense coefficient matrix of the design-linear constraints.
    design_feasible: Feasibility of a count vector.
    covariance_feasible: Feasibility of a covariance matrix.
    forced_points: Points fixed by augmentation constraints.
    load_constraints: Reads a constraint file.
"""
import json
from enum import Enum
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from design.problem import CriterionSpec, DesignProblem

FEASIBILITY_TOL: float = 1e-9

UNKNOWN_LABEL_MSG: str = 'Unknown point label {label!r}'


class ConstraintKind(str, Enum):
    DESIGN_LINEAR = 'design_linear'
    COVARIANCE_LINEAR = 'covariance_linear'
    AUGMENTATION = 'augmentation'


class Sense(str, Enum):
    LE = '<='
    GE = '>='
    EQ = '='


class ExtraConstraint(BaseModel):
    """
    Side constraint of a design problem.

    design_linear: sum_t coeffs[t] d[points[t]] (sense) rhs.
    covariance_linear: sum_t coeffs[t] c[entries[t]] (sense) rhs, with c = vec(Sigma).
    augmentation: d[points[0]] >= rhs.

    Attributes:
        kind (ConstraintKind): Kind of the constraint.
        points (tuple[int, ...]): 0-based design point indices.
        entries (tuple[tuple[int, int], ...]): 0-based (j, k) covariance entries.
        coeffs (tuple[float, ...]): One coefficient per point or entry.
        sense (Sense): Relation.
        rhs (float): Right-hand side.
        name (str | None): Optional row name.
    """
    model_config = ConfigDict(frozen=True)

    kind: ConstraintKind
    points: tuple[int, ...] = ()
    entries: tuple[tuple[int, int], ...] = ()
    coeffs: tuple[float, ...] = ()
    sense: Sense = Sense.GE
    rhs: float = 0.0
    name: str | None = None

    @model_validator(mode='after')
    def _check_shape(self):
        if self.kind is ConstraintKind.DESIGN_LINEAR:
            if not self.points or self.entries or len(self.coeffs) != len(self.points):
                raise ValueError('design_linear needs points and one coefficient per point')
        elif self.kind is ConstraintKind.COVARIANCE_LINEAR:
            if not self.entries or self.points or len(self.coeffs) != len(self.entries):
                raise ValueError('covariance_linear needs entries and one coefficient per entry')
        else:
            if len(self.points) != 1 or self.entries or self.sense is not Sense.GE:
                raise ValueError('augmentation needs exactly one point and sense >=')
            if self.rhs < 0 or self.rhs != int(self.rhs):
                raise ValueError('augmentation count must be a nonnegative integer')
        if any(p < 0 for p in self.points) or any(j < 0 or k < 0 for j, k in self.entries):
            raise ValueError('Indices must be nonnegative')
        return self

    @classmethod
    def design_linear(cls, points, coeffs, sense: Sense | str, rhs: float, name: str | None = None):
        return cls(kind=ConstraintKind.DESIGN_LINEAR, points=tuple(int(p) for p in points),
                   coeffs=tuple(float(a) for a in coeffs), sense=Sense(sense), rhs=rhs, name=name)

    @classmethod
    def covariance_linear(cls, entries, coeffs, sense: Sense | str, rhs: float, name: str | None = None):
        return cls(kind=ConstraintKind.COVARIANCE_LINEAR, entries=tuple((int(j), int(k)) for j, k in entries),
                   coeffs=tuple(float(a) for a in coeffs), sense=Sense(sense), rhs=rhs, name=name)

    @classmethod
    def augmentation(cls, point: int, count: int = 1, name: str | None = None):
        return cls(kind=ConstraintKind.AUGMENTATION, points=(int(point),), coeffs=(1.0,),
                   sense=Sense.GE, rhs=float(count), name=name)

    def holds(self, lhs, tol: float = FEASIBILITY_TOL):
        """
        Test the relation for a left-hand side value (scalar or array).
        """
        slack = tol * (1.0 + abs(self.rhs))
        if self.sense is Sense.LE:
            return lhs <= self.rhs + slack
        if self.sense is Sense.GE:
            return lhs >= self.rhs - slack
        return np.abs(lhs - self.rhs) <= slack

    def covariance_lhs(self, sigmas: np.ndarray) -> np.ndarray:
        """
        Left-hand side for a stack of covariance matrices of shape (T, m, m).
        """
        js = [j for j, _ in self.entries]
        ks = [k for _, k in self.entries]
        return sigmas[:, js, ks] @ np.asarray(self.coeffs)


def covariance_constraint_from_criterion(spec: CriterionSpec, limit: float) -> list[ExtraConstraint]:
    """
    Rows tr(B_l' Sigma B_l) <= limit for every block of a criterion.

    Each row is vec(G_l)' c <= limit with G_l = B_l B_l'; entries with zero
    coefficient are omitted.
    """
    rows = []
    m = spec.m
    for ell, gram in enumerate(spec.grams):
        entries = [(j, k) for k in range(m) for j in range(m) if gram[j, k] != 0.0]
        coeffs = [gram[j, k] for j, k in entries]
        rows.append(ExtraConstraint.covariance_linear(entries, coeffs, Sense.LE, float(limit),
                                                      name=f'cov_{ell + 1}'))
    return rows


def design_matrix(extras, n: int) -> tuple[np.ndarray, list[ExtraConstraint]]:
    """
    Dense coefficient matrix (r x n) of the design-linear and augmentation constraints.
    """
    rows = [c for c in extras if c.kind is not ConstraintKind.COVARIANCE_LINEAR]
    mat = np.zeros((len(rows), n))
    for r, con in enumerate(rows):
        if max(con.points) >= n:
            raise ValueError(f'Constraint references point {max(con.points) + 1}, problem has {n}')
        np.add.at(mat[r], list(con.points), list(con.coeffs))
    return mat, rows


def design_feasible(extras, counts, tol: float = FEASIBILITY_TOL) -> bool:
    """
    Check a count vector against every design-linear and augmentation constraint.
    """
    counts = np.asarray(counts, dtype=float)
    mat, rows = design_matrix(extras, counts.size)
    lhs = mat @ counts
    return all(bool(con.holds(value, tol)) for con, value in zip(rows, lhs))


def covariance_feasible(extras, sigma, tol: float = FEASIBILITY_TOL) -> bool:
    """
    Check a covariance matrix against every covariance-linear constraint.
    """
    stack = np.asarray(sigma, dtype=float)[None]
    return all(bool(con.holds(con.covariance_lhs(stack)[0], tol))
               for con in extras if con.kind is ConstraintKind.COVARIANCE_LINEAR)


class ConstraintChecker:
    """
    Vectorized feasibility tests of many candidate designs against one set of
    side constraints.
    """

    def __init__(self, extras, n: int, tol: float = FEASIBILITY_TOL):
        self.tol = tol
        self.design_rows, self.design_cons = design_matrix(extras, n)
        self.cov_cons = [c for c in extras if c.kind is ConstraintKind.COVARIANCE_LINEAR]

    def design_lhs(self, counts: np.ndarray) -> np.ndarray:
        """
        Row values for count vectors of shape (T, n), returned as (r, T).
        """
        return self.design_rows @ np.asarray(counts, dtype=float).T

    def design_ok(self, lhs: np.ndarray) -> np.ndarray:
        """
        Feasibility mask for design-row values of shape (r, ...).
        """
        ok = np.ones(lhs.shape[1:], dtype=bool)
        for r, con in enumerate(self.design_cons):
            ok &= con.holds(lhs[r], self.tol)
        return ok

    def covariance_ok(self, sigmas: np.ndarray) -> np.ndarray:
        """
        Feasibility mask for covariance matrices of shape (T, m, m).
        """
        ok = np.ones(sigmas.shape[0], dtype=bool)
        for con in self.cov_cons:
            ok &= con.holds(con.covariance_lhs(sigmas), self.tol)
        return ok


def forced_points(extras) -> list[int]:
    """
    Sorted points that augmentation constraints force into a binary design.
    """
    return sorted({c.points[0] for c in extras if c.kind is ConstraintKind.AUGMENTATION and c.rhs > 0})


class ConstraintItem(BaseModel):
    """
    One entry of a constraint file.

    Points are given either as 1-based indices or as labels. Covariance
    entries use 1-based (j, k) pairs; alternatively a criterion tag with a
    limit expands into one row per block.
    """
    kind: ConstraintKind
    points: list[int] | None = None
    labels: list[str] | None = None
    entries: list[tuple[int, int]] | None = None
    coeffs: list[float] | None = None
    sense: Sense = Sense.GE
    rhs: float = 0.0
    criterion: str | None = None
    limit: float | None = None
    count: int = Field(default=1, ge=0)
    name: str | None = None


class ConstraintFile(BaseModel):
    constraints: list[ConstraintItem] = []


def _resolve_points(item: ConstraintItem, problem: DesignProblem) -> list[int]:
    if item.labels is not None:
        lookup = {problem.label(i): i for i in range(problem.n)}
        try:
            return [lookup[label] for label in item.labels]
        except KeyError as exc:
            raise ValueError(UNKNOWN_LABEL_MSG.format(label=exc.args[0])) from exc
    if item.points is None:
        raise ValueError(f'{item.kind.value} constraint needs points or labels')
    if any(p < 1 or p > problem.n for p in item.points):
        raise ValueError(f'Point indices must lie in 1..{problem.n}')
    return [p - 1 for p in item.points]


def to_constraints(data: ConstraintFile, problem: DesignProblem) -> list[ExtraConstraint]:
    """
    Translate a parsed constraint file into 0-based ExtraConstraint objects.
    """
    result = []
    for item in data.constraints:
        if item.kind is ConstraintKind.COVARIANCE_LINEAR:
            if item.criterion is not None:
                if item.limit is None:
                    raise ValueError('Criterion covariance constraints need a limit')
                spec = CriterionSpec.preset(item.criterion, problem)
                result.extend(covariance_constraint_from_criterion(spec, item.limit))
                continue
            if not item.entries:
                raise ValueError('covariance_linear constraint needs entries or a criterion')
            if any(not (1 <= j <= problem.m and 1 <= k <= problem.m) for j, k in item.entries):
                raise ValueError(f'Covariance entries must lie in 1..{problem.m}')
            coeffs = item.coeffs or [1.0] * len(item.entries)
            result.append(ExtraConstraint.covariance_linear([(j - 1, k - 1) for j, k in item.entries], coeffs,
                                                            item.sense, item.rhs, item.name))
        elif item.kind is ConstraintKind.DESIGN_LINEAR:
            points = _resolve_points(item, problem)
            coeffs = item.coeffs or [1.0] * len(points)
            result.append(ExtraConstraint.design_linear(points, coeffs, item.sense, item.rhs, item.name))
        else:
            for point in _resolve_points(item, problem):
                result.append(ExtraConstraint.augmentation(point, item.count, item.name))
    return result


def load_constraints(path: str | Path, problem: DesignProblem) -> list[ExtraConstraint]:
    """
    Read a JSON constraint file: either a list of items or {"constraints": [...]}.
    """
    raw = json.loads(Path(path).read_text(encoding='utf-8'))
    if isinstance(raw, list):
        raw = {'constraints': raw}
    return to_constraints(ConstraintFile.model_validate(raw), problem)
