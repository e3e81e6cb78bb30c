"""
This module assembles the mixed-integer linear program whose optimal
solutions are optimal exact designs.

The variables are x = (z, d, c, phi): z holds the products z_ijk = d_i c_jk
(n m^2 entries, point-major, each block in vec order), d the binary design,
c = vec(Sigma) and phi the epigraph variable of the max over the blocks.
Position p = j + k m inside a vec block is entry (j, k) of Sigma. With
interval bounds L <= Sigma <= U, the four McCormick inequalities per (i, j, k)
force z_ijk = d_i c_jk whenever d_i is binary, which makes the covariance
condition sum_i M_i Z_i = I linear.

Classes:
    RowBlock: Rows of one relation with names and right-hand sides.
    VariableLayout: Index arithmetic of the (z, d, c, phi) vector.
    BuildSource: Problem data a model was built from.
    MilpModel: The assembled model.

Functions:
    build: Assembles the model.
    embed_design: Feasible model point of a binary design.
    max_violation: Largest row or bound violation of a point.
    extract_design: Design counts of a model point.
    extract_sigma: Symmetrized covariance matrix of a model point.
"""
import logging
from collections.abc import Mapping
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field

from bounds.covariance_bounds import CovBounds
from design.problem import CriterionSpec, DesignProblem, ExactDesign, info_matrix, psi_value
from errors import DimensionMismatch, InfeasibleCaps, InfiniteBound
from linalg.dense import invert
from milp.constraints import ConstraintKind, ExtraConstraint, Sense
from milp.replications import ReplicationMap

logger = logging.getLogger(__name__)

ASYMMETRY_TOL: float = 1e-7


class RowBlock(BaseModel):
    """
    Linear rows A x (relation) b sharing one relation.

    Attributes:
        matrix (sp.csr_matrix): Coefficients, one row per constraint.
        rhs (np.ndarray): Right-hand sides.
        names (tuple[str, ...]): Row names.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: sp.csr_matrix
    rhs: np.ndarray
    names: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.names)

    @classmethod
    def empty(cls, num_vars: int) -> 'RowBlock':
        return cls(matrix=sp.csr_matrix((0, num_vars)), rhs=np.zeros(0), names=())


class _RowCollector:
    """
    Accumulates sparse triplets of one relation.
    """

    def __init__(self):
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []
        self.rhs: list[float] = []
        self.names: list[str] = []

    def add(self, name: str, cols, vals, rhs: float):
        self.add_many([name], np.zeros(len(cols), dtype=int), cols, vals, [rhs])

    def add_many(self, names, local_rows, cols, vals, rhs):
        """
        Append len(names) rows; local_rows are offsets relative to the first new row.
        """
        offset = len(self.names)
        self.rows.append(np.asarray(local_rows, dtype=int) + offset)
        self.cols.append(np.asarray(cols, dtype=int))
        self.vals.append(np.asarray(vals, dtype=float))
        self.rhs.extend(float(b) for b in rhs)
        self.names.extend(names)

    def finalize(self, num_vars: int) -> RowBlock:
        if not self.names:
            return RowBlock.empty(num_vars)
        coo = sp.coo_matrix((np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
                            shape=(len(self.names), num_vars))
        mat = sp.csr_matrix(coo)
        mat.sum_duplicates()
        mat.eliminate_zeros()
        mat.sort_indices()
        return RowBlock(matrix=mat, rhs=np.asarray(self.rhs, dtype=float), names=tuple(self.names))


class VariableLayout(BaseModel):
    """
    Positions of z, d, c and phi inside the variable vector.
    """
    model_config = ConfigDict(frozen=True)

    n: int = Field(gt=0)
    m: int = Field(gt=0)

    @property
    def z(self) -> slice:
        return slice(0, self.n * self.m ** 2)

    @property
    def d(self) -> slice:
        start = self.n * self.m ** 2
        return slice(start, start + self.n)

    @property
    def c(self) -> slice:
        start = self.n * self.m ** 2 + self.n
        return slice(start, start + self.m ** 2)

    @property
    def phi(self) -> int:
        return self.n * self.m ** 2 + self.n + self.m ** 2

    @property
    def num_vars(self) -> int:
        return self.phi + 1

    def z_index(self, i: int, j: int, k: int) -> int:
        return i * self.m ** 2 + j + k * self.m

    def d_index(self, i: int) -> int:
        return self.d.start + i

    def c_index(self, j: int, k: int) -> int:
        return self.c.start + j + k * self.m

    def names(self) -> list[str]:
        """
        Variable names z_i_j_k, d_i, c_j_k and phi with 1-based indices.
        """
        m = self.m
        vec = [(p % m + 1, p // m + 1) for p in range(m * m)]
        names = [f'z_{i + 1}_{j}_{k}' for i in range(self.n) for j, k in vec]
        names += [f'd_{i + 1}' for i in range(self.n)]
        names += [f'c_{j}_{k}' for j, k in vec]
        names.append('phi')
        return names


class BuildSource(BaseModel):
    """
    Inputs of a built model, kept for direct evaluation of its solutions.
    """
    model_config = ConfigDict(frozen=True)

    problem: DesignProblem
    spec: CriterionSpec
    bounds: CovBounds
    replications: ReplicationMap | None = None


class MilpModel(BaseModel):
    """
    Mixed-integer linear program: minimize objective' x subject to
    eq, ge and le rows, variable bounds and integrality flags.

    Attributes:
        name (str): Model name used by the exporters.
        objective (np.ndarray): Objective coefficients.
        eq (RowBlock): Rows A x = b.
        ge (RowBlock): Rows A x >= b.
        le (RowBlock): Rows A x <= b.
        var_lower (np.ndarray): Lower bounds, -inf allowed.
        var_upper (np.ndarray): Upper bounds, +inf allowed.
        integrality (np.ndarray): True for integer variables.
        var_names (tuple[str, ...]): Variable names.
        layout (VariableLayout | None): Layout of a design model.
        source (BuildSource | None): Problem data of a design model.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str = 'optex'
    objective: np.ndarray
    eq: RowBlock
    ge: RowBlock
    le: RowBlock
    var_lower: np.ndarray
    var_upper: np.ndarray
    integrality: np.ndarray
    var_names: tuple[str, ...]
    layout: VariableLayout | None = None
    source: BuildSource | None = None

    @property
    def num_vars(self) -> int:
        return self.objective.size

    @property
    def num_rows(self) -> int:
        return self.eq.size + self.ge.size + self.le.size

    @cached_property
    def d_slice(self) -> slice:
        if self.layout is not None:
            return self.layout.d
        flagged = np.flatnonzero(self.integrality)
        if flagged.size == 0:
            return slice(0, 0)
        return slice(int(flagged[0]), int(flagged[-1]) + 1)

    def fixed_bounds(self, fixings: Mapping[int, int] | None = None) -> tuple[np.ndarray, np.ndarray]:
        """
        Variable bounds with design variables fixed; keys are positions in the d-slice.
        """
        lower, upper = self.var_lower.copy(), self.var_upper.copy()
        for pos, value in (fixings or {}).items():
            idx = self.d_slice.start + pos
            lower[idx] = upper[idx] = float(value)
        return lower, upper


def _check_inputs(problem: DesignProblem, spec: CriterionSpec, bounds: CovBounds):
    if spec.m != problem.m:
        raise DimensionMismatch(f'Criterion has m={spec.m}, problem has m={problem.m}')
    if bounds.m != problem.m:
        raise DimensionMismatch(f'Bounds are {bounds.m} x {bounds.m}, problem has m={problem.m}')
    if not (np.all(np.isfinite(bounds.L)) and np.all(np.isfinite(bounds.U))):
        raise InfiniteBound('Covariance bounds must be finite')


def _mccormick_rows(collector: _RowCollector, layout: VariableLayout, family: str, d_coef: np.ndarray,
                    with_c: bool, rhs: np.ndarray):
    """
    One row per (i, p): z_ip + d_coef[p] d_i - [c_p] (relation) rhs[p].
    """
    n, m2 = layout.n, layout.m ** 2
    i_idx = np.repeat(np.arange(n), m2)
    p_idx = np.tile(np.arange(m2), n)
    rows = np.arange(n * m2)
    cols = [i_idx * m2 + p_idx, layout.d.start + i_idx]
    vals = [np.ones(n * m2), d_coef[p_idx]]
    if with_c:
        cols.append(layout.c.start + p_idx)
        vals.append(-np.ones(n * m2))
    m = layout.m
    names = [f'{family}_{i + 1}_{p % m + 1}_{p // m + 1}' for i, p in zip(i_idx, p_idx)]
    collector.add_many(names, np.tile(rows, len(cols)), np.concatenate(cols), np.concatenate(vals), rhs[p_idx])


class _NameRegistry:

    def __init__(self):
        self.used: set[str] = set()
        self.counter = 0

    def next(self, requested: str | None) -> str:
        self.counter += 1
        name = requested or f'user_{self.counter}'
        if name in self.used:
            name = f'{name}_{self.counter}'
        self.used.add(name)
        return name


def _extra_rows(extras, layout: VariableLayout, collectors: dict[Sense, _RowCollector], lower: np.ndarray):
    names = _NameRegistry()
    for con in extras:
        if con.kind is ConstraintKind.AUGMENTATION:
            count = int(con.rhs)
            if count > 1:
                raise InfeasibleCaps(f'Binary designs cannot hold {count} trials at point {con.points[0] + 1}')
            if con.points[0] >= layout.n:
                raise ValueError(f'Augmentation references point {con.points[0] + 1}, problem has {layout.n}')
            if count == 1:
                lower[layout.d_index(con.points[0])] = 1.0
            continue
        if con.kind is ConstraintKind.DESIGN_LINEAR:
            if max(con.points) >= layout.n:
                raise ValueError(f'Constraint references point {max(con.points) + 1}, problem has {layout.n}')
            cols = [layout.d_index(p) for p in con.points]
        else:
            if any(j >= layout.m or k >= layout.m for j, k in con.entries):
                raise DimensionMismatch(f'Covariance entries must lie in 0..{layout.m - 1}')
            cols = [layout.c_index(j, k) for j, k in con.entries]
        collectors[con.sense].add(names.next(con.name), cols, con.coeffs, con.rhs)


def build(problem: DesignProblem, spec: CriterionSpec, bounds: CovBounds, extras=(),
          replications: ReplicationMap | None = None, name: str = 'optex') -> MilpModel:
    """
    Assemble the design MILP.

    Rows, in order: eq holds the m^2 covariance rows sigma_j_k, the
    cardinality row and user equalities; ge holds the McCormick rows mc1 and
    mc2, the epigraph rows epi_l and user >= rows; le holds the McCormick rows
    mc3 and mc4 and user <= rows. Augmentations fix their design variables
    to one instead of adding rows.

    Args:
        problem (DesignProblem): Binary-mode problem (replications already expanded).
        spec (CriterionSpec): Criterion blocks.
        bounds (CovBounds): Finite bounds L <= Sigma* <= U.
        extras (Iterable[ExtraConstraint]): Side constraints on this problem's points.
        replications (ReplicationMap | None): Map back to the original points.
        name (str): Model name.

    Returns:
        MilpModel: The assembled model.

    Raises:
        InfiniteBound: If a bound is not finite.
        DimensionMismatch: If the inputs do not share m.
    """
    _check_inputs(problem, spec, bounds)
    n, m = problem.n, problem.m
    layout = VariableLayout(n=n, m=m)
    num_vars = layout.num_vars
    lvec = np.asarray(bounds.L).flatten(order='F')
    uvec = np.asarray(bounds.U).flatten(order='F')

    eq, ge, le = _RowCollector(), _RowCollector(), _RowCollector()

    # sum_i M_i Z_i = I in vec order: row (j, k) has M_i[j, l] on z_ilk
    elementary = problem.elementary
    for k in range(m):
        for j in range(m):
            i_idx, l_idx = np.nonzero(elementary[:, j, :])
            cols = i_idx * m * m + l_idx + k * m
            eq.add(f'sigma_{j + 1}_{k + 1}', cols, elementary[i_idx, j, l_idx], 1.0 if j == k else 0.0)
    eq.add('card', np.arange(layout.d.start, layout.d.stop), np.ones(n), float(problem.run_budget))

    _mccormick_rows(ge, layout, 'mc1', -lvec, False, np.zeros(m * m))
    _mccormick_rows(ge, layout, 'mc2', -uvec, True, -uvec)
    for ell, gram in enumerate(spec.grams):
        gvec = gram.flatten(order='F')
        nz = np.flatnonzero(gvec)
        ge.add(f'epi_{ell + 1}', np.append(layout.c.start + nz, layout.phi), np.append(-gvec[nz], 1.0), 0.0)
    _mccormick_rows(le, layout, 'mc3', -uvec, False, np.zeros(m * m))
    _mccormick_rows(le, layout, 'mc4', -lvec, True, -lvec)

    lower = np.concatenate([np.tile(lvec, n), np.zeros(n), lvec, [0.0]])
    upper = np.concatenate([np.tile(uvec, n), np.ones(n), uvec, [np.inf]])
    _extra_rows(list(extras), layout, {Sense.EQ: eq, Sense.GE: ge, Sense.LE: le}, lower)

    integrality = np.zeros(num_vars, dtype=bool)
    integrality[layout.d] = True
    objective = np.zeros(num_vars)
    objective[layout.phi] = 1.0
    model = MilpModel(name=name, objective=objective, eq=eq.finalize(num_vars), ge=ge.finalize(num_vars),
                      le=le.finalize(num_vars), var_lower=lower, var_upper=upper, integrality=integrality,
                      var_names=tuple(layout.names()), layout=layout,
                      source=BuildSource(problem=problem, spec=spec, bounds=bounds, replications=replications))
    logger.info('Built MILP %s: %d variables, %d rows (%d eq, %d ge, %d le)', name, model.num_vars,
                model.num_rows, model.eq.size, model.ge.size, model.le.size)
    return model


def _require_design_model(model: MilpModel) -> tuple[VariableLayout, BuildSource]:
    if model.layout is None or model.source is None:
        raise ValueError('Model was not built from a design problem')
    return model.layout, model.source


def embed_design(model: MilpModel, design: ExactDesign) -> np.ndarray:
    """
    Model point (z, d, c, phi) of a binary design with Sigma = M(d)^-1.

    Raises:
        SingularInformation: If M(d) is singular.
    """
    layout, source = _require_design_model(model)
    counts = design.as_array().astype(float)
    sigma = invert(info_matrix(source.problem, design))
    cvec = sigma.flatten(order='F')
    z = np.outer(counts, cvec).ravel()
    return np.concatenate([z, counts, cvec, [psi_value(source.spec, sigma)]])


def max_violation(model: MilpModel, x) -> float:
    """
    Largest absolute violation of a row or a variable bound at x.
    """
    x = np.asarray(x, dtype=float)
    parts = [0.0]
    if model.eq.size:
        parts.append(float(np.max(np.abs(model.eq.matrix @ x - model.eq.rhs))))
    if model.ge.size:
        parts.append(float(np.max(model.ge.rhs - model.ge.matrix @ x)))
    if model.le.size:
        parts.append(float(np.max(model.le.matrix @ x - model.le.rhs)))
    parts.append(float(np.max(model.var_lower - x)))
    parts.append(float(np.max(x - model.var_upper)))
    return max(parts)


def extract_design(model: MilpModel, x) -> ExactDesign:
    """
    Binary design given by the rounded d-slice of x.
    """
    return ExactDesign.from_array(np.asarray(x, dtype=float)[model.d_slice], binary=True)


def extract_sigma(model: MilpModel, x) -> np.ndarray:
    """
    Covariance matrix (C + C') / 2 of the c-slice; asymmetry above 1e-7 is logged.
    """
    layout, _ = _require_design_model(model)
    c = np.asarray(x, dtype=float)[layout.c].reshape((layout.m, layout.m), order='F')
    asymmetry = float(np.max(np.abs(c - c.T)))
    if asymmetry > ASYMMETRY_TOL:
        logger.warning('Covariance variables are asymmetric by %.3g', asymmetry)
    return (c + c.T) / 2
