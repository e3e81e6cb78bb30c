"""
This module solves the linear relaxations of the design MILP.

The reference backend is a dense two-phase primal simplex for bounded
variables: every variable is shifted to the range [0, u], nonbasic variables
sit at one of their bounds, and a bound flip replaces a pivot whenever the
entering variable reaches its opposite bound first. Dantzig's rule selects
the entering variable until 200 degenerate pivots have been made, after
which Bland's rule takes over. The basis inverse is recomputed from the
original matrix every 100 pivots.

The `highs` backend delegates to scipy.optimize.linprog; `auto` keeps the
dense simplex for small tableaus.

Classes:
    LpStatus: Outcome of a solve.
    LpBackend: LP solver selection.
    PivotRule: Entering-variable rule of the dense simplex.
    LinearProgram: min c'x s.t. A_ub x <= b_ub, A_eq x = b_eq, l <= x <= u.
    LpSolution: Status, objective and primal point.

Functions:
    solve_linear_program: Solves a LinearProgram.
    solve_lp: Solves the relaxation of a MilpModel with fixed design variables.
"""
import logging
from collections.abc import Mapping
from enum import Enum

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict
from scipy.optimize import linprog

from errors import DimensionMismatch, IterationLimit
from milp.builder import MilpModel

logger = logging.getLogger(__name__)

PIVOT_TOL: float = 1e-9
REDUCED_COST_TOL: float = 1e-9
DEGENERATE_TOL: float = 1e-12
PHASE1_TOL: float = 1e-7
BLAND_AFTER: int = 200
REFACTOR_EVERY: int = 100
ITERATIONS_PER_SIZE: int = 50
AUTO_DENSE_LIMIT: float = 1.5e6

ITERATION_LIMIT_MSG: str = 'Simplex exceeded {limit} iterations'


class LpStatus(str, Enum):
    OPTIMAL = 'Optimal'
    INFEASIBLE = 'Infeasible'
    UNBOUNDED = 'Unbounded'


class LpBackend(str, Enum):
    AUTO = 'auto'
    SIMPLEX = 'simplex'
    HIGHS = 'highs'


class PivotRule(str, Enum):
    DANTZIG = 'dantzig'
    BLAND = 'bland'


class LinearProgram(BaseModel):
    """
    Linear program min c'x s.t. A_ub x <= b_ub, A_eq x = b_eq, lower <= x <= upper.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    c: np.ndarray
    a_ub: sp.csr_matrix
    b_ub: np.ndarray
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def from_arrays(cls, c, a_ub=None, b_ub=None, a_eq=None, b_eq=None, lower=None, upper=None) -> 'LinearProgram':
        """
        Build a program from dense or sparse arrays; bounds default to [0, inf).
        """
        c = np.asarray(c, dtype=float)
        n = c.size
        a_ub = sp.csr_matrix((0, n)) if a_ub is None else sp.csr_matrix(a_ub, dtype=float)
        a_eq = sp.csr_matrix((0, n)) if a_eq is None else sp.csr_matrix(a_eq, dtype=float)
        b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
        b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
        lower = np.zeros(n) if lower is None else np.asarray(lower, dtype=float)
        upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
        if a_ub.shape != (b_ub.size, n) or a_eq.shape != (b_eq.size, n) or lower.size != n or upper.size != n:
            raise DimensionMismatch('Linear program arrays have inconsistent shapes')
        return cls(c=c, a_ub=a_ub, b_ub=b_ub, a_eq=a_eq, b_eq=b_eq, lower=lower, upper=upper)

    @classmethod
    def from_model(cls, model: MilpModel, lower=None, upper=None) -> 'LinearProgram':
        """
        Relaxation of a MILP; >= rows are negated into <= rows.
        """
        a_ub = sp.csr_matrix(sp.vstack([model.le.matrix, -model.ge.matrix], format='csr'))
        b_ub = np.concatenate([model.le.rhs, -model.ge.rhs])
        return cls.from_arrays(model.objective, a_ub, b_ub, model.eq.matrix, model.eq.rhs,
                               model.var_lower if lower is None else lower,
                               model.var_upper if upper is None else upper)

    @property
    def num_vars(self) -> int:
        return self.c.size

    @property
    def num_rows(self) -> int:
        return self.b_ub.size + self.b_eq.size

    def max_violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        parts = [0.0, float(np.max(self.lower - x, initial=0.0)), float(np.max(x - self.upper, initial=0.0))]
        if self.b_ub.size:
            parts.append(float(np.max(self.a_ub @ x - self.b_ub)))
        if self.b_eq.size:
            parts.append(float(np.max(np.abs(self.a_eq @ x - self.b_eq))))
        return max(parts)


class LpSolution(BaseModel):
    """
    Result of an LP solve.

    Attributes:
        status (LpStatus): Outcome.
        objective (float): Optimal value; +inf if infeasible, -inf if unbounded.
        x (np.ndarray | None): Optimal point.
        iterations (int): Pivots and bound flips.
        backend (LpBackend): Backend that produced the solution.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    status: LpStatus
    objective: float
    x: np.ndarray | None = None
    iterations: int = 0
    backend: LpBackend = LpBackend.SIMPLEX


class _BoundedSimplex:
    """
    Dense tableau B^-1 A with basic values beta for min cost'y,
    A y = b, 0 <= y <= ub.
    """

    def __init__(self, a: np.ndarray, b: np.ndarray, ub: np.ndarray, basis: np.ndarray, rule: PivotRule):
        self.a = a
        self.b = b
        self.ub = ub
        self.basis = basis
        self.rule = rule
        self.rows, self.cols = a.shape
        self.at_upper = np.zeros(self.cols, dtype=bool)
        self.eligible = np.ones(self.cols, dtype=bool)
        self.iterations = 0
        self.max_iterations = ITERATIONS_PER_SIZE * (self.rows + self.cols)
        self.degenerate = 0
        self.since_refactor = 0
        self.tab = np.zeros((self.rows, self.cols))
        self.beta = np.zeros(self.rows)
        self.refactor()

    def refactor(self):
        if self.rows == 0:
            return
        bmat = self.a[:, self.basis]
        rhs = self.b - self.a[:, self.at_upper] @ self.ub[self.at_upper]
        try:
            self.tab = np.linalg.solve(bmat, self.a)
            self.beta = np.linalg.solve(bmat, rhs)
        except np.linalg.LinAlgError as exc:
            raise IterationLimit('Simplex basis became singular') from exc
        self.since_refactor = 0

    def _entering(self, cost: np.ndarray) -> int | None:
        reduced = cost - cost[self.basis] @ self.tab if self.rows else cost.copy()
        nonbasic = self.eligible & (self.ub > 0)
        nonbasic[self.basis] = False
        improving = nonbasic & np.where(self.at_upper, reduced > REDUCED_COST_TOL, reduced < -REDUCED_COST_TOL)
        candidates = np.flatnonzero(improving)
        if candidates.size == 0:
            return None
        if self.rule is PivotRule.BLAND:
            return int(candidates[0])
        return int(candidates[np.argmax(np.abs(reduced[candidates]))])

    def _ratio_test(self, alpha: np.ndarray) -> tuple[float, int, bool]:
        """
        Step length, blocking row (-1 for none) and whether the blocking
        basic variable leaves at its upper bound.
        """
        steps = np.full(self.rows, np.inf)
        ub_b = self.ub[self.basis]
        down = alpha > PIVOT_TOL
        steps[down] = np.maximum(self.beta[down], 0.0) / alpha[down]
        up = (alpha < -PIVOT_TOL) & np.isfinite(ub_b)
        steps[up] = np.maximum(ub_b[up] - self.beta[up], 0.0) / -alpha[up]
        if self.rows == 0 or not np.isfinite(steps.min()):
            return np.inf, -1, False
        best = steps.min()
        ties = np.flatnonzero(steps <= best + DEGENERATE_TOL)
        if self.rule is PivotRule.BLAND:
            row = int(ties[np.argmin(self.basis[ties])])
        else:
            row = int(ties[np.argmax(np.abs(alpha[ties]))])
        return float(best), row, bool(up[row])

    def pivot(self, row: int, col: int):
        prow = self.tab[row] / self.tab[row, col]
        self.tab -= np.outer(self.tab[:, col], prow)
        self.tab[row] = prow
        self.basis[row] = col

    def run(self, cost: np.ndarray) -> LpStatus:
        while True:
            if self.iterations >= self.max_iterations:
                raise IterationLimit(ITERATION_LIMIT_MSG.format(limit=self.max_iterations))
            col = self._entering(cost)
            if col is None:
                return LpStatus.OPTIMAL
            direction = -1.0 if self.at_upper[col] else 1.0
            alpha = direction * self.tab[:, col] if self.rows else np.zeros(0)
            step, row, leaves_upper = self._ratio_test(alpha)
            if not np.isfinite(step) and not np.isfinite(self.ub[col]):
                return LpStatus.UNBOUNDED
            self.iterations += 1
            if self.ub[col] <= step:
                step = self.ub[col]
                self.beta -= step * alpha
                self.at_upper[col] = not self.at_upper[col]
            else:
                entering_value = step if direction > 0 else self.ub[col] - step
                self.beta -= step * alpha
                leaving = self.basis[row]
                self.at_upper[leaving] = leaves_upper
                self.pivot(row, col)
                self.at_upper[col] = False
                self.beta[row] = entering_value
                self.since_refactor += 1
            if step <= DEGENERATE_TOL:
                self.degenerate += 1
                if self.degenerate == BLAND_AFTER and self.rule is PivotRule.DANTZIG:
                    logger.debug('Switching to Bland\'s rule after %d degenerate pivots', BLAND_AFTER)
                    self.rule = PivotRule.BLAND
            if self.since_refactor >= REFACTOR_EVERY:
                self.refactor()

    def values(self) -> np.ndarray:
        y = np.where(self.at_upper, self.ub, 0.0)
        y[self.basis] = self.beta
        return y

    def drive_out(self, artificial: np.ndarray):
        """
        Pivot basic artificials out of the basis where a structural column allows it.
        """
        for row in range(self.rows):
            if not artificial[self.basis[row]]:
                continue
            entries = np.abs(self.tab[row])
            entries[artificial] = 0.0
            entries[self.basis] = 0.0
            col = int(np.argmax(entries))
            if entries[col] <= PIVOT_TOL:
                continue
            value = self.ub[col] if self.at_upper[col] else 0.0
            self.pivot(row, col)
            self.at_upper[col] = False
            self.beta[row] = value
        self.refactor()


def _standard_form(lp: LinearProgram):
    """
    Substitute x = offset + sign y with 0 <= y <= ub and add slacks.
    """
    lower, upper = lp.lower, lp.upper
    columns: list[tuple[int, float, float]] = []
    offset = np.zeros(lp.num_vars)
    for j in range(lp.num_vars):
        if np.isfinite(lower[j]):
            columns.append((j, 1.0, upper[j] - lower[j]))
            offset[j] = lower[j]
        elif np.isfinite(upper[j]):
            columns.append((j, -1.0, np.inf))
            offset[j] = upper[j]
        else:
            columns.extend([(j, 1.0, np.inf), (j, -1.0, np.inf)])
    src = [j for j, _, _ in columns]
    sign = [s for _, s, _ in columns]
    ub = [u for _, _, u in columns]
    src_arr, sign_arr = np.asarray(src, dtype=int), np.asarray(sign)
    a_ub = lp.a_ub.toarray()[:, src_arr] * sign_arr
    a_eq = lp.a_eq.toarray()[:, src_arr] * sign_arr
    b_ub = lp.b_ub - lp.a_ub @ offset
    b_eq = lp.b_eq - lp.a_eq @ offset
    m_ub, m_eq = b_ub.size, b_eq.size
    a = np.vstack([np.hstack([a_ub, np.eye(m_ub)]),
                   np.hstack([a_eq, np.zeros((m_eq, m_ub))])])
    b = np.concatenate([b_ub, b_eq])
    ub_all = np.concatenate([ub, np.full(m_ub, np.inf)])
    cost = np.concatenate([lp.c[src_arr] * sign_arr, np.zeros(m_ub)])
    return a, b, ub_all, cost, src_arr, sign_arr, offset


def _solve_dense(lp: LinearProgram, rule: PivotRule) -> LpSolution:
    a, b, ub, cost, src, sign, offset = _standard_form(lp)
    rows = b.size
    n_y = src.size
    negative = b < 0
    a[negative] *= -1.0
    b = np.where(negative, -b, b)
    m_ub = lp.b_ub.size
    basis = np.empty(rows, dtype=int)
    needs_artificial = []
    for r in range(rows):
        if r < m_ub and not negative[r]:
            basis[r] = n_y + r
        else:
            needs_artificial.append(r)
    n_art = len(needs_artificial)
    art_cols = np.zeros((rows, n_art))
    for t, r in enumerate(needs_artificial):
        art_cols[r, t] = 1.0
        basis[r] = a.shape[1] + t
    a = np.hstack([a, art_cols])
    ub = np.concatenate([ub, np.full(n_art, np.inf)])
    artificial = np.zeros(a.shape[1], dtype=bool)
    artificial[a.shape[1] - n_art:] = True

    simplex = _BoundedSimplex(a, b, ub, basis, rule)
    if n_art:
        simplex.run(artificial.astype(float))
        infeasibility = float(simplex.values()[artificial].sum())
        if infeasibility > PHASE1_TOL * (1.0 + float(np.max(np.abs(b), initial=0.0))):
            return LpSolution(status=LpStatus.INFEASIBLE, objective=np.inf, iterations=simplex.iterations)
        simplex.drive_out(artificial)
        simplex.eligible[artificial] = False
        simplex.ub[artificial] = 0.0
    status = simplex.run(np.concatenate([cost, np.zeros(n_art)]))
    if status is LpStatus.UNBOUNDED:
        return LpSolution(status=status, objective=-np.inf, iterations=simplex.iterations)
    y = simplex.values()[:n_y]
    x = offset.copy()
    np.add.at(x, src, sign * y)
    x = np.clip(x, lp.lower, lp.upper)
    return LpSolution(status=LpStatus.OPTIMAL, objective=float(lp.c @ x), x=x, iterations=simplex.iterations)


def _solve_highs(lp: LinearProgram) -> LpSolution:
    res = linprog(lp.c, A_ub=lp.a_ub if lp.b_ub.size else None, b_ub=lp.b_ub if lp.b_ub.size else None,
                  A_eq=lp.a_eq if lp.b_eq.size else None, b_eq=lp.b_eq if lp.b_eq.size else None,
                  bounds=np.column_stack([lp.lower, lp.upper]), method='highs')
    iterations = int(getattr(res, 'nit', 0) or 0)
    if res.status == 0:
        x = np.clip(res.x, lp.lower, lp.upper)
        return LpSolution(status=LpStatus.OPTIMAL, objective=float(lp.c @ x), x=x, iterations=iterations,
                          backend=LpBackend.HIGHS)
    if res.status == 2:
        return LpSolution(status=LpStatus.INFEASIBLE, objective=np.inf, iterations=iterations,
                          backend=LpBackend.HIGHS)
    if res.status == 3:
        return LpSolution(status=LpStatus.UNBOUNDED, objective=-np.inf, iterations=iterations,
                          backend=LpBackend.HIGHS)
    raise IterationLimit(f'HiGHS stopped with status {res.status}: {res.message}')


def choose_backend(lp: LinearProgram, backend: LpBackend | str = LpBackend.AUTO) -> LpBackend:
    """
    Resolve `auto` by the size of the dense tableau.
    """
    backend = LpBackend(backend)
    if backend is not LpBackend.AUTO:
        return backend
    tableau = lp.num_rows * (lp.num_vars + 2 * lp.num_rows)
    return LpBackend.SIMPLEX if tableau <= AUTO_DENSE_LIMIT else LpBackend.HIGHS


def solve_linear_program(lp: LinearProgram, backend: LpBackend | str = LpBackend.AUTO,
                         rule: PivotRule | str = PivotRule.DANTZIG) -> LpSolution:
    """
    Solve a linear program.

    Args:
        lp (LinearProgram): The program.
        backend (LpBackend | str): auto, simplex or highs.
        rule (PivotRule | str): Entering rule of the dense simplex.

    Returns:
        LpSolution: Status, objective and optimal point.

    Raises:
        IterationLimit: If the solver runs out of iterations.
    """
    if np.any(lp.lower > lp.upper):
        return LpSolution(status=LpStatus.INFEASIBLE, objective=np.inf)
    if choose_backend(lp, backend) is LpBackend.HIGHS:
        return _solve_highs(lp)
    return _solve_dense(lp, PivotRule(rule))


def solve_lp(model: MilpModel, fixings: Mapping[int, int] | None = None,
             backend: LpBackend | str = LpBackend.AUTO, rule: PivotRule | str = PivotRule.DANTZIG) -> LpSolution:
    """
    Solve the LP relaxation of a model with some design variables fixed.

    Args:
        model (MilpModel): Model whose integrality is relaxed.
        fixings (Mapping[int, int] | None): Values 0 or 1 keyed by position in the d-slice.
        backend (LpBackend | str): auto, simplex or highs.
        rule (PivotRule | str): Entering rule of the dense simplex.

    Returns:
        LpSolution: The relaxation optimum.
    """
    if fixings and any(v not in (0, 1) for v in fixings.values()):
        raise ValueError('Fixings must be 0 or 1')
    lower, upper = model.fixed_bounds(fixings)
    return solve_linear_program(LinearProgram.from_model(model, lower, upper), backend, rule)
