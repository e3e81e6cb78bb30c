"""
This module solves the design MILP exactly by branch-and-bound on the
binary design variables.

Nodes are kept in a heap ordered by LP bound, deeper nodes first among equal
bounds. The branching variable is the most fractional design variable, and
the down branch (d_i = 0) is created before the up branch. A node whose
fixings already determine the whole design (N points fixed to one, or all
remaining free points needed) is evaluated directly instead of solving its
LP. Every integral LP solution is checked against the direct criterion
value of its design.

Classes:
    SolveStatus: Final status of a solve.
    SolveLimits: Node, time and backend options.
    SolveResult: Best design, its covariance matrix and the search statistics.

Functions:
    branching_choice: Most fractional design variable of an LP solution.
    solve: Branch-and-bound over the design variables.
"""
import heapq
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from enum import Enum

import numpy as np
from pydantic import BaseModel, Field

from design.problem import ExactDesign, info_matrix, psi_value
from errors import AllIntegral, McCormickMismatch, SingularMatrix
from linalg.dense import invert
from milp.builder import MilpModel, embed_design, extract_design, max_violation
from solver.simplex import LpBackend, LpSolution, LpStatus, solve_lp

logger = logging.getLogger(__name__)

FRACTIONAL_TOL: float = 1e-6
TIE_TOL: float = 1e-12
PRUNE_TOL: float = 1e-9
MISMATCH_TOL: float = 1e-6
CERTIFIED_GAP: float = 1e-6
LEAF_TOL: float = 1e-7

ALL_INTEGRAL_MSG: str = 'All design variables are integral'
MISMATCH_MSG: str = 'LP objective {lp:.12g} differs from the criterion value {direct:.12g} of design {support}'


class SolveStatus(str, Enum):
    CERTIFIED = 'Certified'
    TIME_LIMIT = 'TimeLimit'
    INFEASIBLE = 'Infeasible'


class SolveLimits(BaseModel):
    """
    Options of a branch-and-bound run.

    Attributes:
        time_limit (float | None): Wall-clock limit in seconds.
        node_limit (int | None): Maximum number of evaluated nodes.
        lp_backend (LpBackend): LP backend of the relaxations.
        threads (int): Children evaluated concurrently when greater than one.
        log_every (int): Nodes between progress lines.
    """
    time_limit: float | None = Field(default=None, gt=0)
    node_limit: int | None = Field(default=None, gt=0)
    lp_backend: LpBackend = LpBackend.AUTO
    threads: int = Field(default=1, ge=1)
    log_every: int = Field(default=1000, gt=0)


class SolveResult(BaseModel):
    """
    Outcome of a solve.

    Attributes:
        design (ExactDesign | None): Best design, folded to replication counts.
        criterion_value (float): Its criterion value (+inf without a design).
        sigma (list[list[float]] | None): Its covariance matrix M(d)^-1.
        status (SolveStatus): Certified, TimeLimit or Infeasible.
        nodes_explored (int): Evaluated nodes.
        gap (float): Relative gap between incumbent and best open bound.
        wall_time (float): Seconds spent.
        incumbent_history (list[float]): Successive incumbent values.
    """
    design: ExactDesign | None = None
    criterion_value: float = float('inf')
    sigma: list[list[float]] | None = None
    status: SolveStatus
    nodes_explored: int = 0
    gap: float = float('inf')
    wall_time: float = 0.0
    incumbent_history: list[float] = []


def branching_choice(solution: LpSolution, model: MilpModel) -> int:
    """
    Position in the d-slice of the most fractional design variable; ties go
    to the lowest position.

    Raises:
        AllIntegral: If every design variable is within 1e-6 of an integer.
    """
    d = np.asarray(solution.x, dtype=float)[model.d_slice]
    frac = np.abs(d - np.round(d))
    if frac.size == 0 or frac.max() <= FRACTIONAL_TOL:
        raise AllIntegral(ALL_INTEGRAL_MSG)
    return int(np.flatnonzero(frac >= frac.max() - TIE_TOL)[0])


class _Node:
    __slots__ = ('fixings', 'position', 'depth')

    def __init__(self, fixings: dict[int, int], position: int, depth: int):
        self.fixings = fixings
        self.position = position
        self.depth = depth


class _Search:

    def __init__(self, model: MilpModel, limits: SolveLimits):
        if model.layout is None or model.source is None:
            raise ValueError('Branch-and-bound needs a model built from a design problem')
        self.model = model
        self.limits = limits
        self.n = model.layout.n
        self.run_budget = model.source.problem.run_budget
        self.heap: list[tuple[float, int, int, _Node]] = []
        self.seq = 0
        self.nodes = 0
        self.next_log = limits.log_every
        self.start = time.monotonic()
        self.best_value = np.inf
        self.best_design: ExactDesign | None = None
        self.history: list[float] = []

    @property
    def cutoff(self) -> float:
        if self.best_design is None:
            return np.inf
        return self.best_value - PRUNE_TOL * (1.0 + abs(self.best_value))

    def root_fixings(self) -> dict[int, int]:
        lower = self.model.var_lower[self.model.d_slice]
        upper = self.model.var_upper[self.model.d_slice]
        return {int(p): int(round(lower[p])) for p in np.flatnonzero(lower == upper)}

    def _forced_design(self, fixings: dict[int, int]):
        """
        Design fixed by the fixings, None if undetermined, False if impossible.
        """
        ones = [p for p, v in fixings.items() if v == 1]
        free = self.n - len(fixings)
        if len(ones) > self.run_budget or len(ones) + free < self.run_budget:
            return False
        if len(ones) == self.run_budget:
            support = ones
        elif len(ones) + free == self.run_budget:
            support = ones + [p for p in range(self.n) if p not in fixings]
        else:
            return None
        return ExactDesign.from_support(self.n, support)

    def solve_child(self, fixings: dict[int, int]):
        forced = self._forced_design(fixings)
        if forced is False:
            return None
        if forced is not None:
            return forced
        return solve_lp(self.model, fixings, self.limits.lp_backend)

    def offer_design(self, design: ExactDesign) -> float | None:
        """
        Evaluate a design against the model and keep it if it improves the incumbent.
        """
        try:
            x = embed_design(self.model, design)
        except SingularMatrix:
            return None
        if max_violation(self.model, x) > LEAF_TOL:
            return None
        value = float(x[self.model.layout.phi])
        if value < self.best_value:
            self.best_value, self.best_design = value, design
            self.history.append(value)
        return value

    def _offer_integral(self, solution: LpSolution):
        design = extract_design(self.model, solution.x)
        value = self.offer_design(design)
        if value is None or abs(solution.objective - value) > MISMATCH_TOL * (1.0 + abs(value)):
            raise McCormickMismatch(MISMATCH_MSG.format(lp=solution.objective, direct=np.nan if value is None
                                                        else value, support=design.support))

    def apply(self, fixings: dict[int, int], depth: int, outcome):
        self.nodes += 1
        if outcome is None:
            return
        if isinstance(outcome, ExactDesign):
            self.offer_design(outcome)
            return
        if outcome.status is LpStatus.INFEASIBLE:
            return
        if outcome.status is LpStatus.UNBOUNDED:
            raise McCormickMismatch('LP relaxation of the design model is unbounded')
        if outcome.objective >= self.cutoff:
            return
        try:
            position = branching_choice(outcome, self.model)
        except AllIntegral:
            self._offer_integral(outcome)
            return
        self.seq += 1
        heapq.heappush(self.heap, (outcome.objective, -depth, self.seq, _Node(fixings, position, depth)))

    def limit_reached(self) -> bool:
        if self.limits.node_limit is not None and self.nodes >= self.limits.node_limit:
            return True
        return self.limits.time_limit is not None and self.elapsed() >= self.limits.time_limit

    def elapsed(self) -> float:
        return time.monotonic() - self.start

    def gap(self) -> float:
        if self.best_design is None:
            return np.inf
        bound = self.heap[0][0] if self.heap else self.best_value
        return max(0.0, self.best_value - bound) / max(abs(self.best_value), 1e-12)

    def log_progress(self):
        if self.nodes < self.next_log:
            return
        self.next_log += self.limits.log_every
        bound = self.heap[0][0] if self.heap else self.best_value
        logger.info('nodes=%d incumbent=%.10g bound=%.10g gap=%.3g elapsed=%.1fs', self.nodes, self.best_value,
                    bound, self.gap(), self.elapsed())


def solve(model: MilpModel, incumbent: ExactDesign | None = None, limits: SolveLimits | None = None) -> SolveResult:
    """
    Branch-and-bound over the design variables of a design model.

    Args:
        model (MilpModel): Model from milp.builder.build.
        incumbent (ExactDesign | None): Warm start on the model's points, or on
            the original points when the model carries a replication map.
        limits (SolveLimits | None): Node, time and backend options.

    Returns:
        SolveResult: Certified when the search space is exhausted or the gap
            is at most 1e-6, TimeLimit when a limit stops the search first,
            Infeasible when no feasible design exists.

    Raises:
        McCormickMismatch: If an integral LP solution disagrees with the direct
            criterion value of its design.
    """
    limits = limits or SolveLimits()
    search = _Search(model, limits)
    replications = model.source.replications
    if incumbent is not None:
        if replications is not None and len(incumbent.counts) == replications.n_original:
            incumbent = replications.unfold_design(incumbent)
        if search.offer_design(incumbent) is None:
            logger.warning('Incumbent design %s is infeasible for the model and is ignored', incumbent.support)

    pool = ThreadPoolExecutor(max_workers=limits.threads) if limits.threads > 1 else None
    stopped = False
    try:
        root = search.root_fixings()
        search.apply(root, 0, search.solve_child(root))
        while search.heap:
            bound, _, _, node = search.heap[0]
            if bound >= search.cutoff:
                search.heap.clear()
                break
            if search.limit_reached():
                stopped = True
                break
            heapq.heappop(search.heap)
            children = [{**node.fixings, node.position: 0}, {**node.fixings, node.position: 1}]
            if pool is not None:
                outcomes = list(pool.map(search.solve_child, children))
            else:
                outcomes = [search.solve_child(child) for child in children]
            for child, outcome in zip(children, outcomes):
                search.apply(child, node.depth + 1, outcome)
            search.log_progress()
    finally:
        if pool is not None:
            pool.shutdown()

    gap = search.gap()
    if search.best_design is None:
        status = SolveStatus.TIME_LIMIT if stopped else SolveStatus.INFEASIBLE
    elif stopped and gap > CERTIFIED_GAP:
        status = SolveStatus.TIME_LIMIT
    else:
        status = SolveStatus.CERTIFIED
    result = SolveResult(status=status, nodes_explored=search.nodes, gap=float(gap), wall_time=search.elapsed(),
                         incumbent_history=search.history)
    if search.best_design is not None:
        sigma = invert(info_matrix(model.source.problem, search.best_design))
        design = search.best_design if replications is None else replications.fold_design(search.best_design)
        result = result.model_copy(update={'design': design, 'criterion_value': psi_value(model.source.spec, sigma),
                                           'sigma': sigma.tolist()})
    logger.info('Branch-and-bound finished: status=%s value=%.10g nodes=%d gap=%.3g time=%.2fs', status.value,
                result.criterion_value, result.nodes_explored, result.gap, result.wall_time)
    return result
