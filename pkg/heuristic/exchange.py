"""
This module implements the pairwise exchange heuristic that produces the
reference design d_0.

Every restart draws a random feasible design of size N and repeatedly applies
the best swap of one selected point for one unselected point, until no swap
improves the objective. All swaps of a pass are evaluated at once on stacks
of information matrices. For G-optimality the search minimizes -log det M
and only the final comparison between restarts uses the G-criterion.

Classes:
    HeuristicConfig: Options of the exchange search.
    RestartTrace: Objective history of one restart.
    HeuristicResult: Best design, its criterion value and the traces.

Functions:
    exchange_search: Best design over all restarts.
    exchange_search_traced: Same search, returning the per-restart histories.
"""
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import qr

from design.problem import (CriterionKind, CriterionSpec, DesignProblem, ExactDesign, criterion_values,
                            information_matrices, neg_log_det_values)
from errors import NoFeasibleStart
from linalg.dense import positive_definite_mask
from milp.constraints import ConstraintChecker, Sense, forced_points

logger = logging.getLogger(__name__)

IMPROVEMENT_TOL: float = 1e-12
DRAWS_PER_RESTART: int = 1000
GREEDY_AFTER: int = 100
MAX_REPAIRS: int = 100

NO_FEASIBLE_START_MSG: str = 'No feasible nonsingular starting design found in {draws} random draws'


class HeuristicConfig(BaseModel):
    """
    Options of the exchange search.

    Attributes:
        restarts (int): Number of independent random starts.
        rng_seed (int): Seed of the random generator.
        max_passes (int): Maximum number of accepted swaps per restart.
        threads (int): Number of restarts evaluated concurrently.
    """
    model_config = ConfigDict(frozen=True)

    restarts: int = Field(default=10, ge=1)
    rng_seed: int = 0
    max_passes: int = Field(default=200, ge=1)
    threads: int = Field(default=1, ge=1)


class RestartTrace(BaseModel):
    """
    Objective values of one restart, from the starting design to the final one.
    """
    restart: int
    history: list[float]
    criterion_value: float
    counts: list[int]


class HeuristicResult(BaseModel):
    design: ExactDesign
    criterion_value: float
    traces: list[RestartTrace]


class _Evaluator:
    """
    Objective and feasibility of stacks of candidate designs.
    """

    def __init__(self, problem: DesignProblem, spec: CriterionSpec, extras, forced: list[int]):
        self.problem = problem
        self.spec = spec
        self.use_log_det = spec.kind is CriterionKind.G
        self.checker = ConstraintChecker(extras, problem.n)
        self.fixed = np.zeros(problem.n, dtype=bool)
        self.fixed[forced] = True

    def _sigmas(self, ms: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ok = positive_definite_mask(ms)
        sigmas = np.linalg.inv(ms[ok]) if np.any(ok) else np.zeros((0,) + ms.shape[1:])
        return ok, (sigmas + np.swapaxes(sigmas, 1, 2)) / 2

    def objective(self, ms: np.ndarray) -> np.ndarray:
        values = neg_log_det_values(ms) if self.use_log_det else criterion_values(self.spec, ms)
        if self.checker.cov_cons:
            ok, sigmas = self._sigmas(ms)
            ok[np.flatnonzero(ok)[~self.checker.covariance_ok(sigmas)]] = False
            values[~ok] = np.inf
        return values

    def violation(self, ms: np.ndarray) -> np.ndarray:
        """
        Total violation of the covariance constraints; +inf for singular designs.
        """
        values = np.full(ms.shape[0], np.inf)
        ok, sigmas = self._sigmas(ms)
        total = np.zeros(sigmas.shape[0])
        for con in self.checker.cov_cons:
            lhs = con.covariance_lhs(sigmas)
            if con.sense is Sense.LE:
                excess = lhs - con.rhs
            elif con.sense is Sense.GE:
                excess = con.rhs - lhs
            else:
                excess = np.abs(lhs - con.rhs)
            total += np.where(con.holds(lhs, self.checker.tol), 0.0, np.maximum(excess, 0.0))
        values[ok] = total
        return values

    def descend(self, current: np.ndarray, objective, max_passes: int,
                target: float = -np.inf) -> tuple[np.ndarray, np.ndarray, list[float]]:
        """
        Steepest pairwise exchange on `objective`, keeping forced points and
        design constraints; stops at a local minimum or once `target` is reached.
        """
        problem, checker = self.problem, self.checker
        current = current.copy()
        m = information_matrices(problem, current[None])[0]
        value = float(objective(m[None])[0])
        history = [value]
        elementary = problem.elementary
        for _ in range(max_passes):
            if value <= target:
                break
            ones = np.flatnonzero((current == 1) & ~self.fixed)
            zeros = np.flatnonzero(current == 0)
            if ones.size == 0 or zeros.size == 0:
                break
            cand = m[None, None] - elementary[ones][:, None] + elementary[zeros][None, :]
            values = objective(cand.reshape(-1, problem.m, problem.m))
            if checker.design_cons:
                lhs = checker.design_rows @ current
                delta = checker.design_rows[:, zeros][:, None, :] - checker.design_rows[:, ones][:, :, None]
                values[~checker.design_ok(lhs[:, None, None] + delta).reshape(-1)] = np.inf
            best = int(np.argmin(values))
            if not values[best] < value - IMPROVEMENT_TOL * max(1.0, abs(value)):
                break
            i, j = ones[best // zeros.size], zeros[best % zeros.size]
            current[i], current[j] = 0, 1
            m = information_matrices(problem, current[None])[0]
            value = float(objective(m[None])[0])
            history.append(value)
        return current, m, history


def _greedy_start(problem: DesignProblem, forced: list[int]) -> np.ndarray:
    _, _, pivots = qr(problem.F.T, pivoting=True, mode='economic')
    chosen = list(forced)
    for p in list(pivots) + list(range(problem.n)):
        if len(chosen) >= problem.run_budget:
            break
        if int(p) not in chosen:
            chosen.append(int(p))
    counts = np.zeros(problem.n, dtype=int)
    counts[chosen] = 1
    return counts


def _random_start(evaluator: _Evaluator, forced: list[int], rng: np.random.Generator,
                  max_passes: int) -> np.ndarray | None:
    problem = evaluator.problem
    checker = evaluator.checker
    free = np.setdiff1d(np.arange(problem.n), forced)
    need = problem.run_budget - len(forced)
    if need < 0 or need > free.size:
        return None
    repairs = 0
    for draw in range(DRAWS_PER_RESTART):
        if draw == GREEDY_AFTER:
            candidate = _greedy_start(problem, forced)
        else:
            candidate = np.zeros(problem.n, dtype=int)
            candidate[forced] = 1
            candidate[rng.choice(free, size=need, replace=False)] = 1
        if checker.design_cons and not checker.design_ok(checker.design_rows @ candidate):
            continue
        ms = information_matrices(problem, candidate[None])
        if np.isfinite(evaluator.objective(ms)[0]):
            return candidate
        if checker.cov_cons and repairs < MAX_REPAIRS and np.isfinite(evaluator.violation(ms)[0]):
            repairs += 1
            candidate, m, _ = evaluator.descend(candidate, evaluator.violation, max_passes, target=0.0)
            if np.isfinite(evaluator.objective(m[None])[0]):
                return candidate
    return None


def _run_restart(evaluator: _Evaluator, config: HeuristicConfig, forced: list[int], restart: int,
                 seed: np.random.SeedSequence) -> RestartTrace | None:
    rng = np.random.default_rng(seed)
    start = _random_start(evaluator, forced, rng, config.max_passes)
    if start is None:
        return None
    current, m, history = evaluator.descend(start, evaluator.objective, config.max_passes)
    crit = float(criterion_values(evaluator.spec, m[None])[0])
    logger.debug('Restart %d finished after %d swaps with value %.10g', restart, len(history) - 1, crit)
    return RestartTrace(restart=restart, history=history, criterion_value=crit, counts=current.tolist())


def exchange_search_traced(problem: DesignProblem, spec: CriterionSpec, config: HeuristicConfig | None = None,
                           extras=()) -> HeuristicResult:
    """
    Run the exchange heuristic and keep the objective history of every restart.

    Args:
        problem (DesignProblem): Binary-mode design problem.
        spec (CriterionSpec): Criterion to minimize.
        config (HeuristicConfig | None): Search options.
        extras (Iterable[ExtraConstraint]): Side constraints every design must satisfy.

    Returns:
        HeuristicResult: Best design over all restarts; ties go to the lowest restart index.

    Raises:
        NoFeasibleStart: If no restart finds a feasible nonsingular design.
    """
    config = config or HeuristicConfig()
    extras = list(extras)
    forced = forced_points(extras)
    evaluator = _Evaluator(problem, spec, extras, forced)
    seeds = np.random.SeedSequence(config.rng_seed).spawn(config.restarts)
    args = [(evaluator, config, forced, r, seeds[r]) for r in range(config.restarts)]
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            traces = list(pool.map(lambda a: _run_restart(*a), args))
    else:
        traces = [_run_restart(*a) for a in args]
    traces = [t for t in traces if t is not None]
    if not traces:
        raise NoFeasibleStart(NO_FEASIBLE_START_MSG.format(draws=config.restarts * DRAWS_PER_RESTART))
    best = min(traces, key=lambda t: (t.criterion_value, t.restart))
    logger.info('Exchange heuristic: best value %.10g from restart %d of %d', best.criterion_value,
                best.restart, config.restarts)
    return HeuristicResult(design=ExactDesign(counts=tuple(best.counts)), criterion_value=best.criterion_value,
                           traces=traces)


def exchange_search(problem: DesignProblem, spec: CriterionSpec, config: HeuristicConfig | None = None,
                    extras=()) -> ExactDesign:
    """
    Return the best binary design found by the exchange heuristic.
    """
    return exchange_search_traced(problem, spec, config, extras).design
