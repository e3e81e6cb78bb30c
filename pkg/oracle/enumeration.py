"""
This module finds optimal exact designs by complete enumeration.

Binary designs are visited in revolving-door order, so consecutive subsets
differ by one exchanged point and the information matrix is updated by two
rank-one terms; every 64 steps it is re-summed from scratch. Candidates are
evaluated in batches. The subsets are partitioned by their smallest point,
which lets partitions run concurrently while the reduction stays
deterministic: the minimum value wins and near ties go to the
lexicographically smallest subset.

Classes:
    OracleResult: Best design, its value and the enumeration counts.

Functions:
    revolving_door: Revolving-door sequence of t-subsets of {0, ..., n-1}.
    enumerate_best: Best binary design by complete enumeration.
    enumerate_capped: Best design with replication caps d_i <= N_i.
"""
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Iterator

import numpy as np
from pydantic import BaseModel

from design.problem import CriterionSpec, DesignProblem, ExactDesign, information_matrices, psi_values
from errors import NoFeasibleDesign, TooLarge
from linalg.dense import positive_definite_mask
from milp.constraints import ConstraintChecker

logger = logging.getLogger(__name__)

DEFAULT_CAP: int = 5_000_000
BATCH_SIZE: int = 4096
RESUM_EVERY: int = 64
TIE_TOL: float = 1e-12

TOO_LARGE_MSG: str = 'Enumeration of {count} designs exceeds the cap of {cap}'
NO_FEASIBLE_DESIGN_MSG: str = 'Every enumerated design is singular or violates a constraint'


class OracleResult(BaseModel):
    """
    Result of a complete enumeration.

    Attributes:
        design (ExactDesign): Best design.
        criterion_value (float): Its criterion value.
        examined (int): Nonsingular designs satisfying every constraint.
        rejected (int): Designs violating a side constraint.
        singular (int): Designs with a singular information matrix.
        total (int): All enumerated designs.
    """
    design: ExactDesign
    criterion_value: float
    examined: int
    rejected: int
    singular: int
    total: int


def revolving_door(n: int, t: int, reverse: bool = False) -> Iterator[tuple[int, ...]]:
    """
    Yield all t-subsets of {0, ..., n-1} as sorted tuples, consecutive ones
    differing in exactly one element.
    """
    if t < 0 or t > n:
        return
    if t == 0:
        yield ()
        return
    if t == n:
        yield tuple(range(n))
        return
    if not reverse:
        yield from revolving_door(n - 1, t, False)
        for sub in revolving_door(n - 1, t - 1, True):
            yield sub + (n - 1,)
    else:
        for sub in revolving_door(n - 1, t - 1, False):
            yield sub + (n - 1,)
        yield from revolving_door(n - 1, t, True)


class _Best:
    """
    Running minimum with lexicographic resolution of near ties.
    """

    def __init__(self):
        self.value = math.inf
        self.key: tuple[int, ...] | None = None
        self.examined = 0
        self.rejected = 0
        self.singular = 0
        self.total = 0

    def offer(self, value: float, key: tuple[int, ...]):
        if self.key is None:
            self.value, self.key = value, key
            return
        tol = TIE_TOL * max(1.0, abs(self.value))
        if value < self.value - tol or (abs(value - self.value) <= tol and key < self.key):
            self.value, self.key = value, key

    def merge(self, other: '_Best'):
        self.examined += other.examined
        self.rejected += other.rejected
        self.singular += other.singular
        self.total += other.total
        if other.key is not None:
            self.offer(other.value, other.key)


class _BatchEvaluator:

    def __init__(self, problem: DesignProblem, spec: CriterionSpec, extras):
        self.problem = problem
        self.spec = spec
        self.checker = ConstraintChecker(extras, problem.n)

    def evaluate(self, keys: list[tuple[int, ...]], counts: np.ndarray, ms: np.ndarray, best: _Best):
        size = len(keys)
        best.total += size
        ok = np.ones(size, dtype=bool)
        if self.checker.design_cons:
            ok &= self.checker.design_ok(self.checker.design_lhs(counts))
        best.rejected += int(size - ok.sum())
        pd = np.zeros(size, dtype=bool)
        if np.any(ok):
            pd[ok] = positive_definite_mask(ms[ok])
        best.singular += int(ok.sum() - pd.sum())
        if not np.any(pd):
            return
        idx = np.flatnonzero(pd)
        sigmas = np.linalg.inv(ms[idx])
        sigmas = (sigmas + np.swapaxes(sigmas, 1, 2)) / 2
        cov_ok = self.checker.covariance_ok(sigmas)
        best.rejected += int((~cov_ok).sum())
        idx, sigmas = idx[cov_ok], sigmas[cov_ok]
        best.examined += idx.size
        if idx.size == 0:
            return
        values = psi_values(self.spec, sigmas)
        order = np.argsort(values, kind='stable')
        top = values[order[0]]
        for pos in order:
            if values[pos] > top + TIE_TOL * max(1.0, abs(top)):
                break
            best.offer(float(values[pos]), keys[idx[pos]])


def _enumerate_partition(evaluator: _BatchEvaluator, first: int) -> _Best:
    """
    Enumerate the subsets whose smallest point is `first`.
    """
    problem = evaluator.problem
    n, size = problem.n, problem.run_budget
    elementary = problem.elementary
    best = _Best()
    keys, counts, mats = [], [], []
    current = None
    prev: tuple[int, ...] = ()
    since_resum = 0
    offset = first + 1
    for tail in revolving_door(n - offset, size - 1):
        key = (first,) + tuple(offset + t for t in tail)
        if current is None or since_resum >= RESUM_EVERY:
            current = elementary[list(key)].sum(axis=0)
            since_resum = 0
        else:
            removed = set(prev) - set(key)
            added = set(key) - set(prev)
            for p in removed:
                current = current - elementary[p]
            for p in added:
                current = current + elementary[p]
            since_resum += 1
        prev = key
        keys.append(key)
        mats.append(current)
        row = np.zeros(n)
        row[list(key)] = 1.0
        counts.append(row)
        if len(keys) == BATCH_SIZE:
            evaluator.evaluate(keys, np.array(counts), np.array(mats), best)
            keys, counts, mats = [], [], []
    if keys:
        evaluator.evaluate(keys, np.array(counts), np.array(mats), best)
    return best


def _result(problem: DesignProblem, best: _Best, binary: bool) -> OracleResult:
    if best.key is None:
        raise NoFeasibleDesign(NO_FEASIBLE_DESIGN_MSG)
    design = ExactDesign.from_support(problem.n, best.key, binary=binary)
    return OracleResult(design=design, criterion_value=best.value, examined=best.examined,
                        rejected=best.rejected, singular=best.singular, total=best.total)


def enumerate_best(problem: DesignProblem, spec: CriterionSpec, extras=(), cap: int = DEFAULT_CAP,
                   threads: int = 1) -> OracleResult:
    """
    Find the best binary design of size N by complete enumeration.

    Args:
        problem (DesignProblem): Design problem.
        spec (CriterionSpec): Criterion to minimize.
        extras (Iterable[ExtraConstraint]): Side constraints; covariance rows
            are evaluated on Sigma = M^-1.
        cap (int): Maximum number of subsets.
        threads (int): Number of partitions processed concurrently.

    Returns:
        OracleResult: The optimum and the enumeration counts.

    Raises:
        TooLarge: If C(n, N) exceeds the cap.
        NoFeasibleDesign: If every subset is rejected or singular.
    """
    count = math.comb(problem.n, problem.run_budget)
    if count > cap:
        raise TooLarge(TOO_LARGE_MSG.format(count=count, cap=cap))
    evaluator = _BatchEvaluator(problem, spec, list(extras))
    firsts = range(problem.n - problem.run_budget + 1)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda f: _enumerate_partition(evaluator, f), firsts))
    else:
        parts = [_enumerate_partition(evaluator, f) for f in firsts]
    best = _Best()
    for part in parts:
        best.merge(part)
    logger.info('Enumerated %d designs: %d examined, %d rejected, %d singular', best.total, best.examined,
                best.rejected, best.singular)
    return _result(problem, best, binary=True)


def _capped_multisets(caps: np.ndarray, size: int) -> Iterator[tuple[int, ...]]:
    n = caps.size
    for multiset in itertools.combinations_with_replacement(range(n), size):
        if np.all(np.bincount(multiset, minlength=n) <= caps):
            yield multiset


def enumerate_capped(problem: DesignProblem, spec: CriterionSpec, caps, extras=(),
                     cap: int = DEFAULT_CAP) -> OracleResult:
    """
    Find the best exact design with replication caps 0 <= d_i <= caps_i.

    The regressor list is not expanded; designs are enumerated as sorted
    multisets of point indices, which also serve as tie-break keys.

    Raises:
        TooLarge: If the number of multisets C(n + N - 1, N) exceeds the cap.
        NoFeasibleDesign: If every count vector is rejected or singular.
    """
    caps = np.minimum(np.asarray(caps, dtype=int), problem.run_budget)
    if caps.shape != (problem.n,) or np.any(caps < 0):
        raise ValueError('Caps must be nonnegative, one per design point')
    count = math.comb(problem.n + problem.run_budget - 1, problem.run_budget)
    if count > cap:
        raise TooLarge(TOO_LARGE_MSG.format(count=count, cap=cap))
    evaluator = _BatchEvaluator(problem, spec, list(extras))
    best = _Best()
    batch: list[tuple[int, ...]] = []

    def flush():
        counts = np.zeros((len(batch), problem.n))
        for row, multiset in enumerate(batch):
            np.add.at(counts[row], list(multiset), 1.0)
        evaluator.evaluate(list(batch), counts, information_matrices(problem, counts), best)
        batch.clear()

    for multiset in _capped_multisets(caps, problem.run_budget):
        batch.append(multiset)
        if len(batch) == BATCH_SIZE:
            flush()
    if batch:
        flush()
    return _result(problem, best, binary=False)
