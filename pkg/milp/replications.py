"""
This module turns a design problem with replication caps N_i into an
equivalent binary problem by repeating the regressor f_i min(N_i, N) times.

Classes:
    ReplicationMap: Maps replicate points back to the original points.

Functions:
    expand_replications: Expanded binary problem and its replication map.
    translate_constraints: Rewrites side constraints for the expanded problem.
"""
import logging
from functools import cached_property

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from design.problem import DesignProblem, ExactDesign
from errors import DimensionMismatch, InfeasibleCaps
from milp.constraints import ConstraintKind, ExtraConstraint

logger = logging.getLogger(__name__)

INFEASIBLE_CAPS_MSG: str = 'Replication caps allow {capacity} trials, the run budget is {budget}'


class ReplicationMap(BaseModel):
    """
    Origin of every point of an expanded problem.

    Attributes:
        origin (tuple[int, ...]): 0-based original point of each replicate, nondecreasing.
        n_original (int): Number of points of the original problem.
    """
    model_config = ConfigDict(frozen=True)

    origin: tuple[int, ...]
    n_original: int = Field(gt=0)

    @cached_property
    def origin_array(self) -> np.ndarray:
        arr = np.asarray(self.origin, dtype=int)
        arr.setflags(write=False)
        return arr

    @cached_property
    def caps(self) -> np.ndarray:
        """
        Number of replicates of each original point.
        """
        return np.bincount(self.origin_array, minlength=self.n_original)

    @cached_property
    def first_replicate(self) -> np.ndarray:
        """
        Expanded index of the first replicate of each original point.
        """
        return np.concatenate([[0], np.cumsum(self.caps)[:-1]]).astype(int)

    def replicates(self, point: int) -> range:
        start = int(self.first_replicate[point])
        return range(start, start + int(self.caps[point]))

    def fold(self, counts) -> np.ndarray:
        """
        Replication counts per original point of an expanded design.
        """
        arr = np.asarray(counts, dtype=float)
        if arr.shape != (len(self.origin),):
            raise DimensionMismatch(f'Expected {len(self.origin)} expanded counts, got {arr.shape}')
        return np.rint(np.bincount(self.origin_array, weights=arr, minlength=self.n_original)).astype(int)

    def unfold(self, counts) -> np.ndarray:
        """
        Binary expanded design selecting the first counts_i replicates of each point.
        """
        arr = np.asarray(counts, dtype=int)
        if arr.shape != (self.n_original,):
            raise DimensionMismatch(f'Expected {self.n_original} counts, got {arr.shape}')
        if np.any(arr < 0) or np.any(arr > self.caps):
            raise InfeasibleCaps('Counts exceed the replication caps')
        position = np.arange(len(self.origin)) - self.first_replicate[self.origin_array]
        return (position < arr[self.origin_array]).astype(int)

    def fold_design(self, design: ExactDesign) -> ExactDesign:
        return ExactDesign.from_array(self.fold(design.as_array()), binary=False)

    def unfold_design(self, design: ExactDesign) -> ExactDesign:
        return ExactDesign.from_array(self.unfold(design.as_array()), binary=True)


def expand_replications(problem: DesignProblem, caps) -> tuple[DesignProblem, ReplicationMap]:
    """
    Replicate each regressor min(N_i, N) times.

    Args:
        problem (DesignProblem): Original problem.
        caps (array_like): Maximum number of trials N_i at each point.

    Returns:
        tuple[DesignProblem, ReplicationMap]: The binary problem and the map
            folding its designs back to replication counts.

    Raises:
        InfeasibleCaps: If the caps cannot accommodate N trials.
    """
    arr = np.asarray(caps)
    if arr.shape != (problem.n,):
        raise DimensionMismatch(f'Expected {problem.n} caps, got {arr.shape}')
    if np.any(arr < 0) or np.any(arr != np.rint(arr)):
        raise ValueError('Replication caps must be nonnegative integers')
    effective = np.minimum(arr.astype(int), problem.run_budget)
    capacity = int(effective.sum())
    if capacity < problem.run_budget:
        raise InfeasibleCaps(INFEASIBLE_CAPS_MSG.format(capacity=capacity, budget=problem.run_budget))
    origin = np.repeat(np.arange(problem.n), effective)
    labels = [problem.label(int(i)) if effective[i] == 1 else f'{problem.label(int(i))}#{r + 1}'
              for i in range(problem.n) for r in range(effective[i])]
    expanded = DesignProblem.from_array(problem.F[origin], problem.run_budget, labels)
    logger.debug('Expanded %d points into %d replicates', problem.n, expanded.n)
    return expanded, ReplicationMap(origin=tuple(int(i) for i in origin), n_original=problem.n)


def translate_constraints(extras, replications: ReplicationMap) -> list[ExtraConstraint]:
    """
    Rewrite side constraints on original points as constraints on replicates.

    A design-linear coefficient on point i applies to every replicate of i.
    An augmentation of r trials at point i becomes one augmentation of a
    single trial on each of the first r replicates of i.

    Raises:
        InfeasibleCaps: If an augmentation asks for more trials than the cap.
    """
    result = []
    for con in extras:
        if con.kind is ConstraintKind.COVARIANCE_LINEAR:
            result.append(con)
        elif con.kind is ConstraintKind.DESIGN_LINEAR:
            points, coeffs = [], []
            for point, coeff in zip(con.points, con.coeffs):
                for rep in replications.replicates(point):
                    points.append(rep)
                    coeffs.append(coeff)
            if not points:
                logger.warning('Constraint %s only touches points without replicates', con.name or '')
                points, coeffs = [0], [0.0]
            result.append(ExtraConstraint.design_linear(points, coeffs, con.sense, con.rhs, con.name))
        else:
            point, count = con.points[0], int(con.rhs)
            reps = replications.replicates(point)
            if count > len(reps):
                raise InfeasibleCaps(f'Augmentation of {count} trials at point {point + 1} exceeds its cap')
            result.extend(ExtraConstraint.augmentation(rep, 1, con.name) for rep in reps[:count])
    return result
