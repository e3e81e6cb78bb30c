"""
This module localizes a nonlinear regression model at a nominal parameter,
turning it into a linear design problem whose regressors are the gradients
of the mean function.
"""
import logging
from typing import Callable, Sequence

import numpy as np

from design.problem import DesignProblem
from errors import RankDeficient

logger = logging.getLogger(__name__)

DEFAULT_STEP: float = 1e-6

LOCALIZED_RANK_MSG: str = 'Localized regressors have rank {rank}, expected {m}'


def localize_nonlinear(mean_function: Callable[[object, np.ndarray], float], beta0: Sequence[float],
                       points: Sequence, run_budget: int, step: float = DEFAULT_STEP,
                       labels: Sequence[str] | None = None) -> DesignProblem:
    """
    Build the design problem of a nonlinear model localized at beta0.

    The regressor of point x is the central finite-difference gradient of
    beta -> mean_function(x, beta) at beta0, with step step * (1 + |beta0_j|)
    in coordinate j.

    Args:
        mean_function (Callable): Scalar mean h(x, beta).
        beta0 (Sequence[float]): Nominal parameter value.
        points (Sequence): Candidate design points, passed to mean_function as given.
        run_budget (int): Number of trials N.
        step (float): Relative finite-difference step.
        labels (Sequence[str] | None): Optional display labels.

    Returns:
        DesignProblem: The localized problem.

    Raises:
        ValueError: If step is not positive.
        RankDeficient: If the gradients do not span R^m.
    """
    if step <= 0:
        raise ValueError('Finite-difference step must be positive')
    beta = np.asarray(beta0, dtype=float)
    steps = step * (1.0 + np.abs(beta))
    grads = np.empty((len(points), beta.size))
    for i, point in enumerate(points):
        for j in range(beta.size):
            shift = np.zeros_like(beta)
            shift[j] = steps[j]
            grads[i, j] = (mean_function(point, beta + shift)
                           - mean_function(point, beta - shift)) / (2 * steps[j])
    rank = int(np.linalg.matrix_rank(grads))
    if rank < beta.size:
        raise RankDeficient(LOCALIZED_RANK_MSG.format(rank=rank, m=beta.size))
    logger.debug('Localized %d points at beta0=%s', len(points), beta.tolist())
    if labels is None:
        labels = [str(point) for point in points]
    return DesignProblem.from_array(grads, run_budget, labels=labels)
