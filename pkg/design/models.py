"""
This module provides the reference regression models used by the examples,
the command line and the test suites.

Functions:
    linear_grid: Simple linear regression on an equidistant grid.
    quadratic_grid: Quadratic regression on an equidistant grid.
    factorial_main_effects: Main-effects model on the vertices of {-1, 1}^k.
    gaussian_regressors: Regressors with independent standard normal entries.
    two_factor_exponential_mean: Five-parameter exponential mean function.
    two_factor_exponential_gradient: Analytic gradient of the mean function.
"""
import itertools

import numpy as np

from design.problem import DesignProblem

# Candidate points (x1, x2) of the localized exponential model.
EXPONENTIAL_CANDIDATES: tuple[tuple[float, float], ...] = (
    (0.0, 0.3), (2.0, 0.6), (0.5, 0.9), (1.0, 1.2), (0.0, 1.5),
    (2.0, 1.8), (0.0, 5.0), (1.0, 8.0), (2.0, 10.0),
)
EXPONENTIAL_BETA0: tuple[float, ...] = (1.0, 1.0, 2.0, 0.7, 0.2)


def _grid_label(x: float) -> str:
    return f'{x:.6g}'


def linear_grid(n: int, run_budget: int, low: float = -1.0, high: float = 1.0) -> DesignProblem:
    """
    Linear regression f(x) = (1, x)' on n equidistant points of [low, high].
    """
    xs = np.linspace(low, high, n)
    return DesignProblem.from_array(np.column_stack([np.ones(n), xs]), run_budget,
                                    labels=[_grid_label(x) for x in xs])


def quadratic_grid(n: int, run_budget: int, low: float = -1.0, high: float = 1.0,
                   extra_points=()) -> DesignProblem:
    """
    Quadratic regression f(x) = (1, x, x^2)' on n equidistant points of [low, high].

    Args:
        n (int): Number of grid points.
        run_budget (int): Number of trials N.
        low (float): Left end of the interval.
        high (float): Right end of the interval.
        extra_points (Iterable[float]): Points added to the grid; the merged
            list is sorted increasingly.

    Returns:
        DesignProblem: The problem, labelled by the x coordinates.
    """
    xs = np.sort(np.concatenate([np.linspace(low, high, n), np.asarray(list(extra_points), dtype=float)]))
    return DesignProblem.from_array(np.column_stack([np.ones(xs.size), xs, xs ** 2]), run_budget,
                                    labels=[_grid_label(x) for x in xs])


def factorial_main_effects(factors: int, run_budget: int) -> DesignProblem:
    """
    Main-effects model f(x) = (1, x_1, ..., x_k)' on the 2^k vertices of {-1, 1}^k.
    """
    vertices = np.array(list(itertools.product((-1.0, 1.0), repeat=factors)))
    labels = [','.join(f'{int(v):+d}' for v in row) for row in vertices]
    return DesignProblem.from_array(np.column_stack([np.ones(len(vertices)), vertices]), run_budget,
                                    labels=labels)


def gaussian_regressors(n: int, m: int, run_budget: int, rng: np.random.Generator) -> DesignProblem:
    """
    Regressors with independent N(0, 1) entries.
    """
    return DesignProblem.from_array(rng.standard_normal((n, m)), run_budget)


def two_factor_exponential_mean(x, beta) -> float:
    """
    Mean function b1 + b2 exp(-b3 x1) + b4 / (b4 - b5) (exp(-b5 x2) - exp(-b4 x2)).
    """
    x1, x2 = x
    b1, b2, b3, b4, b5 = beta
    return float(b1 + b2 * np.exp(-b3 * x1)
                 + b4 / (b4 - b5) * (np.exp(-b5 * x2) - np.exp(-b4 * x2)))


def two_factor_exponential_gradient(x, beta) -> np.ndarray:
    """
    Gradient of `two_factor_exponential_mean` with respect to beta.
    """
    x1, x2 = x
    _, b2, b3, b4, b5 = beta
    ratio = b4 / (b4 - b5)
    diff = np.exp(-b5 * x2) - np.exp(-b4 * x2)
    denom = (b4 - b5) ** 2
    return np.array([
        1.0,
        np.exp(-b3 * x1),
        -b2 * x1 * np.exp(-b3 * x1),
        -b5 / denom * diff + ratio * x2 * np.exp(-b4 * x2),
        b4 / denom * diff - ratio * x2 * np.exp(-b5 * x2),
    ])
