import numpy as np
import pytest

from design.models import (EXPONENTIAL_BETA0, EXPONENTIAL_CANDIDATES, two_factor_exponential_gradient,
                           two_factor_exponential_mean)
from design.nonlinear import localize_nonlinear
from errors import RankDeficient


def test_linear_mean_recovers_regressors():
    xs = np.linspace(-1, 1, 7)

    def mean(x, beta):
        return beta[0] + beta[1] * x + beta[2] * x ** 2

    problem = localize_nonlinear(mean, [0.3, -1.2, 2.0], xs, 3)
    expected = np.column_stack([np.ones(7), xs, xs ** 2])
    np.testing.assert_allclose(problem.F, expected, atol=1e-7)


def test_constant_term_derivative_is_one():
    xs = [0.0, 0.5, 1.0, 2.0]

    def mean(x, beta):
        return beta[0] + beta[1] * np.exp(-beta[2] * x)

    problem = localize_nonlinear(mean, [1.0, 1.0, 2.0], xs, 3)
    np.testing.assert_allclose(problem.F[:, 0], 1.0, atol=1e-8)


def test_exponential_model_matches_analytic_gradient():
    beta0 = np.array(EXPONENTIAL_BETA0)
    problem = localize_nonlinear(two_factor_exponential_mean, beta0, [(1.0, 5.0)] + list(EXPONENTIAL_CANDIDATES),
                                 5)
    np.testing.assert_allclose(problem.F[0], two_factor_exponential_gradient((1.0, 5.0), beta0), atol=1e-6)
    for i, point in enumerate(EXPONENTIAL_CANDIDATES, start=1):
        np.testing.assert_allclose(problem.F[i], two_factor_exponential_gradient(point, beta0), atol=1e-6)


def test_rank_deficient_localization():
    def mean(x, beta):
        return (beta[0] + beta[1]) * x

    with pytest.raises(RankDeficient):
        localize_nonlinear(mean, [1.0, 1.0], [1.0, 2.0, 3.0], 2)


def test_step_must_be_positive():
    with pytest.raises(ValueError):
        localize_nonlinear(lambda x, b: b[0] * x, [1.0], [1.0], 1, step=0.0)
