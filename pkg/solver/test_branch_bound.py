import math

import numpy as np
import pytest

from bounds.covariance_bounds import CovBounds, combined_bounds
from design.models import gaussian_regressors, quadratic_grid
from design.problem import CriterionSpec, DesignProblem, ExactDesign, criterion_value, info_matrix
from errors import AllIntegral
from heuristic.exchange import HeuristicConfig, exchange_search
from milp.builder import build
from milp.constraints import ExtraConstraint, Sense, covariance_constraint_from_criterion
from oracle.enumeration import enumerate_best
from solver.branch_bound import SolveLimits, SolveStatus, branching_choice, solve
from solver.simplex import LpBackend, LpSolution, LpStatus


@pytest.fixture(name='limits')
def limits_fixture():
    return SolveLimits(lp_backend=LpBackend.HIGHS)


def _model(problem, spec, extras=()):
    d0 = exchange_search(problem, spec, HeuristicConfig(restarts=2), extras)
    return build(problem, spec, combined_bounds(problem, spec, d0), extras), d0


def _solution(model, d_values) -> LpSolution:
    x = np.zeros(model.num_vars)
    x[model.d_slice] = d_values
    return LpSolution(status=LpStatus.OPTIMAL, objective=0.0, x=x)


def test_branching_choice():
    bounds = CovBounds.from_arrays([[0.0]], [[1.0]], alpha=1.0)
    three = build(DesignProblem.from_array([[1.0], [2.0], [3.0]], 1), CriterionSpec.a_optimality(1), bounds)
    two = build(DesignProblem.from_array([[1.0], [2.0]], 1), CriterionSpec.a_optimality(1), bounds)
    assert branching_choice(_solution(three, [0.5, 0.0, 1.0]), three) == 0
    assert branching_choice(_solution(three, [0.0, 0.3, 0.5]), three) == 2
    assert branching_choice(_solution(two, [0.4, 0.6]), two) == 0
    with pytest.raises(AllIntegral):
        branching_choice(_solution(two, [1.0, 0.0]), two)


def test_tiny_model():
    problem = DesignProblem.from_array([[1.0], [2.0]], 1)
    model = build(problem, CriterionSpec.a_optimality(1), CovBounds.from_arrays([[0.0]], [[1.0]], alpha=1.0))
    result = solve(model, limits=SolveLimits(lp_backend=LpBackend.SIMPLEX))
    assert result.status is SolveStatus.CERTIFIED
    assert result.design.counts == (0, 1)
    assert math.isclose(result.criterion_value, 0.25)
    assert result.gap <= 1e-6


def test_full_budget_needs_no_branching(limits: SolveLimits):
    problem = quadratic_grid(5, 5)
    spec = CriterionSpec.a_optimality(3)
    model, _ = _model(problem, spec)
    result = solve(model, limits=limits)
    assert result.status is SolveStatus.CERTIFIED
    assert result.design.counts == (1, 1, 1, 1, 1)
    assert result.nodes_explored == 1


@pytest.mark.parametrize('tag', ['A', 'I', 'MV', 'G'])
def test_matches_enumeration_on_small_grid(tag: str, limits: SolveLimits):
    problem = quadratic_grid(9, 4)
    spec = CriterionSpec.preset(tag, problem)
    model, d0 = _model(problem, spec)
    result = solve(model, d0, limits)
    oracle = enumerate_best(problem, spec)
    assert result.status is SolveStatus.CERTIFIED
    assert math.isclose(result.criterion_value, oracle.criterion_value, rel_tol=1e-7)
    sigma = np.linalg.inv(info_matrix(problem, result.design))
    np.testing.assert_allclose(result.sigma, sigma, rtol=1e-7, atol=1e-10)
    assert math.isclose(result.criterion_value, criterion_value(spec, info_matrix(problem, result.design)),
                        rel_tol=1e-8)


def test_dense_simplex_backend_matches_enumeration():
    rng = np.random.default_rng(17)
    problem = gaussian_regressors(7, 2, 3, rng)
    spec = CriterionSpec.a_optimality(2)
    model, d0 = _model(problem, spec)
    result = solve(model, d0, SolveLimits(lp_backend=LpBackend.SIMPLEX))
    assert result.status is SolveStatus.CERTIFIED
    assert math.isclose(result.criterion_value, enumerate_best(problem, spec).criterion_value, rel_tol=1e-7)


def test_solves_without_incumbent(limits: SolveLimits):
    problem = quadratic_grid(7, 3)
    spec = CriterionSpec.preset('MV', problem)
    model, _ = _model(problem, spec)
    result = solve(model, None, limits)
    assert result.status is SolveStatus.CERTIFIED
    assert math.isclose(result.criterion_value, enumerate_best(problem, spec).criterion_value, rel_tol=1e-7)


def test_incumbent_history_is_non_increasing(limits: SolveLimits):
    rng = np.random.default_rng(2)
    problem = gaussian_regressors(9, 3, 4, rng)
    spec = CriterionSpec.preset('G', problem)
    model, _ = _model(problem, spec)
    result = solve(model, None, limits)
    history = result.incumbent_history
    assert history
    assert all(b <= a for a, b in zip(history, history[1:]))
    assert history[-1] == result.criterion_value or math.isclose(history[-1], result.criterion_value, rel_tol=1e-9)


def test_deterministic(limits: SolveLimits):
    problem = quadratic_grid(9, 4)
    spec = CriterionSpec.preset('I', problem)
    model, d0 = _model(problem, spec)
    first = solve(model, d0, limits)
    second = solve(model, d0, limits)
    assert first.nodes_explored == second.nodes_explored
    assert first.design == second.design
    assert first.criterion_value == second.criterion_value


def test_threads_give_the_same_value():
    problem = quadratic_grid(9, 4)
    spec = CriterionSpec.preset('A', problem)
    model, d0 = _model(problem, spec)
    sequential = solve(model, d0, SolveLimits(lp_backend=LpBackend.HIGHS))
    parallel = solve(model, d0, SolveLimits(lp_backend=LpBackend.HIGHS, threads=2))
    assert math.isclose(sequential.criterion_value, parallel.criterion_value, rel_tol=1e-12)


def test_design_constraints_match_constrained_enumeration(limits: SolveLimits):
    problem = quadratic_grid(11, 4)
    spec = CriterionSpec.a_optimality(3)
    extras = [ExtraConstraint.design_linear([2, 3], [1.0, 1.0], Sense.GE, 1),
              ExtraConstraint.design_linear([7, 8], [1.0, 1.0], Sense.GE, 1)]
    model, d0 = _model(problem, spec, extras)
    result = solve(model, d0, limits)
    oracle = enumerate_best(problem, spec, extras)
    assert result.status is SolveStatus.CERTIFIED
    assert math.isclose(result.criterion_value, oracle.criterion_value, rel_tol=1e-7)
    counts = result.design.counts
    assert counts[2] + counts[3] >= 1 and counts[7] + counts[8] >= 1


def test_covariance_constraints_match_constrained_enumeration(limits: SolveLimits):
    problem = quadratic_grid(9, 4)
    spec = CriterionSpec.a_optimality(3)
    g_spec = CriterionSpec.preset('G', problem)
    limit = 1.05 * enumerate_best(problem, g_spec).criterion_value
    extras = covariance_constraint_from_criterion(g_spec, limit)
    model, d0 = _model(problem, spec, extras)
    result = solve(model, d0, limits)
    oracle = enumerate_best(problem, spec, extras)
    assert result.status is SolveStatus.CERTIFIED
    assert math.isclose(result.criterion_value, oracle.criterion_value, rel_tol=1e-7)
    assert criterion_value(g_spec, info_matrix(problem, result.design)) <= limit + 1e-7


def test_augmentation_keeps_fixed_points(limits: SolveLimits):
    problem = quadratic_grid(9, 4)
    spec = CriterionSpec.a_optimality(3)
    extras = [ExtraConstraint.augmentation(1)]
    model, d0 = _model(problem, spec, extras)
    result = solve(model, d0, limits)
    assert result.design.counts[1] == 1
    assert math.isclose(result.criterion_value, enumerate_best(problem, spec, extras).criterion_value,
                        rel_tol=1e-7)


def test_contradictory_constraints_are_infeasible(limits: SolveLimits):
    problem = quadratic_grid(7, 3)
    spec = CriterionSpec.a_optimality(3)
    d0 = exchange_search(problem, spec, HeuristicConfig(restarts=1))
    impossible = ExtraConstraint.design_linear(range(7), [1.0] * 7, Sense.LE, 2)
    model = build(problem, spec, combined_bounds(problem, spec, d0), [impossible])
    result = solve(model, None, limits)
    assert result.status is SolveStatus.INFEASIBLE
    assert result.design is None


def test_infeasible_incumbent_is_ignored(limits: SolveLimits):
    problem = quadratic_grid(7, 3)
    spec = CriterionSpec.a_optimality(3)
    extras = [ExtraConstraint.design_linear([0], [1.0], Sense.EQ, 0)]
    model, _ = _model(problem, spec, extras)
    result = solve(model, ExactDesign.from_support(7, [0, 3, 6]), limits)
    assert result.status is SolveStatus.CERTIFIED
    assert result.design.counts[0] == 0


def test_node_limit_reports_the_gap():
    problem = quadratic_grid(15, 4)
    spec = CriterionSpec.a_optimality(3)
    model, d0 = _model(problem, spec)
    result = solve(model, d0, SolveLimits(lp_backend=LpBackend.HIGHS, node_limit=1))
    assert result.design is not None
    assert result.status in (SolveStatus.TIME_LIMIT, SolveStatus.CERTIFIED)
    if result.status is SolveStatus.TIME_LIMIT:
        assert result.gap > 1e-6


@pytest.mark.slow
@pytest.mark.parametrize('tag', ['A', 'I', 'MV', 'G'])
def test_quadratic_regression_matches_enumeration(tag: str):
    problem = quadratic_grid(31, 5)
    spec = CriterionSpec.preset(tag, problem)
    model, d0 = _model(problem, spec)
    result = solve(model, d0, SolveLimits())
    assert result.status is SolveStatus.CERTIFIED
    assert math.isclose(result.criterion_value, enumerate_best(problem, spec).criterion_value, rel_tol=1e-7)
    if tag == 'G':
        assert result.design.support == (0, 4, 15, 26, 30)


@pytest.mark.slow
def test_g_optimal_design_on_augmented_grid():
    gamma = math.sqrt((-7.0 + math.sqrt(65.0)) / 2.0)
    problem = quadratic_grid(31, 5, extra_points=(-gamma, gamma))
    spec = CriterionSpec.preset('G', problem)
    model, d0 = _model(problem, spec)
    result = solve(model, d0, SolveLimits())
    assert result.status is SolveStatus.CERTIFIED
    xs = problem.F[list(result.design.support), 1]
    np.testing.assert_allclose(xs, [-1.0, -gamma, 0.0, gamma, 1.0], atol=1e-12)


@pytest.mark.slow
def test_randomized_instances_match_enumeration():
    rng = np.random.default_rng(2024)
    for _ in range(10):
        m = int(rng.integers(2, 6))
        n = int(rng.integers(m + 2, 15))
        run_budget = int(rng.integers(m, min(7, n - 1) + 1))
        problem = gaussian_regressors(n, m, run_budget, rng)
        for tag in ('A', 'I', 'MV', 'G'):
            spec = CriterionSpec.preset(tag, problem)
            model, d0 = _model(problem, spec)
            result = solve(model, d0, SolveLimits())
            assert result.status is SolveStatus.CERTIFIED
            oracle = enumerate_best(problem, spec)
            assert math.isclose(result.criterion_value, oracle.criterion_value, rel_tol=1e-7)
