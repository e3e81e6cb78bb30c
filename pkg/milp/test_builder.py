import itertools
import math

import numpy as np
import pytest

from bounds.covariance_bounds import CovBounds, bounds_from_alpha, combined_bounds
from design.models import gaussian_regressors, quadratic_grid
from design.problem import CriterionSpec, DesignProblem, ExactDesign, criterion_value, info_matrix
from errors import DimensionMismatch, InfeasibleCaps
from heuristic.exchange import HeuristicConfig, exchange_search
from linalg.dense import is_positive_definite
from milp.builder import build, embed_design, extract_design, extract_sigma, max_violation
from milp.constraints import ExtraConstraint, Sense, covariance_constraint_from_criterion


@pytest.fixture(name='tiny_model')
def tiny_model_fixture():
    problem = DesignProblem.from_array([[1.0], [2.0]], 1)
    bounds = CovBounds.from_arrays([[0.0]], [[1.0]], alpha=1.0)
    return build(problem, CriterionSpec.a_optimality(1), bounds)


def test_tiny_model_layout(tiny_model):
    assert tiny_model.var_names == ('z_1_1_1', 'z_2_1_1', 'd_1', 'd_2', 'c_1_1', 'phi')
    np.testing.assert_array_equal(tiny_model.objective, [0, 0, 0, 0, 0, 1])
    np.testing.assert_array_equal(tiny_model.integrality, [False, False, True, True, False, False])
    np.testing.assert_array_equal(tiny_model.var_lower, [0, 0, 0, 0, 0, 0])
    np.testing.assert_array_equal(tiny_model.var_upper, [1, 1, 1, 1, 1, np.inf])


def test_tiny_model_rows(tiny_model):
    assert tiny_model.eq.names == ('sigma_1_1', 'card')
    np.testing.assert_array_equal(tiny_model.eq.matrix.toarray(), [[1, 4, 0, 0, 0, 0],
                                                                   [0, 0, 1, 1, 0, 0]])
    np.testing.assert_array_equal(tiny_model.eq.rhs, [1, 1])
    assert tiny_model.ge.names == ('mc1_1_1_1', 'mc1_2_1_1', 'mc2_1_1_1', 'mc2_2_1_1', 'epi_1')
    np.testing.assert_array_equal(tiny_model.ge.matrix.toarray(), [[1, 0, 0, 0, 0, 0],
                                                                   [0, 1, 0, 0, 0, 0],
                                                                   [1, 0, -1, 0, -1, 0],
                                                                   [0, 1, 0, -1, -1, 0],
                                                                   [0, 0, 0, 0, -1, 1]])
    np.testing.assert_array_equal(tiny_model.ge.rhs, [0, 0, -1, -1, 0])
    assert tiny_model.le.names == ('mc3_1_1_1', 'mc3_2_1_1', 'mc4_1_1_1', 'mc4_2_1_1')
    np.testing.assert_array_equal(tiny_model.le.matrix.toarray(), [[1, 0, -1, 0, 0, 0],
                                                                   [0, 1, 0, -1, 0, 0],
                                                                   [1, 0, 0, 0, -1, 0],
                                                                   [0, 1, 0, 0, -1, 0]])
    np.testing.assert_array_equal(tiny_model.le.rhs, [0, 0, 0, 0])


def test_tiny_model_explicit_zeros_are_dropped(tiny_model):
    assert tiny_model.ge.matrix.nnz == 1 + 1 + 3 + 3 + 2


def test_quadratic_counts():
    problem = quadratic_grid(31, 5)
    spec = CriterionSpec.a_optimality(3)
    model = build(problem, spec, bounds_from_alpha(spec, 1.0))
    assert model.num_vars == 320
    assert model.eq.size == 9 + 1
    assert model.ge.size == 2 * 31 * 9 + 1
    assert model.le.size == 2 * 31 * 9
    assert int(model.integrality.sum()) == 31


def test_random_counts():
    rng = np.random.default_rng(8)
    for _ in range(5):
        m = int(rng.integers(1, 5))
        n = int(rng.integers(m + 1, 12))
        k = int(rng.integers(1, 5))
        problem = gaussian_regressors(n, m, m, rng)
        spec = CriterionSpec.from_arrays([rng.standard_normal((m, m)) for _ in range(k)])
        model = build(problem, spec, bounds_from_alpha(spec, 2.0))
        assert model.num_vars == n * m * m + n + m * m + 1
        assert model.num_rows == m * m + 4 * n * m * m + 1 + k


def test_design_constraint_appends_one_row():
    problem = quadratic_grid(31, 5)
    spec = CriterionSpec.a_optimality(3)
    bounds = bounds_from_alpha(spec, 1.0)
    base = build(problem, spec, bounds)
    row = ExtraConstraint.design_linear(range(5, 11), [1.0] * 6, Sense.GE, 1)
    model = build(problem, spec, bounds, [row])
    assert model.ge.size == base.ge.size + 1
    assert model.ge.names[-1] == 'user_1'
    touched = model.ge.matrix[-1].indices
    np.testing.assert_array_equal(touched, model.layout.d.start + np.arange(5, 11))
    assert model.ge.rhs[-1] == 1.0


def test_covariance_constraint_rows():
    problem = quadratic_grid(31, 5)
    spec = CriterionSpec.a_optimality(3)
    g_rows = covariance_constraint_from_criterion(CriterionSpec.preset('G', problem), 0.9)
    model = build(problem, spec, bounds_from_alpha(spec, 1.0), g_rows)
    assert model.le.size == 2 * 31 * 9 + 31
    assert model.le.names[-31:] == tuple(f'cov_{ell}' for ell in range(1, 32))
    tail = model.le.matrix[-31:]
    assert tail.indices.min() >= model.layout.c.start
    assert tail.indices.max() < model.layout.c.stop


def test_augmentation_fixes_variables():
    problem = quadratic_grid(9, 4)
    spec = CriterionSpec.a_optimality(3)
    model = build(problem, spec, bounds_from_alpha(spec, 1.0), [ExtraConstraint.augmentation(2)])
    assert model.var_lower[model.layout.d_index(2)] == 1.0
    assert model.num_rows == 9 + 4 * 9 * 9 + 1 + 1
    with pytest.raises(InfeasibleCaps):
        build(problem, spec, bounds_from_alpha(spec, 1.0), [ExtraConstraint.augmentation(2, 2)])


def test_mismatched_inputs():
    problem = quadratic_grid(9, 4)
    with pytest.raises(DimensionMismatch):
        build(problem, CriterionSpec.a_optimality(2), bounds_from_alpha(CriterionSpec.a_optimality(2), 1.0))


def test_embedding_of_every_design():
    problem = quadratic_grid(9, 4)
    for tag in ('A', 'I', 'MV', 'G'):
        spec = CriterionSpec.preset(tag, problem)
        designs, values = [], []
        for support in itertools.combinations(range(problem.n), problem.run_budget):
            design = ExactDesign.from_support(problem.n, support)
            if is_positive_definite(info_matrix(problem, design)):
                designs.append(design)
                values.append(criterion_value(spec, info_matrix(problem, design)))
        model = build(problem, spec, bounds_from_alpha(spec, max(values)))
        for design, value in zip(designs, values):
            x = embed_design(model, design)
            assert max_violation(model, x) <= 1e-8
            assert math.isclose(x[model.layout.phi], value, rel_tol=1e-9)
            assert extract_design(model, x) == design


def test_heuristic_incumbent_embeds():
    problem = quadratic_grid(31, 5)
    for tag in ('A', 'I', 'MV', 'G'):
        spec = CriterionSpec.preset(tag, problem)
        d0 = exchange_search(problem, spec, HeuristicConfig(restarts=2))
        model = build(problem, spec, combined_bounds(problem, spec, d0))
        x = embed_design(model, d0)
        assert max_violation(model, x) <= 1e-8
        np.testing.assert_allclose(extract_sigma(model, x), np.linalg.inv(info_matrix(problem, d0)), atol=1e-10)


def test_fixed_bounds(tiny_model):
    lower, upper = tiny_model.fixed_bounds({0: 1, 1: 0})
    assert lower[2] == upper[2] == 1.0
    assert lower[3] == upper[3] == 0.0
    assert tiny_model.var_lower[2] == 0.0
