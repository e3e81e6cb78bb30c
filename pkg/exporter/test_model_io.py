import io
import math
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp
from pydantic import ValidationError

from bounds.covariance_bounds import CovBounds, bounds_from_alpha
from design.models import gaussian_regressors, quadratic_grid
from design.problem import CriterionSpec, DesignProblem
from errors import MissingObjective, ModelSyntaxError, NameCollision
from exporter.model_io import format_for_path, parse_model, write_model
from exporter.text_model import ExportOptions, ModelFormat, format_number
from milp.builder import MilpModel, RowBlock, build
from milp.constraints import ExtraConstraint, Sense

GOLDEN = Path(__file__).parent / 'golden' / 'tiny_model.lp'
MPS = ExportOptions(format=ModelFormat.MPS)


@pytest.fixture(name='tiny_model')
def tiny_model_fixture():
    problem = DesignProblem.from_array([[1.0], [2.0]], 1)
    return build(problem, CriterionSpec.a_optimality(1), CovBounds.from_arrays([[0.0]], [[1.0]], alpha=1.0))


def _design_model(rng: np.random.Generator) -> MilpModel:
    m = int(rng.integers(1, 4))
    n = int(rng.integers(m + 1, 9))
    problem = gaussian_regressors(n, m, int(rng.integers(m, n + 1)), rng)
    spec = CriterionSpec.preset(str(rng.choice(['A', 'I', 'MV', 'G'])), problem)
    extras = [ExtraConstraint.design_linear([0, n - 1], [1.0, float(rng.uniform(0.5, 2.0))], Sense.LE, 2.0)]
    if rng.random() < 0.5:
        extras.append(ExtraConstraint.augmentation(int(rng.integers(n))))
    return build(problem, spec, bounds_from_alpha(spec, float(rng.uniform(1.0, 10.0))), extras)


def _random_bounds(rng: np.random.Generator, integer: bool) -> tuple[float, float]:
    if integer:
        low = float(rng.integers(-5, 1))
        choices = [(0.0, 1.0), (low, low + float(rng.integers(1, 5))), (0.0, math.inf), (-math.inf, math.inf),
                   (2.0, 2.0)]
    else:
        low = float(rng.uniform(-5.0, 0.0))
        high = low + float(rng.uniform(0.1, 5.0))
        choices = [(0.0, math.inf), (low, high), (-math.inf, math.inf), (-math.inf, high), (low, math.inf),
                   (high, high)]
    return choices[int(rng.integers(len(choices)))]


def _general_model(rng: np.random.Generator) -> MilpModel:
    # the last column appears nowhere and keeps the default bounds
    num_vars = int(rng.integers(2, 12))
    blocks = {}
    for sense in ('eq', 'ge', 'le'):
        rows = int(rng.integers(0, 5))
        dense = rng.standard_normal((rows, num_vars)) * (rng.random((rows, num_vars)) < 0.4)
        if sense == 'le':
            dense = np.vstack([dense, rng.uniform(0.5, 2.0, size=num_vars)])
            rows += 1
        dense = np.hstack([dense, np.zeros((rows, 1))])
        blocks[sense] = RowBlock(matrix=sp.csr_matrix(dense), rhs=rng.standard_normal(rows),
                                 names=tuple(f'{sense}{r}' for r in range(rows)))
    integrality = np.append(rng.random(num_vars) < 0.3, False)
    bounds = [_random_bounds(rng, bool(flag)) for flag in integrality[:-1]] + [(0.0, math.inf)]
    objective = np.append(rng.standard_normal(num_vars) * (rng.random(num_vars) < 0.6), 0.0)
    objective[0] = 1.5
    return MilpModel(name='random', objective=objective, eq=blocks['eq'], ge=blocks['ge'], le=blocks['le'],
                     var_lower=np.array([b[0] for b in bounds]), var_upper=np.array([b[1] for b in bounds]),
                     integrality=integrality, var_names=tuple(f'x{j}' for j in range(num_vars + 1)))


def _assert_same_model(parsed: MilpModel, original: MilpModel):
    perm = [parsed.var_names.index(name) for name in original.var_names]
    assert sorted(parsed.var_names) == sorted(original.var_names)
    np.testing.assert_allclose(parsed.objective[perm], original.objective, rtol=1e-15, atol=0)
    for block in ('eq', 'ge', 'le'):
        got, expected = getattr(parsed, block), getattr(original, block)
        assert got.names == expected.names
        np.testing.assert_allclose(got.matrix.toarray()[:, perm], expected.matrix.toarray(), rtol=1e-15, atol=0)
        np.testing.assert_allclose(got.rhs, expected.rhs, rtol=1e-15, atol=0)
    np.testing.assert_array_equal(parsed.var_lower[perm], original.var_lower)
    np.testing.assert_array_equal(parsed.var_upper[perm], original.var_upper)
    np.testing.assert_array_equal(parsed.integrality[perm], original.integrality)


def test_tiny_model_matches_golden_file(tiny_model):
    assert write_model(tiny_model) == GOLDEN.read_bytes()


def test_golden_file_parses_to_the_tiny_model(tiny_model):
    parsed = parse_model(GOLDEN.read_bytes())
    assert parsed.var_names == tiny_model.var_names
    assert parsed.layout == tiny_model.layout
    _assert_same_model(parsed, tiny_model)


def test_binaries_are_the_design_variables():
    problem = quadratic_grid(9, 3)
    spec = CriterionSpec.a_optimality(3)
    model = build(problem, spec, bounds_from_alpha(spec, 5.0))
    text = write_model(model).decode()
    binaries = text.split('Binaries\n')[1].split('End\n')[0].split()
    assert binaries == [f'd_{i}' for i in range(1, 10)]
    assert ' card: d_1 + d_2 + d_3 + d_4 + d_5 + d_6 + d_7 + d_8\n   + d_9 = 3\n' in text


def test_augmented_point_is_written_as_fixed_integer():
    problem = quadratic_grid(5, 3)
    spec = CriterionSpec.a_optimality(3)
    model = build(problem, spec, bounds_from_alpha(spec, 5.0), [ExtraConstraint.augmentation(2)])
    text = write_model(model).decode()
    assert ' d_3 = 1\n' in text
    assert 'Generals\n d_3\nEnd\n' in text
    assert ' FX BND  d_3' in write_model(model, MPS).decode()


def test_missing_objective(tiny_model):
    empty = tiny_model.model_copy(update={'objective': np.zeros(tiny_model.num_vars)})
    with pytest.raises(MissingObjective):
        write_model(empty)


def test_name_collisions(tiny_model):
    names = ('z_1_1_1', 'z_1_1_1', 'd_1', 'd_2', 'c_1_1', 'phi')
    with pytest.raises(NameCollision):
        write_model(tiny_model.model_copy(update={'var_names': names}))
    spaced = ('z 1', 'z_2_1_1', 'd_1', 'd_2', 'c_1_1', 'phi')
    with pytest.raises(NameCollision):
        write_model(tiny_model.model_copy(update={'var_names': spaced}))
    long = ('z' * 256, 'z_2_1_1', 'd_1', 'd_2', 'c_1_1', 'phi')
    with pytest.raises(NameCollision):
        write_model(tiny_model.model_copy(update={'var_names': long}), MPS)


def test_precision_below_nine_is_rejected():
    with pytest.raises(ValidationError):
        ExportOptions(precision=8)


def test_format_number():
    assert format_number(1.0) == '1'
    assert format_number(-0.0) == '0'
    assert format_number(0.1) == '0.10000000000000001'
    assert format_number(0.1, 9) == '0.1'
    assert format_number(-math.inf) == '-inf'


def test_export_is_deterministic(tiny_model):
    for options in (ExportOptions(), MPS):
        assert write_model(tiny_model, options) == write_model(tiny_model, options)


def test_writes_to_path_and_stream(tiny_model, tmp_path):
    target = tmp_path / 'tiny.mps'
    data = write_model(tiny_model, MPS, target)
    assert target.read_bytes() == data
    stream = io.BytesIO()
    write_model(tiny_model, sink=stream)
    assert stream.getvalue() == GOLDEN.read_bytes()
    assert format_for_path(target) is ModelFormat.MPS
    assert format_for_path(tmp_path / 'model.txt') is ModelFormat.LP


@pytest.mark.parametrize('fmt', list(ModelFormat))
def test_round_trip_design_models(fmt: ModelFormat):
    rng = np.random.default_rng(8)
    for _ in range(25):
        model = _design_model(rng)
        parsed = parse_model(write_model(model, ExportOptions(format=fmt)), fmt)
        assert parsed.var_names == model.var_names
        assert parsed.layout == model.layout
        _assert_same_model(parsed, model)


@pytest.mark.parametrize('fmt', list(ModelFormat))
def test_round_trip_general_models(fmt: ModelFormat):
    rng = np.random.default_rng(9)
    for _ in range(25):
        model = _general_model(rng)
        parsed = parse_model(write_model(model, ExportOptions(format=fmt)), fmt)
        assert parsed.layout is None
        _assert_same_model(parsed, model)
        if fmt is ModelFormat.MPS:
            assert parsed.name == 'random'
            assert parsed.var_names == model.var_names


@pytest.mark.parametrize('fmt', [ModelFormat.LP, ModelFormat.MPS])
def test_unreferenced_column_survives(fmt: ModelFormat):
    model = MilpModel(name='loose', objective=np.array([1.0, 0.0]),
                      eq=RowBlock(matrix=sp.csr_matrix((0, 2)), rhs=np.zeros(0), names=()),
                      ge=RowBlock(matrix=sp.csr_matrix((0, 2)), rhs=np.zeros(0), names=()),
                      le=RowBlock(matrix=sp.csr_matrix(np.array([[1.0, 0.0]])), rhs=np.array([1.0]), names=('r',)),
                      var_lower=np.zeros(2), var_upper=np.full(2, math.inf), integrality=np.zeros(2, dtype=bool),
                      var_names=('x0', 'x1'))
    data = write_model(model, ExportOptions(format=fmt))
    if fmt is ModelFormat.LP:
        assert 'Bounds\n x1 >= 0\n' in data.decode()
    parsed = parse_model(data, fmt)
    assert parsed.var_names == ('x0', 'x1')
    _assert_same_model(parsed, model)


def test_non_ascii_bytes_report_the_line():
    data = GOLDEN.read_bytes().replace(b'card:', b'c\xe4rd:')
    with pytest.raises(ModelSyntaxError, match='0xe4') as error:
        parse_model(data)
    assert error.value.lineno == data[:data.index(b'\xe4')].count(b'\n') + 1


def test_truncated_files():
    lines = GOLDEN.read_text().splitlines(keepends=True)
    with pytest.raises(ModelSyntaxError) as error:
        parse_model(''.join(lines[:10]))
    assert error.value.lineno == 11
    with pytest.raises(ModelSyntaxError):
        parse_model(''.join(lines[:7]) + ' mc2_1_1_1: z_1_1_1 - d_1\n')


def test_truncated_mps(tiny_model):
    text = write_model(tiny_model, MPS).decode()
    with pytest.raises(ModelSyntaxError):
        parse_model(text.replace('ENDATA\n', ''), ModelFormat.MPS)


def test_unknown_section_keyword():
    text = GOLDEN.read_text().replace('Bounds', 'Bonds')
    with pytest.raises(ModelSyntaxError, match='Bonds') as error:
        parse_model(text)
    assert error.value.lineno == 15


def test_unknown_mps_section(tiny_model):
    text = write_model(tiny_model, MPS).decode().replace('RHS\n', 'SOS\n')
    with pytest.raises(ModelSyntaxError, match='SOS'):
        parse_model(text, ModelFormat.MPS)


def test_maximization_is_rejected():
    with pytest.raises(ModelSyntaxError):
        parse_model(GOLDEN.read_text().replace('Minimize', 'Maximize'))


def test_mps_ranges_and_free_format():
    text = '\n'.join([
        'NAME ranged',
        'ROWS',
        ' N cost',
        ' G lim',
        ' E bal',
        'COLUMNS',
        ' x cost 1 lim 1',
        ' y cost 2 bal 1',
        ' x bal 1',
        'RHS',
        ' RHS lim 1 bal 2',
        'RANGES',
        ' RNG lim 3 bal -1',
        'BOUNDS',
        ' UP BND x 4',
        ' MI BND y',
        'ENDATA',
    ]) + '\n'
    model = parse_model(text, ModelFormat.MPS)
    assert model.name == 'ranged'
    assert model.var_names == ('x', 'y')
    np.testing.assert_array_equal(model.objective, [1.0, 2.0])
    assert model.eq.size == 0
    assert model.ge.names == ('lim', 'bal')
    np.testing.assert_array_equal(model.ge.matrix.toarray(), [[1.0, 0.0], [1.0, 1.0]])
    np.testing.assert_array_equal(model.ge.rhs, [1.0, 1.0])
    assert model.le.names == ('lim_range', 'bal_range')
    np.testing.assert_array_equal(model.le.rhs, [4.0, 2.0])
    np.testing.assert_array_equal(model.var_lower, [0.0, -np.inf])
    np.testing.assert_array_equal(model.var_upper, [4.0, np.inf])


def test_lp_dialect_variants():
    text = '\n'.join([
        '\\ hand written',
        'Minimize',
        ' cost: 2 x - y',
        '  + 0.5 z',
        'Subject To',
        ' 3 x + y',
        '   >= 1',
        ' two: x + z <= 4',
        'Bounds',
        ' y free',
        ' x <= 3',
        ' 1 <= z',
        'Generals',
        ' z',
        'End',
    ]) + '\n'
    model = parse_model(text)
    assert model.var_names == ('x', 'y', 'z')
    np.testing.assert_array_equal(model.objective, [2.0, -1.0, 0.5])
    assert model.ge.names == ('R1',)
    np.testing.assert_array_equal(model.ge.matrix.toarray(), [[3.0, 1.0, 0.0]])
    np.testing.assert_array_equal(model.le.rhs, [4.0])
    np.testing.assert_array_equal(model.var_lower, [0.0, -np.inf, 1.0])
    np.testing.assert_array_equal(model.var_upper, [3.0, np.inf, np.inf])
    np.testing.assert_array_equal(model.integrality, [False, False, True])
