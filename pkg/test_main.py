import io
import json
import math

import pytest
from sqlmodel import SQLModel, create_engine
from sqlmodel.pool import StaticPool

from design.models import quadratic_grid
from design.problem import CriterionSpec
from exporter.model_io import parse_model
from exporter.text_model import ModelFormat
from main import EXIT_ERROR, EXIT_LIMIT, EXIT_OK, main
from oracle.enumeration import enumerate_best


@pytest.fixture(name='engine')
def engine_fixture():
    engine = create_engine('sqlite://', connect_args={'check_same_thread': False},
                           poolclass=StaticPool)
    SQLModel.metadata.create_all(engine)
    return engine


@pytest.fixture(name='problem_path')
def problem_path_fixture(tmp_path):
    path = tmp_path / 'quadratic-9.json'
    path.write_text(json.dumps(quadratic_grid(9, 4).model_dump(by_alias=True)), encoding='utf-8')
    return path


def _run(*argv, engine=None) -> tuple[int, str]:
    stdout = io.StringIO()
    code = main([str(a) for a in argv], engine=engine, stdout=stdout)
    return code, stdout.getvalue()


def test_solve_writes_json_and_tsv(problem_path, tmp_path):
    out, tsv = tmp_path / 'result.json', tmp_path / 'design.tsv'
    code, _ = _run('solve', problem_path, '--criterion', 'MV', '--lp-backend', 'highs', '--restarts', '3',
                   '--out', out, '--labels-tsv', tsv)
    assert code == EXIT_OK
    result = json.loads(out.read_text(encoding='utf-8'))
    problem = quadratic_grid(9, 4)
    expected = enumerate_best(problem, CriterionSpec.preset('MV', problem)).criterion_value
    assert result['status'] == 'Certified'
    assert math.isclose(result['criterion_value'], expected, rel_tol=1e-7)
    assert sum(result['design']['counts']) == 4
    assert len(result['sigma']) == 3
    assert set(result) >= {'design', 'criterion_value', 'sigma', 'status', 'gap', 'nodes', 'wall_time'}
    lines = tsv.read_text(encoding='utf-8').splitlines()
    assert lines[0] == 'label\td'
    assert len(lines) == 10


def test_solve_is_reproducible(problem_path):
    first = json.loads(_run('solve', problem_path, '--lp-backend', 'highs', '--restarts', '2')[1])
    second = json.loads(_run('solve', problem_path, '--lp-backend', 'highs', '--restarts', '2')[1])
    first.pop('wall_time')
    second.pop('wall_time')
    assert first == second


def test_time_limit_exit_code(tmp_path):
    path = tmp_path / 'quadratic-15.json'
    path.write_text(json.dumps(quadratic_grid(15, 4).model_dump(by_alias=True)), encoding='utf-8')
    code, text = _run('solve', path, '--time-limit', '1e-9', '--lp-backend', 'highs', '--restarts', '1')
    status = json.loads(text)['status']
    assert code in (EXIT_OK, EXIT_LIMIT)
    assert (code == EXIT_LIMIT) == (status == 'TimeLimit')


def test_constraints_through_the_cli(problem_path, tmp_path):
    constraints = tmp_path / 'constraints.json'
    constraints.write_text(json.dumps({'constraints': [
        {'kind': 'design_linear', 'labels': ['-0.5', '-0.25'], 'sense': '>=', 'rhs': 1},
        {'kind': 'augmentation', 'points': [5]},
    ]}), encoding='utf-8')
    code, text = _run('solve', problem_path, '--constraints', constraints, '--lp-backend', 'highs')
    assert code == EXIT_OK
    counts = json.loads(text)['design']['counts']
    assert counts[2] + counts[3] >= 1
    assert counts[4] == 1


def test_infeasible_constraints_exit_with_error(problem_path, tmp_path):
    constraints = tmp_path / 'constraints.json'
    constraints.write_text(json.dumps([{'kind': 'design_linear', 'points': list(range(1, 10)), 'sense': '<=',
                                        'rhs': 2}]), encoding='utf-8')
    code, _ = _run('solve', problem_path, '--constraints', constraints)
    assert code == EXIT_ERROR


def test_replication_caps(problem_path):
    code, text = _run('solve', problem_path, '--N', '5', '--caps', '2,2,2,2,2,2,2,2,2', '--lp-backend', 'highs',
                      '--restarts', '2')
    assert code == EXIT_OK
    counts = json.loads(text)['design']['counts']
    assert sum(counts) == 5 and max(counts) <= 2


def test_replication_caps_above_point_count(tmp_path):
    path = tmp_path / 'quadratic-3.json'
    path.write_text(json.dumps(quadratic_grid(3, 3).model_dump(by_alias=True)), encoding='utf-8')
    code, text = _run('solve', path, '--N', '5', '--caps', '5,5,5', '--lp-backend', 'highs', '--restarts', '2')
    assert code == EXIT_OK
    assert sum(json.loads(text)['design']['counts']) == 5
    assert _run('solve', path, '--N', '5')[0] == EXIT_ERROR


def test_bounds_subcommand(problem_path):
    code, text = _run('bounds', problem_path, '--criterion', 'G', '--restarts', '2')
    assert code == EXIT_OK
    payload = json.loads(text)
    assert len(payload['L']) == 3 and len(payload['U'][0]) == 3
    assert all(payload['L'][j][j] == 0.0 for j in range(3))
    assert payload['alpha'] > 0


def test_export_subcommand(problem_path, tmp_path):
    out = tmp_path / 'model.mps'
    code, _ = _run('export', problem_path, '--format', 'mps', '--out', out, '--restarts', '2')
    assert code == EXIT_OK
    model = parse_model(out.read_bytes(), ModelFormat.MPS)
    assert model.layout.n == 9 and model.layout.m == 3
    code, text = _run('export', problem_path, '--restarts', '2')
    assert code == EXIT_OK
    assert text.startswith('Minimize\n obj: phi\n')


def test_export_rejects_low_precision(problem_path):
    code, _ = _run('export', problem_path, '--precision', '6')
    assert code == EXIT_ERROR


def test_enumerate_and_heuristic(problem_path):
    code, text = _run('enumerate', problem_path, '--criterion', 'I')
    assert code == EXIT_OK
    oracle = json.loads(text)
    assert oracle['status'] == 'Complete'
    assert oracle['total'] == math.comb(9, 4)
    code, text = _run('heuristic', problem_path, '--criterion', 'I', '--restarts', '3')
    assert code == EXIT_OK
    assert json.loads(text)['alpha'] >= oracle['criterion_value'] - 1e-9


def test_record_and_history(problem_path, engine):
    assert _run('heuristic', problem_path, '--record', engine=engine)[0] == EXIT_OK
    assert _run('enumerate', problem_path, '--record', engine=engine)[0] == EXIT_OK
    code, text = _run('history', engine=engine)
    assert code == EXIT_OK
    runs = json.loads(text)
    assert {run['subcommand'] for run in runs} == {'heuristic', 'enumerate'}
    assert all(run['n'] == 9 and run['run_budget'] == 4 for run in runs)


def test_input_errors(problem_path, tmp_path):
    assert _run('solve', tmp_path / 'missing.json')[0] == EXIT_ERROR
    assert _run('solve', problem_path, '--criterion', 'D')[0] == EXIT_ERROR
    broken = tmp_path / 'broken.json'
    broken.write_text('{"regressors": [[1, 0], [0, 1]], "N": 3}', encoding='utf-8')
    assert _run('solve', broken)[0] == EXIT_ERROR
    assert _run('frobnicate')[0] == EXIT_ERROR


@pytest.mark.slow
def test_g_optimal_quadratic_regression(tmp_path):
    path = tmp_path / 'quadratic-31.json'
    path.write_text(json.dumps(quadratic_grid(31, 3).model_dump(by_alias=True)), encoding='utf-8')
    code, text = _run('solve', path, '--criterion', 'G', '--N', '5')
    assert code == EXIT_OK
    support = json.loads(text)['design']['support']
    assert [s['point'] for s in support] == [1, 5, 16, 27, 31]
    assert support[1]['label'] == '-0.733333'


@pytest.mark.slow
def test_interval_constraints_on_quadratic_regression(tmp_path):
    path = tmp_path / 'quadratic-31.json'
    path.write_text(json.dumps(quadratic_grid(31, 5).model_dump(by_alias=True)), encoding='utf-8')
    constraints = tmp_path / 'constraints.json'
    constraints.write_text(json.dumps([
        {'kind': 'design_linear', 'points': list(range(6, 11)), 'sense': '>=', 'rhs': 1},
        {'kind': 'design_linear', 'points': list(range(21, 26)), 'sense': '>=', 'rhs': 1},
    ]), encoding='utf-8')
    code, text = _run('solve', path, '--criterion', 'A', '--constraints', constraints)
    assert code == EXIT_OK
    counts = json.loads(text)['design']['counts']
    assert sum(counts[5:10]) >= 1 and sum(counts[20:25]) >= 1
