"""
This module is the command-line entry point of optex.

Subcommands:
    solve: Certified optimal exact design by branch-and-bound.
    bounds: Covariance bounds L and U from the reference design.
    export: Design MILP in LP or MPS format.
    enumerate: Optimal design by complete enumeration.
    heuristic: Reference design d_0 and its criterion value alpha.
    history: Runs stored in the ledger.

Exit codes are 0 on a certified or complete result, 2 when a limit stops
the search, and 1 on any error. The log level comes from OPTEX_LOG.
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path

from pydantic import ValidationError

from bounds.covariance_bounds import combined_bounds, reference_alpha
from db import get_session
from errors import OptexError
from exporter.model_io import write_model
from exporter.text_model import ExportOptions, ModelFormat
from oracle.enumeration import enumerate_best, enumerate_capped
from pipeline.pipeline import (RunConfig, RunInputs, Subcommand, design_payload, load_design, load_inputs,
                               load_override, prepare_model, reference_design, solve_design, validate_design,
                               write_design_tsv)
from runs.run_records import RunRecordCreate, RunRecordPublic, read_runs, record_run
from solver.branch_bound import SolveStatus
from solver.simplex import LpBackend

logger = logging.getLogger(__name__)

LOG_LEVEL_ENV: str = 'OPTEX_LOG'
LOG_FORMAT: str = '%(asctime)s %(levelname)s %(name)s: %(message)s'

EXIT_OK: int = 0
EXIT_ERROR: int = 1
EXIT_LIMIT: int = 2

STATUS_COMPLETE: str = 'Complete'
STATUS_HEURISTIC: str = 'Heuristic'


def _caps(value: str) -> list[int]:
    """
    Replication caps as "2,2,1" or as a JSON file holding a list.
    """
    path = Path(value)
    if path.suffix == '.json' or path.is_file():
        return [int(c) for c in json.loads(path.read_text(encoding='utf-8'))]
    return [int(c) for c in value.split(',') if c.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='optex', description='Optimal exact experimental designs by MILP.')
    subparsers = parser.add_subparsers(dest='subcommand', required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('problem', type=Path, help='JSON problem file {regressors, N, labels}')
    common.add_argument('--N', dest='run_budget', type=int, help='number of trials, overriding the problem file')
    common.add_argument('--criterion', default='A', help='criterion preset: A, I, MV or G')
    common.add_argument('--blocks', type=Path, help='JSON file of custom criterion blocks')
    common.add_argument('--constraints', type=Path, help='JSON side constraint file')
    common.add_argument('--caps', type=_caps, help='replication caps, comma separated or a JSON list file')
    common.add_argument('--d0', type=Path, help='JSON reference design replacing the heuristic')
    common.add_argument('--bounds-override', type=Path, help='JSON file {L, U} replacing the computed bounds')
    common.add_argument('--seed', type=int, default=0)
    common.add_argument('--restarts', type=int, default=10, help='heuristic restarts')
    common.add_argument('--threads', type=int, default=1)
    common.add_argument('--out', type=Path, help='output file, standard output by default')
    common.add_argument('--record', action='store_true', help='store the run in the ledger')

    solve_parser = subparsers.add_parser(Subcommand.SOLVE.value, parents=[common], help='solve the design MILP')
    solve_parser.add_argument('--time-limit', type=float)
    solve_parser.add_argument('--nodes', dest='node_limit', type=int)
    solve_parser.add_argument('--lp-backend', type=LpBackend, choices=list(LpBackend), default=LpBackend.AUTO,
                              metavar='{auto,simplex,highs}')
    solve_parser.add_argument('--labels-tsv', type=Path, help='write a (label, d_i) table')

    subparsers.add_parser(Subcommand.BOUNDS.value, parents=[common], help='compute covariance bounds')
    export_parser = subparsers.add_parser(Subcommand.EXPORT.value, parents=[common], help='write the MILP')
    export_parser.add_argument('--format', type=ModelFormat, choices=list(ModelFormat), default=ModelFormat.LP,
                               metavar='{lp,mps}')
    export_parser.add_argument('--precision', type=int, default=17)
    subparsers.add_parser(Subcommand.ENUMERATE.value, parents=[common], help='complete enumeration')
    subparsers.add_parser(Subcommand.HEURISTIC.value, parents=[common], help='exchange heuristic only')

    history_parser = subparsers.add_parser(Subcommand.HISTORY.value, help='list recorded runs')
    history_parser.add_argument('--limit', type=int, default=20)
    history_parser.add_argument('--out', type=Path)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig.model_validate({key: value for key, value in vars(args).items() if value is not None})


def _finite(value: float) -> float | None:
    return value if value == value and abs(value) != float('inf') else None


def _emit(payload, out: Path | None, stdout):
    text = json.dumps(payload, indent=2) + '\n'
    if out is None:
        stdout.write(text)
    else:
        Path(out).write_text(text, encoding='utf-8')
        logger.info('Wrote %s', out)


def _record(config: RunConfig, inputs: RunInputs, engine, status: str, value: float | None, counts,
            nodes: int | None = None, wall_time: float = 0.0):
    if not config.record:
        return
    record = RunRecordCreate.from_counts(counts, subcommand=config.subcommand.value, criterion=inputs.spec.kind.value,
                                         n=inputs.problem.n, m=inputs.problem.m,
                                         run_budget=inputs.problem.run_budget, status=status,
                                         criterion_value=None if value is None else _finite(value), nodes=nodes,
                                         seed=config.seed, wall_time=wall_time)
    with get_session(engine) as session:
        record_run(session, record)


def _solve(config: RunConfig, inputs: RunInputs, d0, engine, stdout) -> int:
    result, prepared = solve_design(inputs, config.limits, config.heuristic, d0,
                                    load_override(config.bounds_override, None))
    payload = {'design': design_payload(inputs.problem, result.design),
               'criterion_value': _finite(result.criterion_value), 'sigma': result.sigma,
               'status': result.status.value, 'gap': _finite(result.gap), 'nodes': result.nodes_explored,
               'wall_time': result.wall_time, 'alpha': prepared.alpha}
    _emit(payload, config.out, stdout)
    if config.labels_tsv is not None and result.design is not None:
        write_design_tsv(config.labels_tsv, inputs.problem, result.design)
    counts = result.design.counts if result.design is not None else ()
    _record(config, inputs, engine, result.status.value, result.criterion_value, counts, result.nodes_explored,
            result.wall_time)
    if result.status is SolveStatus.INFEASIBLE:
        logger.error('No design satisfies the side constraints')
        return EXIT_ERROR
    return EXIT_LIMIT if result.status is SolveStatus.TIME_LIMIT else EXIT_OK


def _bounds(config: RunConfig, inputs: RunInputs, d0, stdout) -> int:
    d0 = reference_design(inputs, config.heuristic, d0)
    alpha = reference_alpha(inputs.problem, inputs.spec, d0)
    bounds = load_override(config.bounds_override, alpha) or combined_bounds(inputs.problem, inputs.spec, d0)
    _emit({'alpha': alpha, 'd0': list(d0.counts), 'L': bounds.L.tolist(), 'U': bounds.U.tolist()}, config.out,
          stdout)
    return EXIT_OK


def _export(config: RunConfig, inputs: RunInputs, d0, stdout) -> int:
    d0 = reference_design(inputs, config.heuristic, d0)
    prepared = prepare_model(inputs, d0, load_override(config.bounds_override, None))
    options = ExportOptions(format=config.format, precision=config.precision)
    data = write_model(prepared.model, options, config.out)
    if config.out is None:
        stdout.write(data.decode('ascii'))
    return EXIT_OK


def _enumerate(config: RunConfig, inputs: RunInputs, engine, stdout) -> int:
    if inputs.caps is not None:
        oracle = enumerate_capped(inputs.problem, inputs.spec, inputs.caps, inputs.extras)
    else:
        oracle = enumerate_best(inputs.problem, inputs.spec, inputs.extras, threads=config.threads)
    validate_design(inputs, oracle.design, oracle.criterion_value)
    payload = {'design': design_payload(inputs.problem, oracle.design), 'criterion_value': oracle.criterion_value,
               'status': STATUS_COMPLETE, 'examined': oracle.examined, 'rejected': oracle.rejected,
               'singular': oracle.singular, 'total': oracle.total}
    _emit(payload, config.out, stdout)
    _record(config, inputs, engine, STATUS_COMPLETE, oracle.criterion_value, oracle.design.counts)
    return EXIT_OK


def _heuristic(config: RunConfig, inputs: RunInputs, d0, engine, stdout) -> int:
    d0 = reference_design(inputs, config.heuristic, d0)
    alpha = reference_alpha(inputs.problem, inputs.spec, d0)
    _emit({'design': design_payload(inputs.problem, d0), 'alpha': alpha, 'status': STATUS_HEURISTIC}, config.out,
          stdout)
    _record(config, inputs, engine, STATUS_HEURISTIC, alpha, d0.counts)
    return EXIT_OK


def _history(config: RunConfig, engine, stdout) -> int:
    with get_session(engine) as session:
        runs = [RunRecordPublic.model_validate(run).model_dump(mode='json')
                for run in read_runs(session, config.limit)]
    _emit(runs, config.out, stdout)
    return EXIT_OK


def run(config: RunConfig, engine=None, stdout=None) -> int:
    """
    Execute one validated configuration.

    Args:
        config (RunConfig): Options of the run.
        engine (Engine | None): Ledger engine, the configured one by default.
        stdout (TextIO | None): Stream receiving results without --out.

    Returns:
        int: Exit code.
    """
    stdout = stdout or sys.stdout
    if config.subcommand is Subcommand.HISTORY:
        return _history(config, engine, stdout)
    inputs = load_inputs(config)
    d0 = load_design(config.d0, inputs.problem.n) if config.d0 is not None else None
    if config.subcommand is Subcommand.SOLVE:
        return _solve(config, inputs, d0, engine, stdout)
    if config.subcommand is Subcommand.BOUNDS:
        return _bounds(config, inputs, d0, stdout)
    if config.subcommand is Subcommand.EXPORT:
        return _export(config, inputs, d0, stdout)
    if config.subcommand is Subcommand.ENUMERATE:
        return _enumerate(config, inputs, engine, stdout)
    return _heuristic(config, inputs, d0, engine, stdout)


def configure_logging():
    level = os.environ.get(LOG_LEVEL_ENV, 'INFO').upper()
    if not isinstance(logging.getLevelName(level), int):
        level = 'INFO'
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)


def main(argv: list[str] | None = None, engine=None, stdout=None) -> int:
    configure_logging()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    try:
        return run(config_from_args(args), engine, stdout)
    except (OptexError, ValidationError, OSError, json.JSONDecodeError, ValueError) as exc:
        logger.error('%s failed: %s', args.subcommand, exc)
        print(f'error: {exc}', file=sys.stderr)
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
