"""
This module chains the steps shared by the command-line subcommands:
loading a problem with its criterion and constraints, finding the reference
design d_0, computing covariance bounds, building the model and solving it.

Classes:
    Subcommand: Subcommands of the command-line interface.
    RunConfig: Validated options of one command-line run.
    BlocksFile: Custom criterion blocks file.
    DesignFile: Reference design file.
    RunInputs: Problem, criterion, side constraints and caps of a run.
    PreparedModel: Built model with the data it was built from.

Functions:
    load_inputs: Reads every input file named by a configuration.
    reference_design: d_0 from a file or from the exchange heuristic.
    prepare_model: Bounds and model for a run.
    solve_design: Prepares and solves a run and re-validates its design.
    validate_design: Final check of a reported design.
    design_payload: JSON form of a design with its labels.
    write_design_tsv: Plot-ready (label, d_i) table.
"""
import csv
import json
import logging
from enum import Enum
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from bounds.covariance_bounds import CovBounds, combined_bounds, load_bounds_override, reference_alpha
from design.problem import CriterionSpec, DesignProblem, ExactDesign, criterion_value, info_matrix, load_problem
from errors import InvalidDesign
from exporter.text_model import ModelFormat
from heuristic.exchange import HeuristicConfig, exchange_search
from linalg.dense import invert
from milp.builder import MilpModel, build
from milp.constraints import ExtraConstraint, covariance_feasible, design_feasible, load_constraints
from milp.replications import ReplicationMap, expand_replications, translate_constraints
from solver.branch_bound import SolveLimits, SolveResult, solve
from solver.simplex import LpBackend

logger = logging.getLogger(__name__)

PRESETS: tuple[str, ...] = ('A', 'I', 'MV', 'G')
VALUE_TOL: float = 1e-8

INVALID_D0_MSG: str = 'Reference design {support} violates the side constraints or the replication caps'
BUDGET_MSG: str = 'Design has {size} trials, expected N={budget}'
VALUE_MSG: str = 'Reported criterion value {reported:.12g} differs from the recomputed value {direct:.12g}'


class Subcommand(str, Enum):
    SOLVE = 'solve'
    BOUNDS = 'bounds'
    EXPORT = 'export'
    ENUMERATE = 'enumerate'
    HEURISTIC = 'heuristic'
    HISTORY = 'history'


class RunConfig(BaseModel):
    """
    Options of one command-line run.

    Attributes:
        subcommand (Subcommand): Requested workflow.
        problem (Path | None): Problem file; every subcommand except history needs one.
        run_budget (int | None): Overrides N from the problem file.
        criterion (str): Preset tag A, I, MV or G.
        blocks (Path | None): Custom criterion blocks file, replacing the preset.
        constraints (Path | None): Side constraint file.
        caps (list[int] | None): Replication caps N_i, switching to replication mode.
        d0 (Path | None): Reference design file, replacing the heuristic.
        bounds_override (Path | None): Externally computed covariance bounds.
        time_limit (float | None): Branch-and-bound time limit in seconds.
        node_limit (int | None): Branch-and-bound node limit.
        seed (int): Heuristic seed.
        restarts (int): Heuristic restarts.
        threads (int): Worker threads of the search, the heuristic and the enumeration.
        lp_backend (LpBackend): LP backend of the relaxations.
        format (ModelFormat): Export format.
        precision (int): Export precision in significant digits.
        out (Path | None): Output file; standard output when missing.
        labels_tsv (Path | None): Plot-ready (label, d_i) table of a solve.
        record (bool): Whether to store the run in the ledger.
        limit (int): Number of runs listed by history.
    """
    model_config = ConfigDict(frozen=True)

    subcommand: Subcommand
    problem: Path | None = None
    run_budget: int | None = Field(default=None, gt=0)
    criterion: str = 'A'
    blocks: Path | None = None
    constraints: Path | None = None
    caps: list[int] | None = None
    d0: Path | None = None
    bounds_override: Path | None = None
    time_limit: float | None = Field(default=None, gt=0)
    node_limit: int | None = Field(default=None, gt=0)
    seed: int = 0
    restarts: int = Field(default=10, ge=1)
    threads: int = Field(default=1, ge=1)
    lp_backend: LpBackend = LpBackend.AUTO
    format: ModelFormat = ModelFormat.LP
    precision: int = Field(default=17, ge=9, le=17)
    out: Path | None = None
    labels_tsv: Path | None = None
    record: bool = False
    limit: int = Field(default=20, gt=0)

    @model_validator(mode='after')
    def _check_config(self):
        if self.subcommand is not Subcommand.HISTORY and self.problem is None:
            raise ValueError(f'The {self.subcommand.value} subcommand needs a problem file')
        if self.blocks is None and self.criterion.upper() not in PRESETS:
            raise ValueError(f'Unknown criterion {self.criterion!r}; use one of {", ".join(PRESETS)} or --blocks')
        if self.caps is not None and any(c < 0 for c in self.caps):
            raise ValueError('Replication caps must be nonnegative')
        return self

    @property
    def heuristic(self) -> HeuristicConfig:
        return HeuristicConfig(restarts=self.restarts, rng_seed=self.seed, threads=self.threads)

    @property
    def limits(self) -> SolveLimits:
        return SolveLimits(time_limit=self.time_limit, node_limit=self.node_limit, lp_backend=self.lp_backend,
                           threads=self.threads)


class BlocksFile(BaseModel):
    """
    Custom criterion file: {"blocks": [B_1, ..., B_K]}, each an m x s_l matrix.
    """
    blocks: list[list[list[float]]] = Field(min_length=1)


class DesignFile(BaseModel):
    """
    Reference design file: {"counts": [d_1, ..., d_n]}.
    """
    counts: list[int] = Field(min_length=1)


class RunInputs(BaseModel):
    model_config = ConfigDict(frozen=True)

    problem: DesignProblem
    spec: CriterionSpec
    extras: tuple[ExtraConstraint, ...] = ()
    caps: tuple[int, ...] | None = None


class PreparedModel(BaseModel):
    """
    Built model of a run.

    Attributes:
        model (MilpModel): The design MILP.
        d0 (ExactDesign): Reference design on the original points.
        alpha (float): Criterion value of d0.
        bounds (CovBounds): Covariance bounds used by the model.
        replications (ReplicationMap | None): Map of the expanded points in replication mode.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    model: MilpModel
    d0: ExactDesign
    alpha: float
    bounds: CovBounds
    replications: ReplicationMap | None = None


def _read_json(path: Path):
    return json.loads(Path(path).read_text(encoding='utf-8'))


def load_blocks(path: str | Path) -> CriterionSpec:
    data = BlocksFile.model_validate(_read_json(Path(path)))
    return CriterionSpec.from_arrays(data.blocks)


def load_design(path: str | Path, n: int) -> ExactDesign:
    raw = _read_json(Path(path))
    data = DesignFile.model_validate({'counts': raw} if isinstance(raw, list) else raw)
    if len(data.counts) != n:
        raise ValueError(f'Reference design has {len(data.counts)} counts, the problem has {n} points')
    return ExactDesign.from_array(data.counts, binary=False)


def load_inputs(config: RunConfig) -> RunInputs:
    """
    Read the problem, criterion, constraint files and caps named by a configuration.
    """
    problem = load_problem(config.problem, config.run_budget, replications=config.caps is not None)
    spec = load_blocks(config.blocks) if config.blocks else CriterionSpec.preset(config.criterion.upper(), problem)
    extras = load_constraints(config.constraints, problem) if config.constraints else []
    caps = None
    if config.caps is not None:
        if len(config.caps) != problem.n:
            raise ValueError(f'Expected {problem.n} replication caps, got {len(config.caps)}')
        caps = tuple(config.caps)
    logger.info('Loaded problem with n=%d, m=%d, N=%d, criterion %s, %d side constraints', problem.n, problem.m,
                problem.run_budget, spec.kind.value, len(extras))
    return RunInputs(problem=problem, spec=spec, extras=tuple(extras), caps=caps)


def _check_reference(inputs: RunInputs, design: ExactDesign):
    counts = design.as_array()
    limit = np.ones(inputs.problem.n, dtype=int) if inputs.caps is None else np.asarray(inputs.caps)
    if (design.size != inputs.problem.run_budget or np.any(counts > np.minimum(limit, inputs.problem.run_budget))
            or not design_feasible(inputs.extras, counts)):
        raise InvalidDesign(INVALID_D0_MSG.format(support=design.support))
    sigma = invert(info_matrix(inputs.problem, design))
    if not covariance_feasible(inputs.extras, sigma):
        raise InvalidDesign(INVALID_D0_MSG.format(support=design.support))


def reference_design(inputs: RunInputs, heuristic: HeuristicConfig | None = None,
                     d0: ExactDesign | None = None) -> ExactDesign:
    """
    Reference design d_0 on the original points.

    A supplied design is checked against the constraints and caps; otherwise
    the exchange heuristic runs with the side constraints, on the expanded
    problem in replication mode.

    Raises:
        InvalidDesign: If a supplied design is infeasible.
        NoFeasibleStart: If the heuristic finds no feasible design.
    """
    if d0 is not None:
        _check_reference(inputs, d0)
        return d0
    if inputs.caps is None:
        return exchange_search(inputs.problem, inputs.spec, heuristic, inputs.extras)
    expanded, replications = expand_replications(inputs.problem, inputs.caps)
    design = exchange_search(expanded, inputs.spec, heuristic, translate_constraints(inputs.extras, replications))
    return replications.fold_design(design)


def prepare_model(inputs: RunInputs, d0: ExactDesign, bounds_override: CovBounds | None = None) -> PreparedModel:
    """
    Covariance bounds from d0 (or the override) and the model built on them.
    """
    alpha = reference_alpha(inputs.problem, inputs.spec, d0)
    if bounds_override is not None:
        logger.warning('Covariance bounds replaced by an override file')
        bounds = bounds_override
    else:
        bounds = combined_bounds(inputs.problem, inputs.spec, d0)
    problem, extras, replications = inputs.problem, list(inputs.extras), None
    if inputs.caps is not None:
        problem, replications = expand_replications(inputs.problem, inputs.caps)
        extras = translate_constraints(extras, replications)
    model = build(problem, inputs.spec, bounds, extras, replications)
    logger.info('Built model with %d variables and %d rows', model.num_vars, model.num_rows)
    return PreparedModel(model=model, d0=d0, alpha=alpha, bounds=bounds, replications=replications)


def validate_design(inputs: RunInputs, design: ExactDesign, reported: float) -> float:
    """
    Re-validate a reported design on the original points.

    Returns:
        float: The recomputed criterion value.

    Raises:
        InvalidDesign: If the design misses N, breaks a cap or constraint, or
            its criterion value differs from the reported one beyond 1e-8.
    """
    problem = inputs.problem
    if design.size != problem.run_budget:
        raise InvalidDesign(BUDGET_MSG.format(size=design.size, budget=problem.run_budget))
    _check_reference(inputs, design)
    direct = criterion_value(inputs.spec, info_matrix(problem, design))
    if abs(direct - reported) > VALUE_TOL * (1.0 + abs(direct)):
        raise InvalidDesign(VALUE_MSG.format(reported=reported, direct=direct))
    return direct


def solve_design(inputs: RunInputs, limits: SolveLimits | None = None, heuristic: HeuristicConfig | None = None,
                 d0: ExactDesign | None = None,
                 bounds_override: CovBounds | None = None) -> tuple[SolveResult, PreparedModel]:
    """
    Find d_0, build the model, solve it and re-validate the reported design.
    """
    d0 = reference_design(inputs, heuristic, d0)
    prepared = prepare_model(inputs, d0, bounds_override)
    result = solve(prepared.model, d0, limits)
    if result.design is not None:
        validate_design(inputs, result.design, result.criterion_value)
    return result, prepared


def load_override(path: str | Path | None, alpha: float | None = None) -> CovBounds | None:
    return None if path is None else load_bounds_override(path, alpha)


def design_payload(problem: DesignProblem, design: ExactDesign | None) -> dict | None:
    if design is None:
        return None
    return {'counts': list(design.counts),
            'support': [{'point': i + 1, 'label': problem.label(i), 'count': design.counts[i]}
                        for i in design.support]}


def write_design_tsv(path: str | Path, problem: DesignProblem, design: ExactDesign):
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, delimiter='\t', lineterminator='\n')
        writer.writerow(['label', 'd'])
        for i, count in enumerate(design.counts):
            writer.writerow([problem.label(i), count])
