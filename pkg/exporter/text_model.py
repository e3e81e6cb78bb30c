"""
This module holds what the LP and MPS codecs share: export options, number
and name formatting, and the accumulator that turns parsed rows back into a
MilpModel.

Classes:
    ModelFormat: Supported file formats.
    ExportOptions: Options of write_model.
    ModelAccumulator: Collects columns, bounds and rows while a file is parsed.

Functions:
    format_number: Shortest text of a float with the requested significant digits.
    check_names: Validates variable and row names before writing.
    row_entries: Rows of a model as (relation, name, columns, values, rhs).
"""
import math
import re
from collections.abc import Iterator
from enum import Enum

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field

from errors import MissingObjective, ModelSyntaxError, NameCollision
from milp.builder import MilpModel, RowBlock, VariableLayout
from milp.constraints import Sense

MAX_NAME_LENGTH: int = 255
OBJECTIVE_NAME: str = 'obj'

DUPLICATE_NAME_MSG: str = 'Name {name!r} is used more than once among the {kind}'
INVALID_NAME_MSG: str = 'Name {name!r} cannot be written: names need 1 to 255 printable characters without spaces'
MISSING_OBJECTIVE_MSG: str = 'Model {name!r} has no objective coefficients'

_NAME_PATTERN = re.compile(r'[A-Za-z_][^\s:\\*]*')
_NUMBER_PATTERN = re.compile(r'[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?')
_INFINITY = {'inf': math.inf, '+inf': math.inf, '-inf': -math.inf, 'infinity': math.inf,
             '+infinity': math.inf, '-infinity': -math.inf}
_D_NAME = re.compile(r'd_\d+')
_C_NAME = re.compile(r'c_\d+_\d+')


class ModelFormat(str, Enum):
    LP = 'lp'
    MPS = 'mps'


class ExportOptions(BaseModel):
    """
    Options of write_model.

    Variable and row names are taken from the model (z_i_j_k, d_i, c_j_k and
    phi for design models).

    Attributes:
        format (ModelFormat): LP or MPS.
        precision (int): Significant digits of written numbers.
        terms_per_line (int): LP terms written before a line is continued.
    """
    model_config = ConfigDict(frozen=True)

    format: ModelFormat = ModelFormat.LP
    precision: int = Field(default=17, ge=9, le=17)
    terms_per_line: int = Field(default=8, gt=0)


def format_number(value: float, precision: int = 17) -> str:
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return f'{float(value) + 0.0:.{precision}g}'


def parse_number(token: str, lineno: int | None = None, allow_infinite: bool = False) -> float:
    lowered = token.lower()
    if allow_infinite and lowered in _INFINITY:
        return _INFINITY[lowered]
    if not _NUMBER_PATTERN.fullmatch(token):
        raise ModelSyntaxError(f'expected a number, found {token!r}', lineno)
    return float(token)


def is_number(token: str) -> bool:
    return bool(_NUMBER_PATTERN.fullmatch(token)) or token.lower() in _INFINITY


def check_names(model: MilpModel):
    """
    Raises:
        NameCollision: If a name repeats within the variables or within the
            rows, is used as the objective name, or cannot be written.
        MissingObjective: If every objective coefficient is zero.
    """
    for kind, names in (('variables', model.var_names), ('rows', model.eq.names + model.ge.names + model.le.names)):
        seen: set[str] = set()
        for name in names:
            if len(name) > MAX_NAME_LENGTH or not _NAME_PATTERN.fullmatch(name) or name.lower() in _INFINITY:
                raise NameCollision(INVALID_NAME_MSG.format(name=name))
            if name in seen or (kind == 'rows' and name == OBJECTIVE_NAME):
                raise NameCollision(DUPLICATE_NAME_MSG.format(name=name, kind=kind))
            seen.add(name)
    if not np.any(model.objective):
        raise MissingObjective(MISSING_OBJECTIVE_MSG.format(name=model.name))


def row_entries(model: MilpModel) -> Iterator[tuple[Sense, str, np.ndarray, np.ndarray, float]]:
    for sense, block in ((Sense.EQ, model.eq), (Sense.GE, model.ge), (Sense.LE, model.le)):
        matrix = block.matrix.tocsr()
        matrix.sort_indices()
        for r, name in enumerate(block.names):
            lo, hi = matrix.indptr[r], matrix.indptr[r + 1]
            yield sense, name, matrix.indices[lo:hi], matrix.data[lo:hi], float(block.rhs[r])


def recover_layout(names: list[str]) -> VariableLayout | None:
    """
    Layout of a design model whose variables carry the design naming scheme.
    """
    n = sum(1 for name in names if _D_NAME.fullmatch(name))
    m = math.isqrt(sum(1 for name in names if _C_NAME.fullmatch(name)))
    if n == 0 or m == 0:
        return None
    layout = VariableLayout(n=n, m=m)
    if len(names) != layout.num_vars or set(names) != set(layout.names()):
        return None
    return layout


class ModelAccumulator:
    """
    Columns are created on first reference with the default bounds [0, +inf).
    """

    def __init__(self, name: str = 'optex'):
        self.name = name
        self.columns: dict[str, int] = {}
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.integer: list[bool] = []
        self.objective: dict[int, float] = {}
        self.rows: list[tuple[Sense, str, dict[int, float], float]] = []
        self.row_names: set[str] = set()

    def column(self, name: str) -> int:
        idx = self.columns.get(name)
        if idx is None:
            idx = self.columns[name] = len(self.columns)
            self.lower.append(0.0)
            self.upper.append(math.inf)
            self.integer.append(False)
        return idx

    def add_row(self, sense: Sense, name: str, terms: dict[int, float], rhs: float, lineno: int | None = None):
        if name in self.row_names:
            raise ModelSyntaxError(f'duplicate row name {name!r}', lineno)
        self.row_names.add(name)
        self.rows.append((sense, name, terms, rhs))

    def _block(self, sense: Sense, order: np.ndarray) -> RowBlock:
        num_vars = len(self.columns)
        selected = [row for row in self.rows if row[0] is sense]
        if not selected:
            return RowBlock.empty(num_vars)
        rows, cols, vals = [], [], []
        for r, (_, _, terms, _) in enumerate(selected):
            rows.extend([r] * len(terms))
            cols.extend(order[list(terms)] if terms else [])
            vals.extend(terms.values())
        matrix = sp.csr_matrix(sp.coo_matrix((np.asarray(vals, dtype=float), (np.asarray(rows, dtype=int),
                                                                               np.asarray(cols, dtype=int))),
                                             shape=(len(selected), num_vars)))
        matrix.sum_duplicates()
        matrix.eliminate_zeros()
        matrix.sort_indices()
        return RowBlock(matrix=matrix, rhs=np.asarray([row[3] for row in selected], dtype=float),
                        names=tuple(row[1] for row in selected))

    def finish(self) -> MilpModel:
        """
        Assembled model; variables are put in layout order when their names
        follow the design naming scheme, and in order of appearance otherwise.
        """
        names = list(self.columns)
        layout = recover_layout(names)
        if layout is not None:
            target = {name: pos for pos, name in enumerate(layout.names())}
            order = np.asarray([target[name] for name in names], dtype=int)
        else:
            order = np.arange(len(names))
        num_vars = len(names)

        def arranged(values, dtype):
            out = np.empty(num_vars, dtype=dtype)
            out[order] = values
            return out

        objective = np.zeros(num_vars)
        for idx, value in self.objective.items():
            objective[order[idx]] += value
        return MilpModel(name=self.name, objective=objective, eq=self._block(Sense.EQ, order),
                         ge=self._block(Sense.GE, order), le=self._block(Sense.LE, order),
                         var_lower=arranged(self.lower, float), var_upper=arranged(self.upper, float),
                         integrality=arranged(self.integer, bool),
                         var_names=tuple(arranged(np.asarray(names, dtype=object), object)), layout=layout)
