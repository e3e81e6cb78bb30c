"""
This module writes and reads MPS files.

The writer aligns its fields in columns; the reader splits on whitespace and
so accepts both fixed and free MPS as long as names contain no spaces.
Integer columns are enclosed in MARKER INTORG/INTEND lines and always get
explicit bounds.
"""
import logging
import math

import numpy as np

from errors import ModelSyntaxError
from exporter.text_model import (OBJECTIVE_NAME, ExportOptions, ModelAccumulator, format_number, parse_number,
                                 row_entries)
from milp.builder import MilpModel
from milp.constraints import Sense

logger = logging.getLogger(__name__)

_ROW_TYPES = {Sense.EQ: 'E', Sense.GE: 'G', Sense.LE: 'L'}
_SENSES = {code: sense for sense, code in _ROW_TYPES.items()}
_SECTIONS = ('NAME', 'OBJSENSE', 'ROWS', 'COLUMNS', 'RHS', 'RANGES', 'BOUNDS', 'ENDATA')
_VALUELESS_BOUNDS = ('FR', 'MI', 'PL', 'BV')
_RANGE_SUFFIX = '_range'


def _bound_entries(lower: float, upper: float, integer: bool) -> list[tuple[str, float | None]]:
    if integer:
        if lower == 0.0 and upper == 1.0:
            return [('BV', None)]
        if lower == upper:
            return [('FX', lower)]
        return [('LI', lower) if math.isfinite(lower) else ('MI', None),
                ('UI', upper) if math.isfinite(upper) else ('PL', None)]
    if lower == upper:
        return [('FX', lower)]
    if math.isinf(lower) and math.isinf(upper):
        return [('FR', None)]
    entries = []
    if math.isinf(lower):
        entries.append(('MI', None))
    elif lower != 0.0:
        entries.append(('LO', lower))
    if math.isfinite(upper):
        entries.append(('UP', upper))
    return entries


def write_mps(model: MilpModel, options: ExportOptions) -> str:
    precision = options.precision
    names = model.var_names
    rows = list(row_entries(model))
    width = max(len(name) for name in (*names, *(row[1] for row in rows), OBJECTIVE_NAME))

    lines = [f'NAME          {model.name}', 'ROWS', f' N  {OBJECTIVE_NAME}']
    lines += [f' {_ROW_TYPES[sense]}  {name}' for sense, name, *_ in rows]

    by_column: list[list[tuple[str, float]]] = [[] for _ in names]
    for idx in np.flatnonzero(model.objective):
        by_column[idx].append((OBJECTIVE_NAME, float(model.objective[idx])))
    for _, name, cols, vals, _ in rows:
        for col, val in zip(cols, vals):
            by_column[col].append((name, float(val)))

    lines.append('COLUMNS')
    marker = 0
    in_integer = False
    for idx, name in enumerate(names):
        if bool(model.integrality[idx]) != in_integer:
            in_integer = not in_integer
            lines.append(f"    MARKER{marker}  'MARKER'  '{'INTORG' if in_integer else 'INTEND'}'")
            marker += 1
        for row, val in by_column[idx] or [(OBJECTIVE_NAME, 0.0)]:
            lines.append(f'    {name:<{width}}  {row:<{width}}  {format_number(val, precision)}')
    if in_integer:
        lines.append(f"    MARKER{marker}  'MARKER'  'INTEND'")

    lines.append('RHS')
    lines += [f'    RHS  {name:<{width}}  {format_number(rhs, precision)}'
              for _, name, _, _, rhs in rows if rhs != 0.0]

    lines.append('BOUNDS')
    for idx, name in enumerate(names):
        for kind, value in _bound_entries(float(model.var_lower[idx]), float(model.var_upper[idx]),
                                          bool(model.integrality[idx])):
            text = f' {kind} BND  {name:<{width}}'
            lines.append(text.rstrip() if value is None else f'{text}  {format_number(value, precision)}')
    lines.append('ENDATA')
    return '\n'.join(lines) + '\n'


class _MpsReader:

    def __init__(self):
        self.model = ModelAccumulator()
        self.section: str | None = None
        self.objective: str | None = None
        self.free_rows: set[str] = set()
        self.senses: dict[str, Sense] = {}
        self.row_terms: dict[str, dict[int, float]] = {}
        self.rhs: dict[str, float] = {}
        self.ranges: dict[str, float] = {}
        self.integer = False

    def header(self, tokens: list[str], lineno: int):
        keyword = tokens[0].upper()
        if keyword not in _SECTIONS:
            raise ModelSyntaxError(f'unknown section keyword {tokens[0]!r}', lineno)
        self.section = keyword
        if keyword == 'NAME' and len(tokens) > 1:
            self.model.name = tokens[1]
        if keyword == 'OBJSENSE' and len(tokens) > 1:
            self.objsense(tokens[1], lineno)

    def objsense(self, token: str, lineno: int):
        if token.upper() not in ('MIN', 'MINIMIZE'):
            raise ModelSyntaxError('only minimization models are supported', lineno)

    def row(self, tokens: list[str], lineno: int):
        if len(tokens) != 2:
            raise ModelSyntaxError('ROWS entries need a type and a name', lineno)
        kind, name = tokens[0].upper(), tokens[1]
        if name in self.senses or name == self.objective or name in self.free_rows:
            raise ModelSyntaxError(f'duplicate row name {name!r}', lineno)
        if kind == 'N':
            if self.objective is None:
                self.objective = name
            else:
                self.free_rows.add(name)
        elif kind in _SENSES:
            self.senses[name] = _SENSES[kind]
            self.row_terms[name] = {}
        else:
            raise ModelSyntaxError(f'unknown row type {tokens[0]!r}', lineno)

    def column(self, tokens: list[str], lineno: int):
        if len(tokens) >= 3 and tokens[1].strip("'").upper() == 'MARKER':
            flag = tokens[2].strip("'").upper()
            if flag not in ('INTORG', 'INTEND'):
                raise ModelSyntaxError(f'unknown marker {tokens[2]!r}', lineno)
            self.integer = flag == 'INTORG'
            return
        if len(tokens) not in (3, 5):
            raise ModelSyntaxError('COLUMNS entries need a column and one or two row/value pairs', lineno)
        idx = self.model.column(tokens[0])
        self.model.integer[idx] = self.model.integer[idx] or self.integer
        for row, value in zip(tokens[1::2], tokens[2::2]):
            coef = parse_number(value, lineno)
            if row == self.objective:
                self.model.objective[idx] = self.model.objective.get(idx, 0.0) + coef
            elif row in self.row_terms:
                terms = self.row_terms[row]
                terms[idx] = terms.get(idx, 0.0) + coef
            elif row not in self.free_rows:
                raise ModelSyntaxError(f'unknown row {row!r}', lineno)

    def values(self, tokens: list[str], lineno: int, target: dict[str, float]):
        if len(tokens) % 2 == 1:
            tokens = tokens[1:]
        if not tokens:
            raise ModelSyntaxError('entry without row/value pairs', lineno)
        for row, value in zip(tokens[0::2], tokens[1::2]):
            if row == self.objective:
                raise ModelSyntaxError('objective constants are not supported', lineno)
            if row not in self.senses:
                raise ModelSyntaxError(f'unknown row {row!r}', lineno)
            target[row] = parse_number(value, lineno)

    def bound(self, tokens: list[str], lineno: int):
        kind = tokens[0].upper()
        if kind in _VALUELESS_BOUNDS:
            name = tokens[2] if len(tokens) >= 3 and tokens[2] in self.model.columns else tokens[-1]
            if kind == 'BV' and len(tokens) == 3 and tokens[1] in self.model.columns:
                name = tokens[1]
            value = None
        elif len(tokens) in (3, 4):
            name, value = tokens[-2], parse_number(tokens[-1], lineno, allow_infinite=True)
        else:
            raise ModelSyntaxError(f'cannot read bound {" ".join(tokens)!r}', lineno)
        if name not in self.model.columns:
            raise ModelSyntaxError(f'bound on unknown column {name!r}', lineno)
        idx = self.model.columns[name]
        model = self.model
        if kind == 'UP':
            if value < 0.0 and model.lower[idx] == 0.0:
                logger.warning('Negative upper bound on %s sets its lower bound to -inf', name)
                model.lower[idx] = -math.inf
            model.upper[idx] = value
        elif kind == 'LO':
            model.lower[idx] = value
        elif kind == 'FX':
            model.lower[idx] = model.upper[idx] = value
        elif kind == 'FR':
            model.lower[idx], model.upper[idx] = -math.inf, math.inf
        elif kind == 'MI':
            model.lower[idx] = -math.inf
        elif kind == 'PL':
            model.upper[idx] = math.inf
        elif kind == 'BV':
            model.lower[idx], model.upper[idx] = 0.0, 1.0
            model.integer[idx] = True
        elif kind == 'LI':
            model.lower[idx] = value
            model.integer[idx] = True
        elif kind == 'UI':
            model.upper[idx] = value
            model.integer[idx] = True
        else:
            raise ModelSyntaxError(f'unsupported bound type {tokens[0]!r}', lineno)

    def add_rows(self):
        for name, sense in self.senses.items():
            terms, rhs = self.row_terms[name], self.rhs.get(name, 0.0)
            span = self.ranges.get(name)
            if span is None:
                self.model.add_row(sense, name, terms, rhs)
                continue
            if sense is Sense.EQ:
                low, high = (rhs, rhs + span) if span >= 0 else (rhs + span, rhs)
            elif sense is Sense.GE:
                low, high = rhs, rhs + abs(span)
            else:
                low, high = rhs - abs(span), rhs
            self.model.add_row(Sense.GE, name, terms, low)
            self.model.add_row(Sense.LE, name + _RANGE_SUFFIX, dict(terms), high)

    def read(self, text: str) -> MilpModel:
        lines = text.splitlines()
        for lineno, line in enumerate(lines, start=1):
            if not line.strip() or line.startswith('*'):
                continue
            tokens = line.split()
            if not line[0].isspace():
                self.header(tokens, lineno)
                if self.section == 'ENDATA':
                    break
                continue
            if self.section in (None, 'NAME'):
                raise ModelSyntaxError('expected a section keyword', lineno)
            if self.section == 'OBJSENSE':
                self.objsense(tokens[0], lineno)
            elif self.section == 'ROWS':
                self.row(tokens, lineno)
            elif self.section == 'COLUMNS':
                self.column(tokens, lineno)
            elif self.section == 'RHS':
                self.values(tokens, lineno, self.rhs)
            elif self.section == 'RANGES':
                self.values(tokens, lineno, self.ranges)
            else:
                self.bound(tokens, lineno)
        if self.section != 'ENDATA':
            raise ModelSyntaxError('file ends before ENDATA', len(lines) + 1)
        if self.objective is None:
            raise ModelSyntaxError('file declares no objective row', len(lines))
        self.add_rows()
        return self.model.finish()


def parse_mps(text: str) -> MilpModel:
    """
    Reads a model written by write_mps or any MPS file with the same sections.

    Ranged rows come back as a >= row and a <= row named with a '_range' suffix.

    Raises:
        ModelSyntaxError: If the text is malformed, carrying the line number.
    """
    return _MpsReader().read(text)
