"""
This module writes and reads the CPLEX-style LP text format.

Section keywords start in the first column; every other line is indented.
Within a row all variables stand left of the relation, and long rows are
continued on indented lines.
"""
import math

import numpy as np

from errors import ModelSyntaxError
from exporter.text_model import (OBJECTIVE_NAME, ExportOptions, ModelAccumulator, format_number, is_number,
                                 parse_number, row_entries)
from milp.builder import MilpModel
from milp.constraints import Sense

_RELATIONS = {'<=': Sense.LE, '=<': Sense.LE, '<': Sense.LE, '>=': Sense.GE, '=>': Sense.GE, '>': Sense.GE,
              '=': Sense.EQ}
_SECTIONS = {'minimize': 'objective', 'minimise': 'objective', 'minimum': 'objective', 'min': 'objective',
             'subject to': 'rows', 'such that': 'rows', 'st': 'rows', 's.t.': 'rows',
             'bounds': 'bounds', 'bound': 'bounds',
             'binaries': 'binaries', 'binary': 'binaries', 'bin': 'binaries',
             'generals': 'generals', 'general': 'generals', 'gen': 'generals', 'integers': 'generals',
             'end': 'end'}
_MAXIMIZE = {'maximize', 'maximise', 'maximum', 'max'}


def _term(coef: float, name: str, first: bool, precision: int) -> str:
    body = name if abs(coef) == 1.0 else f'{format_number(abs(coef), precision)} {name}'
    if first:
        return body if coef > 0 else f'- {body}'
    return f'{"-" if coef < 0 else "+"} {body}'


def _expression(cols, vals, names, options: ExportOptions) -> str:
    if len(cols) == 0:
        return f'0 {names[0]}'
    terms = [_term(float(v), names[c], pos == 0, options.precision) for pos, (c, v) in enumerate(zip(cols, vals))]
    step = options.terms_per_line
    return '\n   '.join(' '.join(terms[k:k + step]) for k in range(0, len(terms), step))


def _bound_line(name: str, lower: float, upper: float, precision: int) -> str | None:
    if lower == upper:
        return f' {name} = {format_number(lower, precision)}'
    if math.isinf(lower) and math.isinf(upper):
        return f' {name} free'
    if math.isinf(upper):
        return None if lower == 0.0 else f' {name} >= {format_number(lower, precision)}'
    return f' {format_number(lower, precision)} <= {name} <= {format_number(upper, precision)}'


def write_lp(model: MilpModel, options: ExportOptions) -> str:
    names = model.var_names
    objective = np.flatnonzero(model.objective)
    lines = ['Minimize', f' {OBJECTIVE_NAME}: {_expression(objective, model.objective[objective], names, options)}',
             'Subject To']
    referenced = model.objective != 0.0
    for sense, name, cols, vals, rhs in row_entries(model):
        referenced[cols] = True
        lines.append(f' {name}: {_expression(cols, vals, names, options)} {sense.value} '
                     f'{format_number(rhs, options.precision)}')

    binary = model.integrality & (model.var_lower == 0.0) & (model.var_upper == 1.0)
    bounds = []
    for idx, name in enumerate(names):
        if binary[idx]:
            continue
        line = _bound_line(name, float(model.var_lower[idx]), float(model.var_upper[idx]), options.precision)
        if line is None and not referenced[idx]:
            # every column appears at least once
            line = f' {name} >= 0'
        if line is not None:
            bounds.append(line)
    if bounds:
        lines += ['Bounds', *bounds]
    if binary.any():
        lines += ['Binaries', *(f' {names[idx]}' for idx in np.flatnonzero(binary))]
    generals = model.integrality & ~binary
    if generals.any():
        lines += ['Generals', *(f' {names[idx]}' for idx in np.flatnonzero(generals))]
    lines.append('End')
    return '\n'.join(lines) + '\n'


class _LpReader:

    def __init__(self):
        self.model = ModelAccumulator()
        self.section: str | None = None
        self.pending: list[str] = []
        self.pending_name: str | None = None
        self.pending_line = 0
        self.objective_seen = False

    def expression(self, tokens: list[str], lineno: int) -> dict[int, float]:
        terms: dict[int, float] = {}
        sign, coef = 1.0, None
        for token in tokens:
            if token in ('+', '-'):
                if coef is not None:
                    raise ModelSyntaxError(f'sign after coefficient {coef:g}', lineno)
                sign = -sign if token == '-' else sign
            elif is_number(token):
                if coef is not None:
                    raise ModelSyntaxError(f'two coefficients in a row near {token!r}', lineno)
                coef = parse_number(token, lineno)
            else:
                idx = self.model.column(token)
                terms[idx] = terms.get(idx, 0.0) + sign * (1.0 if coef is None else coef)
                sign, coef = 1.0, None
        if coef is not None or sign != 1.0:
            raise ModelSyntaxError('expression ends without a variable', lineno)
        return terms

    def objective_line(self, text: str, lineno: int):
        if not self.pending:
            head, sep, tail = text.partition(':')
            text = tail if sep else head
            self.pending_line = lineno
        self.pending.extend(text.split())

    def row_line(self, text: str, lineno: int):
        if not self.pending and self.pending_name is None:
            head, sep, tail = text.partition(':')
            self.pending_name = head.strip() if sep else f'R{len(self.model.rows) + 1}'
            text = tail if sep else head
            self.pending_line = lineno
        tokens = text.split()
        relation = next((pos for pos, token in enumerate(tokens) if token in _RELATIONS), None)
        if relation is None:
            self.pending.extend(tokens)
            return
        if len(tokens) != relation + 2:
            raise ModelSyntaxError('a relation must be followed by exactly one right-hand side', lineno)
        terms = self.expression(self.pending + tokens[:relation], lineno)
        rhs = parse_number(tokens[-1], lineno)
        self.model.add_row(_RELATIONS[tokens[relation]], self.pending_name, terms, rhs, self.pending_line)
        self.pending, self.pending_name = [], None

    def bound_line(self, text: str, lineno: int):
        tokens = text.split()
        lower = upper = None
        if len(tokens) == 2 and tokens[1].lower() == 'free':
            name, lower, upper = tokens[0], -math.inf, math.inf
        elif len(tokens) == 3 and tokens[1] in _RELATIONS:
            flipped = is_number(tokens[0])
            name = tokens[2] if flipped else tokens[0]
            value = parse_number(tokens[0] if flipped else tokens[2], lineno, allow_infinite=True)
            sense = _RELATIONS[tokens[1]]
            if flipped and sense is not Sense.EQ:
                sense = Sense.LE if sense is Sense.GE else Sense.GE
            if sense is Sense.EQ:
                lower = upper = value
            elif sense is Sense.GE:
                lower = value
            else:
                upper = value
        elif len(tokens) == 5 and _RELATIONS.get(tokens[1]) is Sense.LE and _RELATIONS.get(tokens[3]) is Sense.LE:
            name = tokens[2]
            lower = parse_number(tokens[0], lineno, allow_infinite=True)
            upper = parse_number(tokens[4], lineno, allow_infinite=True)
        else:
            raise ModelSyntaxError(f'cannot read bound {text.strip()!r}', lineno)
        if is_number(name):
            raise ModelSyntaxError(f'bound without a variable: {text.strip()!r}', lineno)
        idx = self.model.column(name)
        if lower is not None:
            self.model.lower[idx] = lower
        if upper is not None:
            self.model.upper[idx] = upper

    def integer_line(self, text: str, binary: bool):
        for name in text.split():
            idx = self.model.column(name)
            self.model.integer[idx] = True
            if binary:
                self.model.lower[idx], self.model.upper[idx] = 0.0, 1.0

    def close_section(self, lineno: int):
        if self.section == 'objective' and self.pending:
            self.model.objective = self.expression(self.pending, self.pending_line)
            self.pending = []
        if self.pending or self.pending_name is not None:
            raise ModelSyntaxError(f'row {self.pending_name!r} has no relation', lineno)

    def keyword(self, text: str, lineno: int):
        token = ' '.join(text.lower().split())
        if token in _MAXIMIZE:
            raise ModelSyntaxError('only minimization models are supported', lineno)
        if token not in _SECTIONS:
            raise ModelSyntaxError(f'unknown section keyword {text.strip()!r}', lineno)
        self.close_section(lineno)
        self.section = _SECTIONS[token]
        if self.section == 'objective':
            self.objective_seen = True

    def read(self, text: str) -> MilpModel:
        lines = text.splitlines()
        for lineno, line in enumerate(lines, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith('\\'):
                continue
            if not line[0].isspace():
                self.keyword(line, lineno)
                if self.section == 'end':
                    break
                continue
            if self.section is None:
                raise ModelSyntaxError('expected a section keyword', lineno)
            if self.section == 'objective':
                self.objective_line(stripped, lineno)
            elif self.section == 'rows':
                self.row_line(stripped, lineno)
            elif self.section == 'bounds':
                self.bound_line(stripped, lineno)
            else:
                self.integer_line(stripped, self.section == 'binaries')
        if self.section != 'end':
            raise ModelSyntaxError('file ends before the End keyword', len(lines) + 1)
        if not self.objective_seen:
            raise ModelSyntaxError('file has no Minimize section', len(lines))
        return self.model.finish()


def parse_lp(text: str) -> MilpModel:
    """
    Reads a model written by write_lp or in the same LP dialect.

    Raises:
        ModelSyntaxError: If the text is malformed, carrying the line number.
    """
    return _LpReader().read(text)
