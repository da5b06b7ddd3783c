"""Free-format MPS reader and writer.

Supported sections: NAME, OBJSENSE, ROWS, COLUMNS (with integer markers,
relaxed to continuous), RHS, RANGES, BOUNDS, ENDATA. Names are
case-sensitive. Values with magnitude >= 1e30 are treated as infinite.
"""

from __future__ import annotations

import logging
import math

import numpy as np
import scipy.sparse as sp

from .exceptions import ParseError, UnsupportedFeatureError
from .lp import INFINITY_THRESHOLD, LpInstance, RowSense

log = logging.getLogger(__name__)

_SECTIONS = {"NAME", "OBJSENSE", "ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "ENDATA"}
_REJECTED_SECTIONS = {"SOS", "QUADOBJ", "QMATRIX", "QSECTION", "CSECTION", "INDICATORS"}
_BOUND_TYPES = {"LO", "UP", "FX", "FR", "MI", "PL", "BV", "LI", "UI"}


def _parse_value(tok, line_no):
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(line_no, f"expected a number, got {tok!r}") from None
    if v >= INFINITY_THRESHOLD:
        return math.inf
    if v <= -INFINITY_THRESHOLD:
        return -math.inf
    return v


class _Builder:
    """Accumulates parsed sections before assembling an LpInstance."""

    def __init__(self):
        self.name = ""
        self.objective_row = None
        self.row_names = []
        self.row_sense = []
        self.row_index = {}
        self.col_names = []
        self.col_index = {}
        self.col_is_integer = []
        self.entries = {}  # (row, col) -> coefficient, duplicates summed
        self.objective = {}
        self.rhs = {}
        self.ranges = {}
        self.lower = {}
        self.upper = {}
        self.maximize = False
        self.saw_integer = False

    def add_row(self, sense_ch, name, line_no):
        if sense_ch == "N":
            if self.objective_row is None:
                self.objective_row = name
            else:
                log.warning("ignoring extra free row %r", name)
            return
        if name in self.row_index:
            raise ParseError(line_no, f"duplicate row name {name!r}")
        self.row_index[name] = len(self.row_names)
        self.row_names.append(name)
        try:
            self.row_sense.append(RowSense.from_mps_char(sense_ch))
        except ValueError:
            raise ParseError(line_no, f"unknown row type {sense_ch!r}") from None

    def touch_col(self, name, integer):
        if name not in self.col_index:
            self.col_index[name] = len(self.col_names)
            self.col_names.append(name)
            self.col_is_integer.append(integer)

    def add_entry(self, col, row, value, line_no):
        if row == self.objective_row:
            self.objective[col] = self.objective.get(col, 0.0) + value
            return
        i = self.row_index.get(row)
        if i is None:
            raise ParseError(line_no, f"unknown row {row!r} in COLUMNS")
        j = self.col_index[col]
        key = (i, j)
        self.entries[key] = self.entries.get(key, 0.0) + value

    def build(self):
        m, n = len(self.row_names), len(self.col_names)
        obj = np.zeros(n)
        for col, v in self.objective.items():
            obj[self.col_index[col]] = v
        if self.maximize:
            obj = -obj
        rhs = np.zeros(m)
        for name, v in self.rhs.items():
            rhs[self.row_index[name]] = v
        rng = np.zeros(m)
        for name, v in self.ranges.items():
            rng[self.row_index[name]] = v
        lower = np.zeros(n)
        upper = np.full(n, math.inf)
        for j, v in self.lower.items():
            lower[j] = v
        for j, v in self.upper.items():
            upper[j] = v
        if self.entries:
            keys = np.array(sorted(self.entries), dtype=np.int64)
            vals = np.array([self.entries[tuple(k)] for k in keys])
            matrix = sp.csc_matrix((vals, (keys[:, 0], keys[:, 1])), shape=(m, n))
        else:
            matrix = sp.csc_matrix((m, n))
        if self.saw_integer:
            log.warning("integer markers relaxed to continuous variables")
        return LpInstance(
            name=self.name,
            objective=obj,
            matrix=matrix,
            rhs=rhs,
            row_sense=np.array([int(s) for s in self.row_sense], dtype=np.int8),
            col_lower=lower,
            col_upper=upper,
            col_names=tuple(self.col_names),
            row_names=tuple(self.row_names),
            row_range=rng,
        )


def read_mps(path):
    """Parse a free-format MPS file into an :class:`LpInstance`.

    Integer markers (and BV/LI/UI bounds) are accepted but relaxed to
    continuous variables with their declared bounds; a warning is logged.
    """
    builder = _Builder()
    section = None
    in_integer = False
    pending_objsense = False

    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if raw.startswith("*") or not raw.strip():
                continue
            is_header = not raw[0].isspace()
            fields = raw.split()
            if is_header:
                keyword = fields[0].upper()
                if keyword in _REJECTED_SECTIONS:
                    raise UnsupportedFeatureError(f"MPS section {keyword} is not supported")
                if keyword not in _SECTIONS:
                    raise ParseError(line_no, f"unknown section {fields[0]!r}")
                section = keyword
                pending_objsense = False
                if keyword == "NAME":
                    builder.name = fields[1] if len(fields) > 1 else ""
                elif keyword == "OBJSENSE":
                    if len(fields) > 1:
                        builder.maximize = fields[1].upper().startswith("MAX")
                    else:
                        pending_objsense = True
                elif keyword == "ENDATA":
                    break
                continue

            if section == "OBJSENSE" and pending_objsense:
                builder.maximize = fields[0].upper().startswith("MAX")
                pending_objsense = False
            elif section == "ROWS":
                if len(fields) < 2:
                    raise ParseError(line_no, "ROWS entry needs a type and a name")
                builder.add_row(fields[0].upper(), fields[1], line_no)
            elif section == "COLUMNS":
                if len(fields) >= 3 and fields[1] == "'MARKER'":
                    marker = fields[2].strip("'")
                    if marker == "INTORG":
                        in_integer = True
                        builder.saw_integer = True
                    elif marker == "INTEND":
                        in_integer = False
                    else:
                        raise ParseError(line_no, f"unknown marker {fields[2]!r}")
                    continue
                if len(fields) < 3 or len(fields) % 2 == 0:
                    raise ParseError(line_no, "COLUMNS entry needs name plus (row, value) pairs")
                builder.touch_col(fields[0], in_integer)
                for p in range(1, len(fields), 2):
                    builder.add_entry(
                        fields[0], fields[p], _parse_value(fields[p + 1], line_no), line_no
                    )
            elif section in ("RHS", "RANGES"):
                target = builder.rhs if section == "RHS" else builder.ranges
                # The leading vector name is optional; detect it by parity.
                start = 1 if len(fields) % 2 == 1 else 0
                if len(fields) - start < 2:
                    raise ParseError(line_no, f"{section} entry needs (row, value) pairs")
                for p in range(start, len(fields), 2):
                    row = fields[p]
                    value = _parse_value(fields[p + 1], line_no)
                    if row == builder.objective_row:
                        log.warning("ignoring %s entry for objective row", section)
                        continue
                    if row not in builder.row_index:
                        raise ParseError(line_no, f"unknown row {row!r} in {section}")
                    target[row] = value
            elif section == "BOUNDS":
                btype = fields[0].upper()
                if btype not in _BOUND_TYPES:
                    raise ParseError(line_no, f"unknown bound type {fields[0]!r}")
                needs_value = btype in ("LO", "UP", "FX", "LI", "UI")
                want = 3 if needs_value else 2
                # Field layout: TYPE [setname] col [value] — set name optional.
                if len(fields) == want + 1:
                    col = fields[2]
                    value_tok = fields[3] if needs_value else None
                elif len(fields) == want:
                    col = fields[1]
                    value_tok = fields[2] if needs_value else None
                else:
                    raise ParseError(line_no, "malformed BOUNDS entry")
                j = builder.col_index.get(col)
                if j is None:
                    raise ParseError(line_no, f"unknown column {col!r} in BOUNDS")
                value = _parse_value(value_tok, line_no) if needs_value else None
                if btype in ("LO", "LI"):
                    builder.lower[j] = value
                elif btype in ("UP", "UI"):
                    builder.upper[j] = value
                    if value < 0 and j not in builder.lower:
                        log.warning(
                            "negative upper bound on %r without explicit lower; keeping lower at 0",
                            col,
                        )
                elif btype == "FX":
                    builder.lower[j] = value
                    builder.upper[j] = value
                elif btype == "FR":
                    builder.lower[j] = -math.inf
                    builder.upper[j] = math.inf
                elif btype == "MI":
                    builder.lower[j] = -math.inf
                elif btype == "PL":
                    builder.upper[j] = math.inf
                elif btype == "BV":
                    builder.saw_integer = True
                    builder.lower[j] = 0.0
                    builder.upper[j] = 1.0
                if btype in ("LI", "UI"):
                    builder.saw_integer = True
            elif section is None:
                raise ParseError(line_no, "data line before any section header")

    if builder.objective_row is None:
        log.warning("MPS file has no objective (N) row; objective is zero")
    if builder.maximize:
        log.warning("OBJSENSE MAXIMIZE: objective negated to the minimize convention")
    return builder.build()


def _fmt(value):
    if value == math.inf:
        return "1e30"
    if value == -math.inf:
        return "-1e30"
    return f"{value:.12g}"


def write_mps(lp, path, comment=None):
    """Write ``lp`` as free-format MPS; values carry 12 significant digits.

    The emitted file re-reads to an instance equal to ``lp`` up to that
    rendering precision.
    """
    for name in lp.col_names + lp.row_names:
        if not name or any(ch.isspace() for ch in name):
            raise ValueError(f"name {name!r} cannot be written to free-format MPS")
    obj_name = "COST"
    while obj_name in lp.row_names:
        obj_name += "_"
    lines = []
    if comment:
        for part in comment.splitlines():
            lines.append(f"* {part}")
    lines.append(f"NAME {lp.name}" if lp.name else "NAME")
    lines.append("ROWS")
    lines.append(f" N {obj_name}")
    for i, rname in enumerate(lp.row_names):
        lines.append(f" {RowSense(int(lp.row_sense[i])).mps_char} {rname}")
    lines.append("COLUMNS")
    mat = lp.matrix
    for j, cname in enumerate(lp.col_names):
        if lp.objective[j] != 0.0:
            lines.append(f"    {cname} {obj_name} {_fmt(lp.objective[j])}")
        for ptr in range(mat.indptr[j], mat.indptr[j + 1]):
            lines.append(f"    {cname} {lp.row_names[mat.indices[ptr]]} {_fmt(mat.data[ptr])}")
    lines.append("RHS")
    for i, rname in enumerate(lp.row_names):
        if lp.rhs[i] != 0.0:
            lines.append(f"    RHS {rname} {_fmt(lp.rhs[i])}")
    if np.any(lp.row_range != 0.0):
        lines.append("RANGES")
        for i, rname in enumerate(lp.row_names):
            if lp.row_range[i] != 0.0:
                lines.append(f"    RNG {rname} {_fmt(lp.row_range[i])}")
    bound_lines = []
    for j, cname in enumerate(lp.col_names):
        lo, hi = lp.col_lower[j], lp.col_upper[j]
        if lo == 0.0 and hi == math.inf:
            continue
        if lo == hi:
            bound_lines.append(f" FX BND {cname} {_fmt(lo)}")
            continue
        if lo == -math.inf and hi == math.inf:
            bound_lines.append(f" FR BND {cname}")
            continue
        if lo == -math.inf:
            bound_lines.append(f" MI BND {cname}")
        elif lo != 0.0:
            bound_lines.append(f" LO BND {cname} {_fmt(lo)}")
        if hi != math.inf:
            bound_lines.append(f" UP BND {cname} {_fmt(hi)}")
    if bound_lines:
        lines.append("BOUNDS")
        lines.extend(bound_lines)
    lines.append("ENDATA")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
