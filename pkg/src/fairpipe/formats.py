"""Delimited-text readers and writers.

Every file written here starts with a schema line ``# fairpipe:<kind>/1``.
Readers skip ``#`` lines and blank lines, locate columns by header name, and
report malformed rows with their 1-based line number.
"""
from __future__ import annotations

import csv
import io
from fractions import Fraction
from pathlib import Path
from typing import IO, Iterable

from .errors import FormatError
from .metrics import Cell, OutcomeDistribution
from .pipeline import GroupSet, Outcome, OutcomeTable, Record, Status, tally

SCHEMA_VERSION = 1


def schema_line(kind: str) -> str:
    return f"# fairpipe:{kind}/{SCHEMA_VERSION}\n"


def fmt(value) -> str:
    """Stable text for a number: integers bare, everything else to 10 significant digits."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return str(value.numerator)
        return f"{float(value):.10g}"
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def fmt_exact(value) -> str:
    """Lossless text for a mass: ``p/q`` for fractions, repr for floats."""
    if isinstance(value, (int, Fraction)):
        return str(Fraction(value))
    return repr(float(value))


def parse_label(text: str):
    text = text.strip()
    if text.lstrip("-").isdigit():
        return int(text)
    return text


def _open_text(source) -> str:
    if isinstance(source, (str, Path)) and Path(source).exists():
        return Path(source).read_text()
    if hasattr(source, "read"):
        return source.read()
    raise FormatError(f"cannot read {source!r}")


def _rows(text: str, required: Iterable[str]):
    """Yield ``(line_no, header_index, row)``; header checked for ``required``."""
    header, index = None, None
    reader = csv.reader(io.StringIO(text))
    for row in reader:
        line = reader.line_num
        if not row or not any(cell.strip() for cell in row) or row[0].lstrip().startswith("#"):
            continue
        row = [cell.strip() for cell in row]
        if header is None:
            header = row
            index = {name: i for i, name in enumerate(header)}
            missing = [c for c in required if c not in index]
            if missing:
                raise FormatError(f"missing column(s) {', '.join(missing)}", line)
            continue
        if len(row) != len(header):
            raise FormatError(f"expected {len(header)} fields, found {len(row)}", line)
        yield line, index, row
    if header is None:
        raise FormatError("no header row found")


def sniff_header(text: str) -> list[str]:
    for line in text.splitlines():
        if line.strip() and not line.lstrip().startswith("#"):
            return [c.strip() for c in next(csv.reader([line]))]
    raise FormatError("empty input")


def _bit(text: str, line: int, what: str) -> int:
    if text not in ("0", "1"):
        raise FormatError(f"{what} must be 0 or 1, got {text!r}", line)
    return int(text)


def _stage_columns(index: dict, prefix: str) -> int:
    t = 0
    while f"{prefix}_{t + 1}" in index:
        t += 1
    return t


# populations

def read_population(source) -> list[Record]:
    text = _open_text(source)
    records = []
    T = None
    for line, index, row in _rows(text, ("id", "group")):
        if T is None:
            T = _stage_columns(index, "truth")
            if T == 0:
                raise FormatError("no truth_1.. columns", line)
        truths = tuple(_bit(row[index[f"truth_{t}"]], line, f"truth_{t}") for t in range(1, T + 1))
        records.append(Record(row[index["id"]], parse_label(row[index["group"]]), truths))
    return records


def write_population(records: Iterable[Record], out: IO[str]) -> None:
    records = list(records)
    T = max((len(r.truths) for r in records), default=0)
    out.write(schema_line("population"))
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["id", "group", *(f"truth_{t}" for t in range(1, T + 1))])
    for r in records:
        w.writerow([r.id, r.group, *r.truths])


# outcomes

def write_outcomes(table: OutcomeTable, out: IO[str]) -> None:
    """Outcome columns, followed by the truths the audit needs."""
    T = table.n_stages
    out.write(schema_line("outcomes"))
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["id", "group", "status", "failed_at",
                *(f"decision_{t}" for t in range(1, T + 1)),
                *(f"truth_{t}" for t in range(1, T + 1))])
    for rec, o in table.rows():
        decisions = list(o.stage_decisions) + [""] * (T - len(o.stage_decisions))
        w.writerow([rec.id, rec.group, o.status.value, "" if o.failed_at is None else o.failed_at,
                    *decisions, *rec.truths[:T]])


def _decision(text: str):
    try:
        return int(text)
    except ValueError:
        return text


def read_outcomes(source) -> OutcomeTable:
    text = _open_text(source)
    records, outcomes = [], []
    T = None
    for line, index, row in _rows(text, ("id", "group", "status", "failed_at")):
        if T is None:
            T = _stage_columns(index, "decision")
            if T == 0:
                raise FormatError("no decision_1.. columns", line)
            if _stage_columns(index, "truth") < T:
                raise FormatError(f"auditing needs truth_1..truth_{T} columns", line)
        status_text = row[index["status"]]
        try:
            status = Status(status_text)
        except ValueError:
            raise FormatError(f"status must be PASSED or FAIL, got {status_text!r}", line) from None
        cells = [row[index[f"decision_{t}"]] for t in range(1, T + 1)]
        if status is Status.PASSED:
            if "" in cells:
                raise FormatError("PASSED row with an empty decision cell", line)
            outcome = Outcome(status, tuple(_decision(c) for c in cells), _decision(cells[-1]))
        else:
            failed_text = row[index["failed_at"]]
            if not failed_text.isdigit() or not 1 <= int(failed_text) < T:
                raise FormatError(f"failed_at must be a stage in 1..{T - 1}, got {failed_text!r}", line)
            k = int(failed_text)
            if "" in cells[:k] or any(cells[k:]):
                raise FormatError(f"FAIL at stage {k} needs exactly {k} decisions", line)
            outcome = Outcome(status, tuple(_decision(c) for c in cells[:k]), failed_at=k)
        truths = tuple(_bit(row[index[f"truth_{t}"]], line, f"truth_{t}") for t in range(1, T + 1))
        records.append(Record(row[index["id"]], parse_label(row[index["group"]]), truths))
        outcomes.append(outcome)
    if not records:
        raise FormatError("outcome file has no rows")
    reached, passed = tally(T, records, outcomes)
    return OutcomeTable(tuple(records), tuple(outcomes), T, reached, passed)


# distributions

DIST_COLUMNS = ("group", "x", "y", "xhat", "yhat", "mass")


def read_distribution(source, majority=None) -> OutcomeDistribution:
    """Parse a distribution table; masses are read as exact fractions.

    The majority defaults to the group with the largest total mass.
    """
    text = _open_text(source)
    mass: dict = {}
    order: dict = {}
    for line, index, row in _rows(text, DIST_COLUMNS):
        g = parse_label(row[index["group"]])
        bits = tuple(_bit(row[index[c]], line, c) for c in ("x", "y", "xhat", "yhat"))
        try:
            m = Fraction(row[index["mass"]])
        except (ValueError, ZeroDivisionError):
            raise FormatError(f"mass {row[index['mass']]!r} is not a number", line) from None
        if m < 0:
            raise FormatError(f"negative mass {m}", line)
        key = (g, *bits)
        if key in mass:
            raise FormatError(f"duplicate cell {key}", line)
        mass[key] = m
        order[g] = order.get(g, 0) + m
    if not mass:
        raise FormatError("distribution file has no rows")
    if majority is None:
        majority = max(order, key=order.get)
    elif majority not in order:
        majority = parse_label(str(majority))
    return OutcomeDistribution(GroupSet(tuple(order), majority), mass)


def write_distribution(dist: OutcomeDistribution, out: IO[str]) -> None:
    out.write(schema_line("distribution"))
    w = csv.writer(out, lineterminator="\n")
    w.writerow(DIST_COLUMNS)
    rank = {g: i for i, g in enumerate(dist.groups.labels)}
    for cell, m in sorted(dist.items(), key=lambda kv: (rank[kv[0].a], tuple(kv[0])[1:])):
        w.writerow([cell.a, cell.x, cell.y, cell.xhat, cell.yhat, fmt_exact(m)])


def write_rows(out: IO[str], header: Iterable[str], rows: Iterable[Iterable]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(list(header))
    for row in rows:
        w.writerow([fmt(v) for v in row])


def section(out: IO[str], name: str) -> None:
    out.write(f"# section: {name}\n")


__all__ = [
    "Cell", "fmt", "fmt_exact", "read_distribution", "read_outcomes", "read_population",
    "schema_line", "section", "sniff_header", "write_distribution", "write_outcomes",
    "write_population", "write_rows",
]
