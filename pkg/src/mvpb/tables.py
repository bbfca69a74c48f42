"""Tabular outputs with metadata headers (CSV or JSON) and config hashing."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import MvpbError, PreconditionError

CSV_MAGIC = "# mvpb-table v1"


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class Table:
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def append(self, row: dict | list) -> None:
        if isinstance(row, dict):
            row = [row[c] for c in self.columns]
        if len(row) != len(self.columns):
            raise PreconditionError(f"row has {len(row)} fields, table has {len(self.columns)} columns")
        self.rows.append(list(row))

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def records(self) -> list[dict]:
        return [dict(zip(self.columns, r)) for r in self.rows]

    def where(self, **match) -> list[dict]:
        return [r for r in self.records() if all(r[k] == v for k, v in match.items())]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Table):
            return NotImplemented
        if self.columns != other.columns or self.metadata != other.metadata or len(self.rows) != len(other.rows):
            return False
        for a, b in zip(self.rows, other.rows):
            for x, y in zip(a, b):
                if isinstance(x, float) and isinstance(y, float) and math.isnan(x) and math.isnan(y):
                    continue
                if x != y:
                    return False
        return True


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _parse_cell(s: str):
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    if s in ("true", "false"):
        return s == "true"
    return s


def to_csv(table: Table) -> str:
    buf = io.StringIO()
    buf.write(CSV_MAGIC + "\n")
    for k in sorted(table.metadata):
        buf.write(f"# {k}={json.dumps(table.metadata[k], sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for r in table.rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def from_csv(text: str, strict: bool = True) -> Table:
    """Parse an mvpb CSV; with strict=False a plain header-plus-rows CSV is accepted too."""
    lines = text.splitlines()
    has_magic = bool(lines) and lines[0] == CSV_MAGIC
    if strict and not has_magic:
        raise PreconditionError("not an mvpb table")
    if not any(ln and not ln.startswith("#") for ln in lines):
        raise PreconditionError("table has no header row")
    meta = {}
    i = 1 if has_magic else 0
    while i < len(lines) and lines[i].startswith("# "):
        key, _, val = lines[i][2:].partition("=")
        meta[key] = json.loads(val)
        i += 1
    reader = csv.reader(lines[i:])
    columns = next(reader)
    rows = [[_parse_cell(c) for c in r] for r in reader]
    return Table(columns, rows, meta)


def to_json(table: Table) -> str:
    def clean(x):
        return None if isinstance(x, float) and math.isnan(x) else x

    return json.dumps(
        {"format": "mvpb-table", "version": 1, "metadata": table.metadata, "columns": table.columns, "rows": [[clean(x) for x in r] for r in table.rows]},
        sort_keys=True,
        indent=1,
    )


def from_json(text: str) -> Table:
    d = json.loads(text)
    if d.get("format") != "mvpb-table":
        raise PreconditionError("not an mvpb table")
    rows = [[float("nan") if x is None else x for x in r] for r in d["rows"]]
    return Table(d["columns"], rows, d["metadata"])


def emit(table: Table, path: str | Path, fmt: str | None = None) -> Path:
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "csv")
    text = to_json(table) if fmt == "json" else to_csv(table)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise MvpbError(f"cannot write {path}: {exc}") from exc
    return path


def parse(path: str | Path, strict: bool = True) -> Table:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise PreconditionError(f"cannot read {path}: {exc}") from exc
    return from_json(text) if path.suffix == ".json" else from_csv(text, strict)
