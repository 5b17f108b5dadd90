"""Deterministic result tables with CSV and JSON emission.

Numeric cells are canonicalized to 9 significant digits once, so the CSV
and JSON emissions of the same run carry identical values and reruns are
bit-identical (timestamps live only in the metadata).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field


def format_number(value) -> str:
    return f"{float(value):.9g}"


def canonical_cell(value):
    """Round floats to the emission precision; leave strings and ints alone."""
    if isinstance(value, bool) or isinstance(value, str):
        return value
    if isinstance(value, int):
        return value
    if value is None:
        return ""
    v = float(value)
    if math.isnan(v):
        return "nan"
    return float(format_number(v))


def config_hash(resolved: dict) -> str:
    payload = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class ResultTable:
    columns: list[str]
    rows: list[list]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(f"row length {len(row)} does not match {len(self.columns)} columns")
        self.rows = [[canonical_cell(v) for v in row] for row in self.rows]

    def body_lines(self) -> list[str]:
        lines = [",".join(self.columns)]
        for row in self.rows:
            cells = [format_number(v) if isinstance(v, float) else str(v) for v in row]
            lines.append(",".join(cells))
        return lines

    def write_csv(self, path) -> None:
        lines = [f"# {key}: {self.metadata[key]}" for key in sorted(self.metadata)]
        lines.extend(self.body_lines())
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump({"metadata": self.metadata, "columns": self.columns, "rows": self.rows},
                      fh, indent=1, sort_keys=False)
            fh.write("\n")

    def column(self, name: str) -> list:
        idx = self.columns.index(name)
        return [row[idx] for row in self.rows]
