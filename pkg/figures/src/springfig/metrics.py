"""Loading and validating evaluation rows from a metrics jsonl file."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

EXPECTED_FORMAT = "metrics"
EXPECTED_VERSION = 1

REQUIRED_COLUMNS = ("model_kind", "train_integrator", "test_integrator",
                    "test_dt", "rollout_rmse", "energy_error",
                    "matched_integrators")
NUMERIC_COLUMNS = ("test_dt", "rollout_rmse", "energy_error")


class MetricsError(Exception):
    """Unreadable, malformed, or incomplete metrics file."""


@dataclass
class MetricsTable:
    """Validated evaluation rows; the single input of every figure."""

    rows: list

    def __len__(self):
        return len(self.rows)

    def models(self):
        return sorted({r["model_kind"] for r in self.rows})

    def values(self, column, **filters):
        out = []
        for row in self.rows:
            if all(row.get(k) == v for k, v in filters.items()):
                out.append(row[column])
        return out


def _validate(row: dict, lineno: int) -> dict:
    for column in REQUIRED_COLUMNS:
        if column not in row:
            raise MetricsError(f"line {lineno}: missing column {column!r}")
    for column in NUMERIC_COLUMNS:
        value = row[column]
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            raise MetricsError(
                f"line {lineno}: column {column!r} is not a finite number "
                f"(got {value!r})")
    return row


def load_metrics(path) -> MetricsTable:
    """Parse a metrics file and keep its evaluation rows."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise MetricsError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise MetricsError(f"{path}: empty file")
    try:
        header = json.loads(lines[0])
        rows = [json.loads(line) for line in lines[1:]]
    except json.JSONDecodeError as exc:
        raise MetricsError(f"{path}: malformed JSON: {exc}") from exc
    if header.get("format") != EXPECTED_FORMAT:
        raise MetricsError(f"{path}: not a metrics file "
                           f"(format {header.get('format')!r})")
    if header.get("version") != EXPECTED_VERSION:
        raise MetricsError(f"{path}: unsupported version {header.get('version')!r}")
    eval_rows = [_validate(row, i + 2) for i, row in enumerate(rows)
                 if row.get("record") == "eval"]
    return MetricsTable(eval_rows)
