"""Byte-stable CSV and JSON output for experiment records."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def format_number(x) -> str:
    """Shortest round-trip decimal for floats (Python repr); ints verbatim."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def emit_csv(path, header, rows) -> Path:
    """Write a CSV with LF line endings; numbers formatted by :func:`format_number`."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(list(header))
            for row in rows:
                writer.writerow([format_number(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc.strerror or exc}") from exc
    return path


def read_csv(path) -> tuple[list, list]:
    """Read a CSV written by :func:`emit_csv`; numeric cells become floats."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    return header, rows


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def emit_json(path, obj) -> Path:
    """Write JSON with sorted keys and a trailing newline; non-finite floats become strings."""
    path = Path(path)
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write JSON to {path}: {exc.strerror or exc}") from exc
    return path


@dataclass
class ResultRecord:
    """One experiment's output: tables, summary scalars and pass/fail verdicts."""

    experiment: str
    config_hash: str
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    summary: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    error: dict | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(self.verdicts.values())

    @property
    def exit_code(self) -> int:
        if self.error is not None:
            return 2
        return 0 if self.passed else 1

    def summary_document(self) -> dict:
        return {
            "experiment": self.experiment,
            "config_hash": self.config_hash,
            "summary": self.summary,
            "verdicts": self.verdicts,
            "passed": self.passed,
            "error": self.error,
            "files": sorted(f"{name}.csv" for name in self.tables),
        }

    def write(self, out_dir) -> list:
        """Write every table as ``<name>.csv`` plus ``summary.json``."""
        out_dir = Path(out_dir)
        paths = [emit_csv(out_dir / f"{name}.csv", header, rows)
                 for name, (header, rows) in sorted(self.tables.items())]
        paths.append(emit_json(out_dir / "summary.json", self.summary_document()))
        return paths
