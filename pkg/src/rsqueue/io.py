"""Result tables and their CSV/JSON emission.

Every CSV starts with ``#`` comment lines carrying the artifact version, seed
and config hash, followed by a header row and rows of 17-significant-digit
floats.  Wall-clock time varies between runs, so it goes to the JSON sidecar
and the CSV payload stays byte-identical for a fixed configuration.
"""
from __future__ import annotations

import json
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FLOAT_FORMAT = "%.17g"
META_KEYS = ("artifact", "version", "command", "seed", "config_hash")


@dataclass
class ResultTable:
    name: str
    columns: list
    rows: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim == 1:
            rows = rows.reshape(1, -1) if len(self.columns) > 1 or rows.size == 1 else rows.reshape(-1, 1)
        if rows.ndim != 2 or rows.shape[1] != len(self.columns):
            raise ValueError(f"table {self.name}: {rows.shape} does not match {len(self.columns)} columns")
        self.rows = rows

    @classmethod
    def from_columns(cls, name: str, data: dict, meta: dict | None = None) -> "ResultTable":
        cols = list(data)
        arrays = [np.atleast_1d(np.asarray(data[c], dtype=float)) for c in cols]
        length = max(a.size for a in arrays)
        arrays = [np.broadcast_to(a, (length,)) if a.size == 1 else a for a in arrays]
        return cls(name, cols, np.column_stack(arrays), dict(meta or {}))

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    def to_csv_text(self) -> str:
        lines = [f"# {k}={self.meta[k]}" for k in META_KEYS if k in self.meta]
        lines.append(",".join(self.columns))
        for row in self.rows:
            lines.append(",".join(FLOAT_FORMAT % v for v in row))
        return "\n".join(lines) + "\n"

    def write_csv(self, directory) -> Path:
        path = Path(directory) / f"{self.name}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv_text(), encoding="utf-8")
        return path


def read_csv(path) -> ResultTable:
    meta, header, rows = {}, None, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        elif header is None:
            header = line.split(",")
        elif line:
            rows.append([float(v) for v in line.split(",")])
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return ResultTable(Path(path).stem, header, data, meta)


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, (np.floating, np.integer)):
        return _jsonable(value.item())
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_meta(directory, meta: dict, config: dict, files, wall_clock: float, started: float) -> Path:
    payload = {
        **{k: meta[k] for k in META_KEYS if k in meta},
        "config": config,
        "files": [Path(f).name for f in files],
        "wall_clock_s": round(wall_clock, 6),
        "started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    return write_json(Path(directory) / "meta.json", payload)
