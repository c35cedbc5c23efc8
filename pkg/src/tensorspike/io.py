"""Self-describing CSV and JSON artifacts.

Every CSV starts with a ``# schema:`` comment line followed by a ``# config:``
line carrying the resolved configuration (seed included) as compact JSON.
No timestamps are written, so re-running a config reproduces the file
byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import FormatError

SCHEMA_VERSION = 1


def schema_string(name: str, columns: Sequence[str]) -> str:
    return f"tensorspike.{name}/v{SCHEMA_VERSION} columns={','.join(columns)}"


def _plain(obj: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return _plain(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def dumps_json(obj: Any) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def _emit(text: str, path: str | os.PathLike | None) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def write_table(
    name: str,
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    config: dict,
    path: str | os.PathLike | None = None,
    fmt: str = "csv",
) -> None:
    """Write rows as CSV (schema and config comments first) or as JSON."""
    rows = [list(r) for r in rows]
    for r in rows:
        if len(r) != len(columns):
            raise ValueError(f"row has {len(r)} cells, expected {len(columns)}")
    if fmt == "json":
        payload = {
            "schema": schema_string(name, columns),
            "config": config,
            "seed": config.get("seed"),
            "columns": list(columns),
            "rows": [dict(zip(columns, r)) for r in rows],
        }
        _emit(dumps_json(payload), path)
        return
    buf = io.StringIO()
    buf.write(f"# schema: {schema_string(name, columns)}\n")
    buf.write(f"# config: {json.dumps(_plain(config), sort_keys=True, separators=(',', ':'))}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(columns)
    for r in rows:
        wr.writerow([_cell(v) for v in r])
    _emit(buf.getvalue(), path)


def write_record(name: str, record: dict, config: dict, path: str | os.PathLike | None = None,
                 fmt: str = "json") -> None:
    """Write one result object; CSV flattens it to ``key,value`` rows."""
    if fmt == "csv":
        flat = _flatten(_plain(record))
        write_table(name, ["key", "value"], sorted(flat.items()), config, path, "csv")
        return
    payload = {"schema": f"tensorspike.{name}/v{SCHEMA_VERSION}", "config": config, "seed": config.get("seed")}
    payload.update(record)
    _emit(dumps_json(payload), path)


def _flatten(obj: Any, prefix: str = "") -> dict:
    out = {}
    if isinstance(obj, dict):
        for k, v in obj.items():
            out.update(_flatten(v, f"{prefix}{k}."))
    elif isinstance(obj, list) and obj and isinstance(obj[0], (list, dict)):
        for i, v in enumerate(obj):
            out.update(_flatten(v, f"{prefix}{i}."))
    else:
        out[prefix[:-1]] = json.dumps(obj) if isinstance(obj, list) else obj
    return out


def read_table(path: str | os.PathLike) -> tuple[str, dict, list[dict]]:
    """Inverse of the CSV branch of :func:`write_table`: ``(schema, config, rows)``."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if len(lines) < 3 or not lines[0].startswith("# schema: ") or not lines[1].startswith("# config: "):
        raise FormatError(f"{path} is not a tensorspike CSV")
    schema = lines[0][len("# schema: "):]
    config = json.loads(lines[1][len("# config: "):])
    rows = list(csv.DictReader(lines[2:]))
    return schema, config, rows


def write_matrix_csv(x: np.ndarray, path: str | os.PathLike, config: dict | None = None) -> None:
    """Signal matrix ``(n, r)`` as CSV with one row per variable."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64).T).T
    cols = [f"x{k}" for k in range(x.shape[1])]
    write_table("signal", cols, x.tolist(), config or {}, path, "csv")


def read_matrix_csv(path: str | os.PathLike) -> np.ndarray:
    """Read a signal written by :func:`write_matrix_csv` (comment lines optional)."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    if lines and not _is_number(lines[0].split(",")[0]):
        lines = lines[1:]
    try:
        return np.array([[float(v) for v in ln.split(",")] for ln in lines], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: malformed signal CSV ({exc})") from exc


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True
