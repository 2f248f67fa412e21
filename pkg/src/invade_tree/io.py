"""CSV and JSON emitters with a versioned header line."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from . import __version__


def header_line(seed: int) -> str:
    return f"# invade-tree v{__version__} seed={seed:#018x}"


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return x


def _jsonable(x):
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def csv_text(fields, rows, seed: int) -> str:
    buf = io.StringIO()
    buf.write(header_line(seed) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for row in rows:
        w.writerow([_cell(x) for x in row])
    return buf.getvalue()


def write_csv(path, fields, rows, seed: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(fields, rows, seed))
    return path


def write_json(path, fields, rows, seed: int) -> Path:
    """The same rows as an array of records."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "generator": f"invade-tree v{__version__}",
        "seed": f"{seed:#018x}",
        "rows": [{f: _jsonable(x) for f, x in zip(fields, row)} for row in rows],
    }
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return path


def emit(out_dir, name: str, fields, rows, seed: int, formats=("csv", "json")) -> list[Path]:
    """Write ``<name>.csv`` and/or ``<name>.json`` under ``out_dir``."""
    rows = list(rows)
    out = []
    if "csv" in formats:
        out.append(write_csv(Path(out_dir) / f"{name}.csv", fields, rows, seed))
    if "json" in formats:
        out.append(write_json(Path(out_dir) / f"{name}.json", fields, rows, seed))
    return out


def read_csv(path):
    """(seed, fields, rows as strings) from a file written by write_csv."""
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline().rstrip("\n")
        seed = int(first.rsplit("seed=", 1)[1], 16)
        r = csv.reader(fh)
        fields = next(r)
        return seed, fields, list(r)
