"""Result records and their CSV / JSON serialization."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ResultRecord:
    """Outcome of one run.

    ``scalars`` maps names to numbers, strings, booleans or (nested) lists.
    ``curve`` is a table: ``columns`` names and ``rows`` of equal length, or
    ``None`` when the run produces no curve.  ``tables`` holds further named
    tables (for example a per-step trace) in the same form.
    """

    run_id: str
    config_hash: str
    subcommand: str
    scalars: dict = field(default_factory=dict)
    columns: list = None
    rows: list = None
    tables: dict = field(default_factory=dict)
    timestamp: str = None

    @property
    def curve(self):
        return None if self.columns is None else list(self.rows)

    def to_dict(self):
        return {
            "run_id": self.run_id,
            "config_hash": self.config_hash,
            "subcommand": self.subcommand,
            "timestamp": self.timestamp,
            "scalars": _plain(self.scalars),
            "curve": None if self.columns is None else {"columns": list(self.columns), "rows": _plain(self.rows)},
            "tables": {k: {"columns": list(c), "rows": _plain(r)} for k, (c, r) in sorted(self.tables.items())},
        }

    @classmethod
    def from_dict(cls, d):
        curve = d.get("curve")
        tables = {k: (v["columns"], v["rows"]) for k, v in (d.get("tables") or {}).items()}
        return cls(
            d["run_id"], d["config_hash"], d["subcommand"], d.get("scalars", {}),
            None if curve is None else curve["columns"], None if curve is None else curve["rows"],
            tables, d.get("timestamp"),
        )


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


def fmt_value(v):
    """CSV cell: floats with 17 significant digits, '.' decimal separator."""
    v = _plain(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    if v is None:
        return ""
    return str(v)


def _flatten(scalars):
    """Scalars as ordered (name, value) pairs; lists become ``name_1``, ``name_1_2`` ..."""
    out = []

    def walk(name, v):
        v = _plain(v)
        if isinstance(v, list):
            for i, x in enumerate(v, 1):
                walk(f"{name}_{i}", x)
        else:
            out.append((name, v))

    for k in sorted(scalars):
        walk(k, scalars[k])
    return out


def table_csv(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} cells for {len(columns)} columns")
        w.writerow([fmt_value(x) for x in row])
    return buf.getvalue()


def scalars_csv(scalars):
    flat = _flatten(scalars)
    return table_csv([k for k, _ in flat], [[v for _, v in flat]])


def to_json(record: ResultRecord):
    return json.dumps(record.to_dict(), sort_keys=True, indent=2) + "\n"


def from_json(text):
    return ResultRecord.from_dict(json.loads(text))


def render(record: ResultRecord, fmt):
    """Map of file suffix to text.

    JSON gives a single document.  CSV gives the curve (or the scalars as one
    row when there is no curve) under ``""``; when a curve exists the scalars
    go under ``"_summary"``; each extra table under ``"_<name>"``.
    """
    if fmt == "json":
        return {"": to_json(record)}
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    files = {}
    if record.columns is None:
        files[""] = scalars_csv(record.scalars)
    else:
        files[""] = table_csv(record.columns, record.rows)
        if record.scalars:
            files["_summary"] = scalars_csv(record.scalars)
    for name, (cols, rows) in sorted(record.tables.items()):
        files[f"_{name}"] = table_csv(cols, rows)
    return files


def emit(record: ResultRecord, fmt, path=None, stream=None):
    """Write ``record`` to ``path`` (plus sibling files for CSV extras) or to ``stream``.

    Returns the list of written paths.  All text is rendered before the
    first file is opened.
    """
    files = render(record, fmt)
    if path is None:
        if stream is not None:
            for suffix, text in files.items():
                if suffix:
                    stream.write(f"# {suffix[1:]}\n")
                stream.write(text)
        return []
    stem, ext = os.path.splitext(path)
    written = []
    for suffix, text in files.items():
        target = path if not suffix else f"{stem}{suffix}{ext or '.' + fmt}"
        try:
            with open(target, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write {target!r}: {exc}") from exc
        written.append(target)
    return written
