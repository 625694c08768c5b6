"""Delimited-text ingestion, result serialization and run manifests."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import math
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EmptyInput, MissingValue, NonBinaryTreatment, SurveyExpError
from .model import ExperimentData

MISSING = {"", "na", "nan", "null", "none"}


class ColumnMissing(SurveyExpError):
    """A required column is absent from the header."""


def read_rows(path: str):
    """Header and list of row dicts (1-based data line numbers attached as '__line__')."""
    try:
        with open(path, newline="") as fh:
            sample = fh.read(4096)
            fh.seek(0)
            try:
                dialect = csv.Sniffer().sniff(sample, delimiters=",\t;")
            except csv.Error:
                dialect = csv.excel
            reader = csv.DictReader(fh, dialect=dialect)
            if not reader.fieldnames:
                raise EmptyInput(f"{path}: no header row")
            header = [h.strip() for h in reader.fieldnames]
            reader.fieldnames = header
            rows = []
            for row in reader:
                row["__line__"] = reader.line_num
                rows.append(row)
    except OSError as e:
        raise SurveyExpError(f"cannot read {path}: {e.strerror}") from e
    except UnicodeDecodeError as e:
        raise SurveyExpError(f"{path}: not a text file ({e.reason})") from e
    if not rows:
        raise EmptyInput(f"{path}: no data rows")
    return header, rows


def require_columns(header: Sequence[str], names: Iterable[Optional[str]], path: str = "input") -> None:
    for name in names:
        if name is not None and name not in header:
            raise ColumnMissing(f"{path}: column {name!r} not found (have {', '.join(header)})")


def _float(raw, col: str, line: int) -> float:
    s = (raw or "").strip()
    if s.lower() in MISSING:
        raise MissingValue(f"line {line}: missing value in column {col!r}")
    try:
        v = float(s)
    except ValueError:
        raise SurveyExpError(f"line {line}: cannot parse {s!r} in column {col!r} as a number") from None
    if not math.isfinite(v):
        raise MissingValue(f"line {line}: non-finite value in column {col!r}")
    return v


def _treatment(raw, col: str, line: int) -> int:
    s = (raw or "").strip()
    if s.lower() in MISSING:
        raise MissingValue(f"line {line}: missing value in column {col!r}")
    if s not in ("0", "1"):
        raise NonBinaryTreatment(f"line {line}: treatment must be 0 or 1, got {s!r}")
    return int(s)


def rows_to_experiment(rows, outcome: str, treatment: str, weight: str, strata: Optional[str] = None,
                       normalize: bool = False) -> ExperimentData:
    y = np.array([_float(r.get(outcome), outcome, r["__line__"]) for r in rows])
    t = np.array([_treatment(r.get(treatment), treatment, r["__line__"]) for r in rows], dtype=np.int64)
    w = np.array([_float(r.get(weight), weight, r["__line__"]) for r in rows])
    cov = None
    if strata is not None:
        vals = []
        for r in rows:
            v = (r.get(strata) or "").strip()
            if v.lower() in MISSING:
                raise MissingValue(f"line {r['__line__']}: missing value in column {strata!r}")
            vals.append(v)
        cov = {strata: np.array(vals)}
    data = ExperimentData(y, t, w, cov)
    return data.normalized() if normalize else data


def read_experiment(path, outcome, treatment, weight, strata=None, normalize=False) -> ExperimentData:
    header, rows = read_rows(path)
    require_columns(header, (outcome, treatment, weight, strata), path)
    return rows_to_experiment(rows, outcome, treatment, weight, strata, normalize)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return "; ".join(map(str, v))
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items() if not callable(x)}
    return v


def format_rows(rows: Sequence[dict], fmt: str = "csv", columns: Optional[Sequence[str]] = None) -> str:
    """Render dict rows as CSV (full-precision floats) or a JSON array."""
    if fmt == "json":
        return json.dumps([_jsonable(r) for r in rows], indent=2) + "\n"
    if fmt != "csv":
        raise SurveyExpError(f"unknown output format {fmt!r}")
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(columns)
    for r in rows:
        wr.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def file_digest(paths: Iterable[str]) -> str:
    h = hashlib.sha256()
    for p in paths:
        with open(p, "rb") as fh:
            for block in iter(lambda: fh.read(1 << 16), b""):
                h.update(block)
    return h.hexdigest()


def make_manifest(subcommand: str, options: dict, digest: Optional[str], seed, version: str) -> dict:
    return {
        "subcommand": subcommand,
        "options": _jsonable(options),
        "input_sha256": digest,
        "seed": seed,
        "version": version,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def write_output(text: str, path: Optional[str], manifest: Optional[dict] = None, stdout=None) -> None:
    """Write ``text`` to ``path`` (or stdout) and the manifest next to it."""
    if path is None or path == "-":
        import sys

        (stdout or sys.stdout).write(text)
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)
    if manifest is not None:
        with open(path + ".manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2)
            fh.write("\n")
