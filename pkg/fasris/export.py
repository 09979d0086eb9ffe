"""
Result files.

CSV keeps a fixed header; reals are written in scientific notation with 17
digits after the point so that parse -> emit reproduces the same bytes.
M, N and seed are exact integers and are written as plain integers.
JSON-lines writes one canonical JSON object per row with an explicit
status field and null for NaN.
"""
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

from fasris.canonical import canonicalize, nan_to_null
from fasris.experiment import STATUS_OK, STATUS_SKIPPED_DIMENSION, ResultRow

CSV_HEADER = (
    "estimator", "M", "N", "W", "R", "P_S", "sigma2", "threshold",
    "probability", "error_estimate", "wall_time_ms", "seed",
)
INT_FIELDS = ("M", "N", "seed")
FLOAT_FIELDS = tuple(f for f in CSV_HEADER if f not in INT_FIELDS and f != "estimator")
FORMATS = ("csv", "jsonl")


class ExportError(ValueError):
    """Result file could not be written or read back."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def format_real(value: float) -> str:
    return f"{value:.17e}"


def render_csv(rows: Iterable[ResultRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        values = row.to_dict()
        writer.writerow([
            values[name] if name == "estimator"
            else str(int(values[name])) if name in INT_FIELDS
            else format_real(values[name])
            for name in CSV_HEADER
        ])
    return buffer.getvalue()


def render_jsonl(rows: Iterable[ResultRow]) -> str:
    return "".join(canonicalize(nan_to_null(row.to_dict())) + "\n" for row in rows)


def render(rows: Iterable[ResultRow], fmt: str = "csv") -> str:
    if fmt == "csv":
        return render_csv(rows)
    if fmt == "jsonl":
        return render_jsonl(rows)
    raise ValueError(f"Unsupported format '{fmt}', expected one of {FORMATS}")


def emit(rows: List[ResultRow], fmt: str = "csv", path: Optional[str] = None) -> None:
    """
    Write rows in the requested format; path None writes to stdout.

    Raises:
        ExportError: On I/O failure, with the path that failed
    """
    text = render(rows, fmt)
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise ExportError(str(path), f"cannot write results ({e.strerror or e})") from e


def _status_for(probability: float) -> str:
    return STATUS_SKIPPED_DIMENSION if math.isnan(probability) else STATUS_OK


def _row_from_csv(record: Dict[str, str]) -> ResultRow:
    values: Dict[str, Any] = {"estimator": record["estimator"]}
    for name in INT_FIELDS:
        values[name] = int(record[name])
    for name in FLOAT_FIELDS:
        values[name] = float(record[name])
    return ResultRow(status=_status_for(values["probability"]), **values)


def _row_from_json(record: Dict[str, Any]) -> ResultRow:
    values = dict(record)
    for name in FLOAT_FIELDS:
        values[name] = math.nan if values[name] is None else float(values[name])
    return ResultRow(**values)


def read_rows(path: str, fmt: str = "csv") -> List[ResultRow]:
    """
    Parse a file written by emit.

    Raises:
        ExportError: If the file is missing or malformed
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ExportError(str(path), f"cannot read results ({e.strerror or e})") from e

    try:
        if fmt == "csv":
            reader = csv.DictReader(io.StringIO(text))
            if tuple(reader.fieldnames or ()) != CSV_HEADER:
                raise ExportError(str(path), f"unexpected header {reader.fieldnames}")
            return [_row_from_csv(record) for record in reader]
        if fmt == "jsonl":
            return [_row_from_json(json.loads(line)) for line in text.splitlines() if line]
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ExportError):
            raise
        raise ExportError(str(path), f"malformed {fmt} results: {e}") from e
    raise ValueError(f"Unsupported format '{fmt}', expected one of {FORMATS}")
