"""CSV ingestion/serialization and deterministic report JSON.

Ingestion is strict: any missing or unparseable cell aborts with its data
row number.  Silent repair (imputation, coercion of blanks to zero) would
invalidate downstream identification checks, so there is none.

Report JSON is written by a small dedicated emitter so identical inputs
produce byte-identical files: dict insertion order is preserved and every
float is rendered with 17 significant digits.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .population import ObservedSample


@dataclass(frozen=True)
class ColumnMapping:
    y: str = "y"
    d: str = "d"
    z: str = "z"
    x: tuple[str, ...] = ()
    weight: str | None = None


def _parse_cell(raw: str, column: str, row: int) -> float:
    text = raw.strip() if raw is not None else ""
    if text == "":
        raise DataError(f"missing value for column {column!r} at data row {row}")
    try:
        return float(text)
    except ValueError:
        raise DataError(
            f"cannot parse {raw!r} as a number for column {column!r} at data row {row}"
        ) from None


def load_csv(path, mapping: ColumnMapping | None = None) -> ObservedSample:
    """Read a typed, validated sample; supports and covariate labels are
    inferred from the data and echoed on the returned sample."""
    mapping = mapping or ColumnMapping()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        index = {name: i for i, name in enumerate(header)}
        needed = [mapping.y, mapping.d, mapping.z, *mapping.x]
        if mapping.weight:
            needed.append(mapping.weight)
        for name in needed:
            if name not in index:
                raise DataError(f"{path}: column {name!r} not found in header {header}")
        ys, ds, zs, ws = [], [], [], []
        xcols: dict[str, list] = {name: [] for name in mapping.x}
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue  # ignore blank lines
            if len(row) != len(header):
                raise DataError(
                    f"{path}: data row {row_no} has {len(row)} cells, expected {len(header)}"
                )
            ys.append(_parse_cell(row[index[mapping.y]], mapping.y, row_no))
            ds.append(_parse_cell(row[index[mapping.d]], mapping.d, row_no))
            zs.append(_parse_cell(row[index[mapping.z]], mapping.z, row_no))
            if mapping.weight:
                ws.append(_parse_cell(row[index[mapping.weight]], mapping.weight, row_no))
            for name in mapping.x:
                label = row[index[name]].strip()
                if label == "":
                    raise DataError(f"missing value for column {name!r} at data row {row_no}")
                xcols[name].append(label)
    if not ys:
        raise DataError(f"{path}: no data rows")
    return ObservedSample(
        y=np.array(ys),
        d=np.array(ds),
        z=np.array(zs),
        x={name: np.array(col) for name, col in xcols.items()},
        weight=np.array(ws) if mapping.weight else None,
    )


def save_csv(sample: ObservedSample, path, mapping: ColumnMapping | None = None) -> None:
    """Write a sample back to CSV (values round-trip exactly via repr)."""
    mapping = mapping or ColumnMapping(x=tuple(sorted(sample.x)))
    header = [mapping.y, mapping.d, mapping.z, *mapping.x]
    if sample.weighted:
        header.append(mapping.weight or "weight")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(sample.n):
            row = [repr(float(sample.y[i])), repr(float(sample.d[i])), repr(float(sample.z[i]))]
            row += [str(sample.x[name][i]) for name in mapping.x]
            if sample.weighted:
                row.append(repr(float(sample.weight[i])))
            writer.writerow(row)


# ---------------------------------------------------------------------------
# Deterministic report JSON
# ---------------------------------------------------------------------------


def _emit(value, out: list[str]) -> None:
    if value is None:
        out.append("null")
    elif isinstance(value, bool) or isinstance(value, np.bool_):
        out.append("true" if value else "false")
    elif isinstance(value, (int, np.integer)):
        out.append(str(int(value)))
    elif isinstance(value, (float, np.floating)):
        v = float(value)
        if not np.isfinite(v):
            raise DataError("reports may not contain non-finite numbers")
        out.append(format(v, ".17g"))
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=True))
    elif isinstance(value, dict):
        out.append("{")
        for i, (k, v) in enumerate(value.items()):
            if i:
                out.append(",")
            out.append(json.dumps(str(k), ensure_ascii=True))
            out.append(":")
            _emit(v, out)
        out.append("}")
    elif isinstance(value, (list, tuple, np.ndarray)):
        out.append("[")
        seq = value.tolist() if isinstance(value, np.ndarray) else value
        for i, v in enumerate(seq):
            if i:
                out.append(",")
            _emit(v, out)
        out.append("]")
    else:
        raise DataError(f"cannot serialize {type(value).__name__} into a report")


def dumps_report(obj) -> str:
    """Compact deterministic JSON: insertion-ordered fields, 17-significant-
    digit floats, ASCII only."""
    out: list[str] = []
    _emit(obj, out)
    return "".join(out)


def write_report(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_report(obj))
        fh.write("\n")


def write_sweep_csv(rows: list[dict], path) -> None:
    """Delimited sweep output; column order follows the first row."""
    if not rows:
        raise DataError("sweep produced no rows")
    header = list(rows[0])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(row[k]) for k in header])


def _csv_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)
