"""Read labelled samples from CSV or OpenLABEL JSON, write result tables.

Only a small OpenLABEL subset is understood: per-frame numeric object data
(``openlabel.frames.<id>.objects.<id>.object_data.num[{name, val}]``) and an
optional boolean ``frame_properties.ood``. That is enough for datasets where
each frame is one parameter vector; it is not a conformant reader.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import re
import warnings
from dataclasses import dataclass
from os import PathLike
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

from .errors import ConfigError, DataParseError
from .kernel import Dataset

log = logging.getLogger(__name__)

__all__ = [
    "ColumnMapping",
    "OpenLabelSkipWarning",
    "parse_csv",
    "parse_openlabel",
    "parse_real",
    "format_cell",
    "write_table",
    "dataset_rows",
]

_NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


@dataclass(frozen=True)
class ColumnMapping:
    dimension_columns: tuple
    label_column: Optional[str] = None
    id_label: str = "id"
    ood_label: str = "ood"

    def __post_init__(self):
        cols = tuple(str(c) for c in self.dimension_columns)
        if not cols:
            raise ConfigError("at least one dimension column is required")
        if len(set(cols)) != len(cols):
            raise ConfigError(f"duplicate dimension columns in {cols}")
        if self.id_label == self.ood_label:
            raise ConfigError("id_label and ood_label must differ")
        object.__setattr__(self, "dimension_columns", cols)


class OpenLabelSkipWarning(UserWarning):
    """Lenient OpenLABEL parsing skipped frames. ``count`` says how many."""

    def __init__(self, count: int, frames: Sequence[str]):
        super().__init__(f"skipped {count} frame(s) missing mapped attributes: {', '.join(frames)}")
        self.count = count
        self.frames = tuple(frames)


def parse_real(text: str) -> float:
    """Strict decimal parse. Rejects NaN, Inf, hex, underscores and blanks."""
    s = text.strip()
    if not _NUMBER.match(s):
        raise ValueError(f"not a finite decimal number: {text!r}")
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"number out of range: {text!r}")
    return v


def parse_csv(path: str | PathLike, mapping: ColumnMapping) -> Dataset:
    """Read a headed CSV file into a :class:`Dataset`.

    Rows are numbered as file lines, so the first data row is row 2. Without
    a label column every row is an ID sample.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        return _parse_csv_stream(fh, mapping, path)


def _parse_csv_stream(fh: TextIO, mapping: ColumnMapping, path=None) -> Dataset:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise DataParseError("file is empty; a header row is required", path=path, row=1)
    header = [h.strip() for h in header]
    index = {}
    for i, h in enumerate(header):
        index.setdefault(h, i)
    missing = [c for c in mapping.dimension_columns if c not in index]
    if missing:
        raise DataParseError(f"mapped column(s) {missing} not in header {header}", path=path, row=1)
    dim_idx = [index[c] for c in mapping.dimension_columns]
    label_idx = index.get(mapping.label_column) if mapping.label_column else None

    id_rows, ood_rows = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataParseError(
                f"expected {len(header)} cells, found {len(row)}", path=path, row=lineno
            )
        point = []
        for col, i in zip(mapping.dimension_columns, dim_idx):
            try:
                point.append(parse_real(row[i]))
            except ValueError as exc:
                raise DataParseError(str(exc), path=path, row=lineno, column=col) from None
        if label_idx is None:
            id_rows.append(point)
            continue
        label = row[label_idx].strip()
        if label == mapping.id_label:
            id_rows.append(point)
        elif label == mapping.ood_label:
            ood_rows.append(point)
        else:
            raise DataParseError(
                f"unknown label {label!r} (expected {mapping.id_label!r} or {mapping.ood_label!r})",
                path=path, row=lineno, column=mapping.label_column,
            )
    n = len(mapping.dimension_columns)
    return Dataset(
        n,
        np.array(id_rows, dtype=np.float64).reshape(-1, n),
        np.array(ood_rows, dtype=np.float64).reshape(-1, n),
        mapping.dimension_columns,
    )


def parse_openlabel(path: str | PathLike, mapping: ColumnMapping, strict: bool = True) -> Dataset:
    """Read one point per OpenLABEL frame.

    In lenient mode (``strict=False``) frames missing a mapped attribute are
    skipped and an :class:`OpenLabelSkipWarning` reports how many.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataParseError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
                             path=path) from None
    try:
        frames = doc["openlabel"]["frames"]
    except (KeyError, TypeError):
        raise DataParseError("missing top-level 'openlabel.frames'", path=path) from None
    if isinstance(frames, list):
        frames = {str(i): f for i, f in enumerate(frames)}
    if not isinstance(frames, dict):
        raise DataParseError("'openlabel.frames' must be an object", path=path)

    wanted = mapping.dimension_columns
    id_rows, ood_rows, skipped = [], [], []
    for fid, frame in frames.items():
        if not isinstance(frame, dict):
            raise DataParseError("frame must be an object", path=path, frame=fid)
        values: dict[str, float] = {}
        objects = frame.get("objects") or {}
        if not isinstance(objects, dict):
            raise DataParseError("'objects' must be an object", path=path, frame=fid)
        for obj in objects.values():
            nums = ((obj or {}).get("object_data") or {}).get("num") or []
            for entry in nums:
                name = entry.get("name") if isinstance(entry, dict) else None
                if name is None:
                    raise DataParseError("num entry without a name", path=path, frame=fid)
                if name in values:
                    raise DataParseError(f"duplicate attribute {name!r}", path=path, frame=fid)
                val = entry.get("val")
                if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
                    if name in wanted:
                        raise DataParseError(f"attribute {name!r} has non-numeric value {val!r}",
                                             path=path, frame=fid)
                    continue
                values[name] = float(val)
        absent = [w for w in wanted if w not in values]
        if absent:
            if strict:
                raise DataParseError(f"missing attribute(s) {absent}", path=path, frame=fid)
            skipped.append(str(fid))
            continue
        ood = (frame.get("frame_properties") or {}).get("ood", False)
        if not isinstance(ood, bool):
            raise DataParseError(f"frame property 'ood' must be boolean, got {ood!r}",
                                 path=path, frame=fid)
        (ood_rows if ood else id_rows).append([values[w] for w in wanted])

    if skipped:
        warnings.warn(OpenLabelSkipWarning(len(skipped), skipped), stacklevel=2)
    n = len(wanted)
    return Dataset(
        n,
        np.array(id_rows, dtype=np.float64).reshape(-1, n),
        np.array(ood_rows, dtype=np.float64).reshape(-1, n),
        wanted,
    )


def format_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            raise ValueError("refusing to write a non-finite number")
        return repr(v)
    return str(v)


def _write_rows(fh: TextIO, rows: Iterable[Sequence], columns: Sequence[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_cell(v) for v in r])


def write_table(rows: Iterable[Sequence], columns: Sequence[str], path: str | PathLike | None) -> str:
    """Write a CSV table (LF endings, shortest round-trip reals).

    With ``path=None`` nothing is written; the text is returned either way.
    """
    buf = io.StringIO()
    _write_rows(buf, rows, columns)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def dataset_rows(ds: Dataset, mapping: ColumnMapping) -> tuple[list[list], list[str]]:
    """Rows and header that re-encode ``ds`` as CSV under ``mapping``."""
    label = mapping.label_column or "label"
    cols = list(mapping.dimension_columns) + [label]
    rows = [list(p) + [mapping.id_label] for p in ds.id_samples.tolist()]
    rows += [list(p) + [mapping.ood_label] for p in ds.ood_samples.tolist()]
    return rows, cols
