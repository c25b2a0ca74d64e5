"""Small shared helpers: year-month codes and canonical CSV output.

All CSV written by the engine goes through `write_csv` so that reruns are
byte-identical (floats use shortest round-trip repr, fixed row order).
"""

from __future__ import annotations

import csv
import re
from pathlib import Path
from typing import Iterable, Sequence

_YM_RE = re.compile(r"^(\d{4})-(\d{2})$")


def ym_code(year: int, month: int) -> int:
    """Encode a year-month as a single sortable integer."""
    if not 1 <= month <= 12:
        raise ValueError(f"month out of range: {month}")
    return year * 12 + (month - 1)


def parse_ym(text: str) -> int:
    m = _YM_RE.match(text.strip())
    if not m:
        raise ValueError(f"expected YYYY-MM, got {text!r}")
    return ym_code(int(m.group(1)), int(m.group(2)))


def ym_str(code: int) -> str:
    return f"{code // 12:04d}-{code % 12 + 1:02d}"


def ym_year(code: int) -> int:
    return code // 12


def ym_quarter(code: int) -> str:
    return f"{code // 12:04d}Q{(code % 12) // 3 + 1}"


def fmt_cell(value) -> str:
    """Canonical cell rendering: shortest round-trip repr for floats."""
    if hasattr(value, "item"):  # unwrap numpy scalars first
        value = value.item()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt_cell(v) for v in row])


def read_csv_rows(path: str | Path, expected_header: Sequence[str] | None = None):
    """Yield rows as dicts; validates the header when one is expected."""
    from .errors import IngestError

    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file, header required")
        if expected_header is not None and [h.strip() for h in header] != list(expected_header):
            raise IngestError(
                f"{path}: header mismatch, expected {','.join(expected_header)} "
                f"got {','.join(header)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            yield lineno, dict(zip(header, row))
