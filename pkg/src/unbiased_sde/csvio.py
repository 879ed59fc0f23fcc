"""Table CSV files: ``# key: value`` metadata lines, then one row per IRE."""

from __future__ import annotations

import csv
import io
from pathlib import Path

from .harness import TableRow

HEADER = ("ire_pct", "estimate", "ci_halfwidth", "rmse", "work_mean", "work_ci_halfwidth")


def fmt(x: float) -> str:
    return format(float(x), ".12g")


def render_csv(rows, metadata: dict) -> str:
    if not rows:
        raise ValueError("refusing to write a table with no rows")
    buf = io.StringIO()
    for key, value in metadata.items():
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for row in rows:
        writer.writerow([fmt(getattr(row, name)) for name in HEADER])
    return buf.getvalue()


def emit_csv(rows, metadata: dict, path) -> Path:
    path = Path(path)
    text = render_csv(rows, metadata)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def parse_csv(text: str):
    metadata, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(":")
            metadata[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    reader = csv.reader(body)
    header = tuple(next(reader))
    if header != HEADER:
        raise ValueError(f"unexpected header {header}")
    rows = [TableRow(*(float(v) for v in rec)) for rec in reader]
    return rows, metadata


def read_csv(path):
    return parse_csv(Path(path).read_text())
