"""Table emission as CSV or GitHub-flavored markdown."""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Sequence

import numpy as np

DECIMALS = 4


def format_value(v, raw: bool = False) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float) or hasattr(v, "dtype"):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v) if raw else f"{v:.{DECIMALS}f}"
    return str(v)


def render_table(rows: Sequence[dict], columns: Sequence[str] | None = None,
                 fmt: str = "csv", raw: bool = False) -> str:
    """Render ``rows`` (dicts keyed by column) to text; no rows gives a header-only table."""
    if columns is None:
        if not rows:
            raise ValueError("an empty table needs explicit columns")
        columns = list(rows[0])
    cells = [[format_value(r.get(c), raw) for c in columns] for r in rows]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(cells)
        return buf.getvalue()
    if fmt == "markdown":
        def line(values):
            return "| " + " | ".join(str(v).replace("|", "\\|") for v in values) + " |\n"
        return line(columns) + "|" + "|".join("---" for _ in columns) + "|\n" + "".join(line(c) for c in cells)
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(rows: Sequence[dict], path, fmt: str = "csv", columns: Sequence[str] | None = None,
                raw: bool = False) -> Path:
    path = Path(path)
    text = render_table(rows, columns, fmt, raw)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path
