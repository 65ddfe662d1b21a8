"""Result writers: RFC-4180 CSVs, canonical JSON, and figures with sibling CSVs."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

from .svg import fmt, line_chart

FIGURE_COLUMNS = ("series", "x", "y")


def cell(value) -> str:
    """CSV cell text; floats use repr so values round-trip exactly."""
    if value is None:
        return ""
    if isinstance(value, float):
        return fmt(value)
    return str(value)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([cell(v) for v in row])


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def finite_or_none(value):
    """JSON has no NaN or infinity; those become null."""
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, float):
        return finite_or_none(obj)
    if hasattr(obj, "item"):  # numpy scalar
        return jsonable(obj.item())
    return obj


def write_json(path: str | Path, obj) -> None:
    text = json.dumps(jsonable(obj), indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def write_figure(
    stem: str | Path,
    series: dict[str, list[tuple[str, float | None]]],
    **chart_kw,
) -> tuple[Path, Path]:
    """Write ``stem.svg`` and ``stem.csv`` from the same series data."""
    stem = Path(stem)
    svg_path, csv_path = stem.with_suffix(".svg"), stem.with_suffix(".csv")
    svg_path.write_text(line_chart(series, **chart_kw), encoding="utf-8")
    write_csv(csv_path, FIGURE_COLUMNS, ((name, x, y) for name, points in series.items() for x, y in points))
    return svg_path, csv_path
