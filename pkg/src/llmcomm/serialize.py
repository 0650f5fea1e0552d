"""Deterministic JSON/CSV rendering: insertion key order, reals as fixed 6-decimal."""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Any, Iterable, Mapping


def _real(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"non-finite real {x!r} cannot be serialized")
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def dumps(obj: Any) -> str:
    """Render ``obj`` as compact JSON with floats fixed to six decimals."""
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _real(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, Mapping):
        return "{" + ",".join(f"{json.dumps(str(k))}:{dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_lines(rows: Iterable[Any]) -> str:
    return "".join(dumps(r) + "\n" for r in rows)


def csv_text(rows: list[Mapping[str, Any]]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = list(rows[0].keys())
    writer.writerow(header)
    for row in rows:
        writer.writerow([_csv_cell(row.get(k)) for k in header])
    return buf.getvalue()


def _csv_cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _real(v)
    return str(v)
