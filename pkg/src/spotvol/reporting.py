"""Deterministic report output.

Floats are written with 17 significant digits in JSON (enough to round-trip
any double) and 5 in CSV summaries.  Timing lives in a separate file so that
the report itself is byte-identical across reruns.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

__all__ = ["dumps", "write_report", "summary_csv", "CSV_HEADER"]

CSV_HEADER = ("Estimator", "RMSE", "ARE", "RE", "Tuning")


def _float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    s = format(x, ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _emit(obj, indent, level, out):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        out.append(json.dumps(obj))
    elif isinstance(obj, float):
        out.append(_float(obj))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(f"{pad}{json.dumps(str(k))}: ")
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            out.append("[" + ", ".join(_float(v) if isinstance(v, float) else str(v)
                                       for v in obj) + "]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "]")
    elif hasattr(obj, "item"):  # numpy scalar
        _emit(obj.item(), indent, level, out)
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with floats at 17 significant digits."""
    out = []
    _emit(obj, indent, 0, out)
    return "".join(out) + "\n"


def summary_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for name, rmse, are, re_, tuning in rows:
        w.writerow([name, f"{rmse:.5g}", f"{are:.5g}", f"{re_:.5g}", tuning])
    return buf.getvalue()


def write_report(report, out_dir, sections: dict | None = None) -> dict:
    """Write ``report.json``, ``summary.csv`` and ``timing.json``; return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out / "report.json",
        "summary": out / "summary.csv",
        "timing": out / "timing.json",
    }
    paths["report"].write_text(dumps(report.to_dict(sections)))
    paths["summary"].write_text(summary_csv(report.summary_rows()))
    paths["timing"].write_text(dumps({"wall_clock_seconds": report.wall_clock}))
    return paths
