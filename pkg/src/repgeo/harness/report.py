"""CSV and JSON writers with byte-stable output.

CSV: comma separated, header row, LF line endings, floats with 17
significant digits, booleans as ``true``/``false``.
"""

import csv
import io
import json
import math

import numpy as np


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v) + 0.0  # folds -0.0 into 0.0
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    return str(v)


def to_csv(report):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(report.columns)
    for row in report.rows:
        writer.writerow([format_value(row[c]) for c in report.columns])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else format_value(v)
    return v


def to_json(report):
    body = {
        "experiment": report.experiment,
        "config_hash": report.config_hash,
        "seed": report.seed,
        "config": {k: v for k, v in report.config.items() if k != "output"},
        "columns": list(report.columns),
        "rows": [{k: _jsonable(v) for k, v in row.items()} for row in report.rows],
    }
    return json.dumps(body, indent=2, sort_keys=True) + "\n"


def render(report, fmt):
    if fmt == "csv":
        return to_csv(report)
    if fmt == "json":
        return to_json(report)
    raise ValueError(f"unknown format {fmt!r}")


def write(report, path, fmt):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render(report, fmt))
    return path
