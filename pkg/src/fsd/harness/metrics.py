"""Machine-readable metric records: one per metric, ``name, value, unit``."""
from __future__ import annotations

import csv
import io
import json

FORMATS = ("csv", "jsonl")


def _plain(value):
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return value


def format_metrics(rows, fmt: str = "csv") -> str:
    rows = [(name, _plain(value), unit) for name, value, unit in rows]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("name", "value", "unit"))
        w.writerows(rows)
        return buf.getvalue()
    if fmt == "jsonl":
        return "".join(json.dumps({"name": n, "value": v, "unit": u}) + "\n" for n, v, u in rows)
    raise ValueError(f"unknown metrics format {fmt!r}")


def parse_metrics(text: str, fmt: str = "csv") -> list[tuple[str, float, str]]:
    if fmt == "csv":
        reader = csv.DictReader(io.StringIO(text))
        return [(r["name"], float(r["value"]), r["unit"]) for r in reader]
    if fmt == "jsonl":
        out = []
        for line in text.splitlines():
            if line.strip():
                r = json.loads(line)
                out.append((r["name"], float(r["value"]), r["unit"]))
        return out
    raise ValueError(f"unknown metrics format {fmt!r}")
