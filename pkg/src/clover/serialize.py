"""Stable JSON helpers shared by the pool, model, and report writers."""

from __future__ import annotations

import json
from pathlib import Path

REPORT_DIGITS = 6


def round_sig(value, digits=REPORT_DIGITS):
    """Round a float to a fixed number of significant digits."""
    return float(f"{value:.{digits}g}")


def _rounded(obj, digits):
    if isinstance(obj, float):
        return round_sig(obj, digits)
    if isinstance(obj, dict):
        return {key: _rounded(val, digits) for key, val in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(val, digits) for val in obj]
    return obj


def stable_json(obj, digits=REPORT_DIGITS):
    """Serialize with sorted keys and fixed-significance floats.

    Two calls on equal inputs produce identical bytes, which is what makes
    reports diffable across runs.
    """
    return json.dumps(_rounded(obj, digits), sort_keys=True, indent=2) + "\n"


def write_jsonl(path, records):
    """One compact JSON object per line. Floats keep full precision."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")


def read_jsonl(path):
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
