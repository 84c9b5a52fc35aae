"""Deterministic output: CSV with 17 significant digits, sorted JSON, run manifests."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from . import __version__

MANIFEST_NAME = "manifest.json"


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    if v is None:
        return ""
    return str(v)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} fields, header has {len(columns)}")
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        # JSON has no inf/nan; keep them readable and round-trippable as strings
        return v if math.isfinite(v) else format_value(v)
    return v


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


class OutputDir:
    """Writes files under one directory; every path is recorded for the manifest."""

    def __init__(self, path):
        self.path = Path(path)
        self.written: list[str] = []
        self.path.mkdir(parents=True, exist_ok=True)

    def _write(self, name: str, text: str) -> Path:
        target = self.path / name
        with open(target, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self.written.append(name)
        return target

    def csv(self, name: str, columns, rows) -> Path:
        return self._write(name, csv_text(columns, rows))

    def json(self, name: str, obj) -> Path:
        return self._write(name, json_text(obj))

    def manifest(self, command: str, config_tree: dict, fingerprint: str) -> Path:
        record = {
            "command": command,
            "config": config_tree,
            "fingerprint": fingerprint,
            "outputs": sorted(self.written),
            "version": __version__,
        }
        return self._write(MANIFEST_NAME, json_text(record))
