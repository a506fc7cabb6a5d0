"""Deterministic, atomically written result files with a provenance header."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__

# keys that never influence results and so stay out of the config hash
UNHASHED = ("output", "workers", "format", "config")


def _plain(x):
    """Convert numpy scalars/arrays, Fractions and tuples into JSON-ready values."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return _plain(float(x))
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else int(x)
    if isinstance(x, float) and not np.isfinite(x):
        return str(x)
    return x


def canonical_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    cfg = {k: v for k, v in config.items() if k not in UNHASHED}
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()[:16]


def provenance(command: str, config: dict, seed) -> dict:
    return {"tool": "ipmix", "version": __version__, "command": command,
            "config_hash": config_hash(config), "seed": seed}


def atomic_write_bytes(path, data: bytes) -> Path:
    """Write to a sibling temp file, fsync, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, payload: dict, prov: dict) -> Path:
    doc = {"provenance": prov, "result": _plain(payload)}
    return atomic_write_text(path, json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _cell(v):
    v = _plain(v)
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path, schema: str, columns, rows, prov: dict) -> Path:
    """CSV whose first line carries the schema tag and provenance, then the column row."""
    buf = io.StringIO()
    tags = " ".join(f"{k}={prov[k]}" for k in sorted(prov))
    buf.write(f"# schema={schema} {tags}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return atomic_write_text(path, buf.getvalue())


def read_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    """Inverse of :func:`write_csv`: header tags, column names, string rows."""
    with open(path, newline="") as fh:
        first = fh.readline().lstrip("# ").split()
        tags = dict(t.split("=", 1) for t in first)
        rd = csv.reader(fh)
        cols = next(rd)
        return tags, cols, [r for r in rd]
