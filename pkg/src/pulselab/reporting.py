"""Deterministic JSON/CSV output.

Floats are written with 17 significant digits so identical inputs give
byte-identical files. Every file carries the config hash.
"""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if hasattr(obj, "to_dict"):
        return dumps(obj.to_dict(), indent, _level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def config_hash(resolved: dict) -> str:
    text = dumps(resolved, indent=0)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def write_json(path, payload: dict, chash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps({"config_hash": chash, **payload}) + "\n")
    return path


def write_csv(path, columns: list, rows, chash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(f"# config_hash={chash}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt_float(float(v)) for v in row) + "\n")
    return path


def write_profile(path, x, values, chash: str) -> Path:
    cols = ["x"] + [f"v{i + 1}" for i in range(values.shape[0])]
    return write_csv(path, cols, np.column_stack([x, values.T]), chash)


def write_trajectory(directory, trajectory, chash: str, stem: str = "snapshot") -> list:
    """One CSV per snapshot; the time is recorded in the header comment."""
    directory = Path(directory)
    paths = []
    for k, (t, prof) in enumerate(zip(trajectory.times, trajectory.snapshots)):
        p = write_profile(directory / f"{stem}_{k:05d}.csv", prof.x, prof.values, f"{chash} t={_fmt_float(t)}")
        paths.append(p)
    return paths
