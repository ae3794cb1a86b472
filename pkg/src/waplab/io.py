"""Comb files (JSON lines) and JSON-friendly conversion of reports."""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path

import numpy as np

from .measures import Box, DiracComb


def comb_lines(mu, metadata=None):
    header = {"dim": mu.dim, "patch": mu.patch.to_pairs()}
    if metadata:
        header.update(metadata)
    yield json.dumps(to_jsonable(header))
    for p, w in zip(mu.positions, mu.weights):
        yield json.dumps({"p": [float(v) for v in p], "re": float(w.real), "im": float(w.imag)})


def dumps_comb(mu, metadata=None):
    return "\n".join(comb_lines(mu, metadata)) + "\n"


def write_comb(mu, path, metadata=None):
    Path(path).write_text(dumps_comb(mu, metadata))


def loads_comb(text):
    """Parse a comb file; returns ``(comb, header)``."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty comb file")
    header = json.loads(lines[0])
    if "dim" not in header or "patch" not in header:
        raise ValueError("comb file header needs 'dim' and 'patch'")
    dim = int(header["dim"])
    patch = Box.from_pairs(header["patch"])
    if patch.dim != dim:
        raise ValueError("header patch does not match dim")
    atoms = [json.loads(ln) for ln in lines[1:]]
    pos = np.array([a["p"] for a in atoms], dtype=float).reshape(-1, dim)
    w = np.array([complex(a.get("re", 0.0), a.get("im", 0.0)) for a in atoms])
    return DiracComb(pos, w, patch), header


def read_comb(path):
    return loads_comb(Path(path).read_text())


def to_jsonable(obj):
    """Recursively convert dataclasses, numpy values and complex numbers for ``json``."""
    if isinstance(obj, Box):
        return obj.to_pairs()
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj
