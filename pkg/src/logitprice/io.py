"""Instance files: a JSON document mirroring ``MixedLogitInstance``.

Layout::

    {
      "format": "logitprice-instance",
      "version": 1,
      "alternatives": [{"name": "FSP", "priced": false}, ...],
      "customers": N,
      "classes": L,
      "price_coef": [...],          # I*N*L numbers, row-major over (i, n, l)
      "exo_utility": [...],         # same layout
      "class_weight": [...],        # L*N numbers, row-major over (l, n)
      "price_lb": [...],            # one per priced alternative
      "price_ub": [...],
      "constraints": {"A": [[...], ...], "b": [...]},   # optional, A p >= b
      "customer_mass": [...],       # optional, default all ones
      "metadata": {...}             # optional
    }

Floats are written with ``repr`` so a load after a dump is bit-exact.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Union

import numpy as np

from .model import Alternative, MixedLogitInstance

FORMAT = "logitprice-instance"
VERSION = 1


class InstanceFormatError(ValueError):
    """Malformed instance document; ``line``/``column`` point into the source text."""

    def __init__(self, msg: str, line: int = 0, column: int = 0, source: str = "<instance>"):
        self.msg = msg
        self.line = line
        self.column = column
        self.source = source
        where = f"{source}:{line}:{column}" if line else source
        super().__init__(f"{where}: {msg}")


def _position(text: str, key: str):
    """Line and column of the first ``"key"`` in ``text`` (1-based), or (0, 0)."""
    pos = text.find(f'"{key}"')
    if pos < 0:
        return 0, 0
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    return x


def instance_to_dict(inst: MixedLogitInstance) -> dict:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "alternatives": [{"name": a.name, "priced": a.priced} for a in inst.alternatives],
        "customers": inst.n_customers,
        "classes": inst.n_classes,
        "price_coef": inst.price_coef.ravel().tolist(),
        "exo_utility": inst.exo_utility.ravel().tolist(),
        "class_weight": inst.class_weight.ravel().tolist(),
        "price_lb": inst.price_lb.tolist(),
        "price_ub": inst.price_ub.tolist(),
    }
    if inst.A is not None:
        doc["constraints"] = {"A": inst.A.tolist(), "b": inst.b.tolist()}
    if np.any(inst.customer_mass != 1.0):
        doc["customer_mass"] = inst.customer_mass.tolist()
    if inst.metadata:
        doc["metadata"] = _jsonable(inst.metadata)
    return doc


def dumps(inst: MixedLogitInstance) -> str:
    return json.dumps(instance_to_dict(inst), indent=1) + "\n"


def save_instance(inst: MixedLogitInstance, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps(inst))


def _numbers(doc, key, size, text, source, required=True):
    if key not in doc:
        if required:
            raise InstanceFormatError(f"missing field {key!r}", 1, 1, source)
        return None
    line, col = _position(text, key)
    arr = doc[key]
    try:
        arr = np.asarray(arr, dtype=float)
    except (TypeError, ValueError):
        raise InstanceFormatError(f"{key!r} must contain only numbers", line, col, source) from None
    if size is not None and arr.size != size:
        raise InstanceFormatError(f"{key!r} has {arr.size} entries, expected {size}", line, col, source)
    if not np.all(np.isfinite(arr)):
        raise InstanceFormatError(f"{key!r} contains a non-finite value", line, col, source)
    return arr


def _count(doc, key, text, source):
    line, col = _position(text, key)
    v = doc.get(key)
    if not isinstance(v, int) or isinstance(v, bool) or v < 1:
        raise InstanceFormatError(f"{key!r} must be a positive integer", line or 1, col or 1, source)
    return v


def loads(text: str, source: str = "<instance>") -> MixedLogitInstance:
    """Parse an instance document; errors carry the offending line and column."""
    try:
        doc = json.loads(text, parse_constant=lambda c: math.nan)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(exc.msg, exc.lineno, exc.colno, source) from None
    if not isinstance(doc, dict):
        raise InstanceFormatError("top level must be an object", 1, 1, source)
    if doc.get("format", FORMAT) != FORMAT:
        raise InstanceFormatError(f"unknown format {doc['format']!r}", *_position(text, "format"), source)
    if doc.get("version", VERSION) != VERSION:
        raise InstanceFormatError(f"unsupported version {doc['version']!r}", *_position(text, "version"), source)
    line, col = _position(text, "alternatives")
    raw = doc.get("alternatives")
    if not isinstance(raw, list) or not raw:
        raise InstanceFormatError("'alternatives' must be a nonempty list", line or 1, col or 1, source)
    alts = []
    for a in raw:
        if not isinstance(a, dict) or not isinstance(a.get("name"), str):
            raise InstanceFormatError("each alternative needs a string 'name'", line, col, source)
        priced = a.get("priced", True)
        if not isinstance(priced, bool):
            raise InstanceFormatError("'priced' must be true or false", line, col, source)
        alts.append(Alternative(a["name"], priced))
    I = len(alts)
    N = _count(doc, "customers", text, source)
    L = _count(doc, "classes", text, source)
    m = sum(a.priced for a in alts)
    beta = _numbers(doc, "price_coef", I * N * L, text, source).reshape(I, N, L)
    q = _numbers(doc, "exo_utility", I * N * L, text, source).reshape(I, N, L)
    w = _numbers(doc, "class_weight", L * N, text, source).reshape(L, N)
    lb = _numbers(doc, "price_lb", m, text, source)
    ub = _numbers(doc, "price_ub", m, text, source)
    mass = _numbers(doc, "customer_mass", N, text, source, required=False)
    A = b = None
    if "constraints" in doc:
        cons = doc["constraints"]
        cl, cc = _position(text, "constraints")
        if not isinstance(cons, dict):
            raise InstanceFormatError("'constraints' must be an object with 'A' and 'b'", cl, cc, source)
        b = _numbers(cons, "b", None, text, source).ravel()
        A = _numbers(cons, "A", b.size * m, text, source).reshape(b.size, m)
    meta = doc.get("metadata", {})
    if not isinstance(meta, dict):
        raise InstanceFormatError("'metadata' must be an object", *_position(text, "metadata"), source)
    try:
        return MixedLogitInstance(
            alternatives=alts, price_coef=beta, exo_utility=q, class_weight=w,
            price_lb=lb, price_ub=ub, A=A, b=b, customer_mass=mass, metadata=meta,
        )
    except ValueError as exc:
        raise InstanceFormatError(str(exc), 1, 1, source) from None


def load_instance(path: Union[str, Path]) -> MixedLogitInstance:
    path = Path(path)
    return loads(path.read_text(), source=str(path))
