"""SystemFile JSON reading and writing.

A system file is a JSON object::

    {"name": "example1", "n": 5, "m": 4, "p": 3,
     "A": [[...], ...], "B": [[...], ...], "C": [[...], ...], "D": [[...], ...]}

Matrices are row-major nested arrays. Empty matrices are written as a list
of empty rows (or ``[]`` when there are no rows); the declared ``n``, ``m``,
``p`` disambiguate their shapes. Floats are written with Python's shortest
round-trip representation, so ``read(write(sys))`` is bit-exact.
"""
from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .matkit import TolerancePolicy
from .system import StateSpaceSystem

__all__ = ["load_system", "system_from_dict", "system_to_dict", "dumps_system", "write_system", "example_path", "load_example"]


def _reject_constant(token):
    raise ValueError(f"non-finite number {token!r}")


def _shape_of(name, rows, nrows, ncols):
    if not isinstance(rows, list):
        raise ValidationError(f"{name}: expected a list of rows", kind="malformed")
    if nrows == 0:
        if any(r not in ([],) for r in rows) and rows != []:
            raise ValidationError(f"{name}: expected 0 rows", kind="shape")
        return np.zeros((0, ncols))
    if len(rows) != nrows:
        raise ValidationError(f"{name}: has {len(rows)} rows, expected {nrows}", kind="shape")
    out = np.zeros((nrows, ncols))
    for i, row in enumerate(rows):
        if not isinstance(row, list):
            raise ValidationError(f"{name}[{i}]: expected a list of numbers", kind="malformed")
        if len(row) != ncols:
            raise ValidationError(f"{name}[{i}]: has {len(row)} entries, expected {ncols}", kind="shape")
        for j, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ValidationError(f"{name}[{i}][{j}]: {v!r} is not a number", kind="malformed")
            if not math.isfinite(v):
                raise ValidationError(f"{name}[{i}][{j}]: entry must be finite", kind="nonfinite")
            out[i, j] = v
    return out


def system_from_dict(data: dict) -> StateSpaceSystem:
    if not isinstance(data, dict):
        raise ValidationError("system file must contain a JSON object", kind="malformed")
    for key in ("n", "m", "p", "A", "B", "C", "D"):
        if key not in data:
            raise ValidationError(f"missing field {key!r}", kind="malformed")
    dims = {}
    for key in ("n", "m", "p"):
        v = data[key]
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            raise ValidationError(f"field {key!r} must be a nonnegative integer", kind="malformed")
        dims[key] = v
    n, m, p = dims["n"], dims["m"], dims["p"]
    A = _shape_of("A", data["A"], n, n)
    B = _shape_of("B", data["B"], n, m)
    C = _shape_of("C", data["C"], p, n)
    D = _shape_of("D", data["D"], p, m)
    name = data.get("name", "")
    if not isinstance(name, str):
        raise ValidationError("field 'name' must be a string", kind="malformed")
    return StateSpaceSystem(A, B, C, D, name=name)


def load_system(path, tol: TolerancePolicy | None = None, check_rank: bool = True) -> StateSpaceSystem:
    """Read and validate a system file.

    With ``check_rank`` the rank conditions on ``B`` and ``[C D]`` are enforced.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise ValidationError(f"{path}: no such file", kind="missing") from exc
    except OSError as exc:
        raise ValidationError(f"{path}: cannot read ({exc.strerror})", kind="missing") from exc
    try:
        data = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}", kind="malformed") from exc
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}", kind="nonfinite") from exc
    try:
        sys = system_from_dict(data)
        if check_rank:
            sys.check_rank_conditions(tol)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}", kind=exc.kind) from exc
    return sys


def _rows(M):
    return [[float(v) for v in row] for row in np.asarray(M)]


def system_to_dict(sys: StateSpaceSystem) -> dict:
    return {
        "name": sys.name,
        "n": sys.n,
        "m": sys.m,
        "p": sys.p,
        "A": _rows(sys.A),
        "B": _rows(sys.B),
        "C": _rows(sys.C),
        "D": _rows(sys.D),
    }


def _dump_matrix(rows):
    if not rows:
        return "[]"
    return "[\n    " + ",\n    ".join(json.dumps(r) for r in rows) + "\n  ]"


def dumps_system(sys: StateSpaceSystem) -> str:
    """Serialize with one matrix row per line."""
    d = system_to_dict(sys)
    parts = [f'  "name": {json.dumps(d["name"])}']
    parts += [f'  "{k}": {d[k]}' for k in ("n", "m", "p")]
    parts += [f'  "{k}": {_dump_matrix(d[k])}' for k in "ABCD"]
    return "{\n" + ",\n".join(parts) + "\n}\n"


def write_system(sys: StateSpaceSystem, path) -> None:
    Path(path).write_text(dumps_system(sys))


def example_path(k: int) -> Path:
    """Path of the shipped fixture ``example{k}.json``."""
    return Path(str(resources.files("geozero") / "data" / f"example{k}.json"))


def load_example(k: int) -> StateSpaceSystem:
    return load_system(example_path(k))
