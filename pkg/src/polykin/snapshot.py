"""Snapshot files: a JSON header line followed by the node values.

The header is one line of canonical JSON (sorted keys, no spaces) holding
the format version, encoding, grid spec, delta, optional x-cell count and
the array shape.  The body lists values in row-major (x, v1, v2, v3, I)
order, either as raw little-endian float64 or as CSV text with one row
per velocity node and 17 significant digits, which round-trips doubles
exactly.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GridError, SnapshotFormatError
from .quadrature import Grid, GridSpec, build_grid

VERSION = "polykin-snap-1"
ENCODINGS = ("f64le", "csv")


@dataclass(frozen=True, eq=False)
class Snapshot:
    spec: GridSpec
    values: np.ndarray
    x_cells: int | None = None

    @property
    def delta(self) -> float:
        return self.spec.delta

    def grid(self) -> Grid:
        return build_grid(self.spec)

    @property
    def shape(self) -> tuple[int, ...]:
        return _shape(self.spec, self.x_cells)


def _shape(spec: GridSpec, x_cells):
    n, m = int(spec.v_points_per_axis), int(spec.energy_points)
    base = (n, n, n, m)
    return base if x_cells is None else (int(x_cells),) + base


def _header(spec: GridSpec, x_cells, encoding: str) -> bytes:
    head = {
        "version": VERSION,
        "encoding": encoding,
        "grid": spec.to_dict(),
        "delta": float(spec.delta),
        "x_cells": x_cells,
        "shape": list(_shape(spec, x_cells)),
    }
    return (json.dumps(head, sort_keys=True, separators=(",", ":")) + "\n").encode("ascii")


def dumps(snap: Snapshot, encoding: str = "f64le") -> bytes:
    if encoding not in ENCODINGS:
        raise SnapshotFormatError(f"unknown encoding {encoding!r}; choose from {ENCODINGS}")
    values = np.asarray(snap.values, dtype=float)
    if values.shape != snap.shape:
        raise GridError(f"values have shape {values.shape}, header expects {snap.shape}")
    head = _header(snap.spec, snap.x_cells, encoding)
    if encoding == "f64le":
        return head + np.ascontiguousarray(values, dtype="<f8").tobytes()
    buf = io.StringIO()
    np.savetxt(buf, values.reshape(-1, values.shape[-1]), fmt="%.17g", delimiter=",")
    return head + buf.getvalue().encode("ascii")


def loads(data: bytes) -> Snapshot:
    line, sep, body = data.partition(b"\n")
    if not sep:
        raise SnapshotFormatError("missing header line")
    try:
        head = json.loads(line.decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SnapshotFormatError(f"header is not valid JSON: {exc}") from exc
    if not isinstance(head, dict) or head.get("version") != VERSION:
        raise SnapshotFormatError(f"unsupported or missing version (expected {VERSION!r})")
    encoding = head.get("encoding")
    if encoding not in ENCODINGS:
        raise SnapshotFormatError(f"unknown encoding {encoding!r}")
    try:
        spec = GridSpec.from_dict(head["grid"])
        x_cells = head.get("x_cells")
        shape = _shape(spec, x_cells)
    except (KeyError, TypeError, ValueError) as exc:
        raise SnapshotFormatError(f"bad header: {exc}") from exc
    if list(shape) != head.get("shape"):
        raise SnapshotFormatError(f"header shape {head.get('shape')} disagrees with grid {list(shape)}")
    if head.get("delta") != spec.delta:
        raise SnapshotFormatError("header delta disagrees with grid delta")

    count = math.prod(shape)
    if encoding == "f64le":
        if len(body) != 8 * count:
            raise SnapshotFormatError(f"body has {len(body)} bytes, expected {8 * count}")
        values = np.frombuffer(body, dtype="<f8").astype(float).reshape(shape)
    else:
        values = _parse_csv(body, shape)
    return Snapshot(spec=spec, values=values, x_cells=x_cells)


def _parse_csv(body: bytes, shape) -> np.ndarray:
    rows = body.decode("ascii", errors="replace").splitlines()
    width = shape[-1]
    if len(rows) != math.prod(shape) // width:
        raise SnapshotFormatError(f"body has {len(rows)} rows, expected {math.prod(shape) // width}")
    try:
        values = np.array([[float(t) for t in r.split(",")] for r in rows])
    except ValueError as exc:
        raise SnapshotFormatError(f"unparseable CSV value: {exc}") from exc
    if values.ndim != 2 or values.shape[1] != width:
        raise SnapshotFormatError("CSV rows have the wrong number of columns")
    return values.reshape(shape)


def write(path, snap: Snapshot, encoding: str = "f64le") -> None:
    Path(path).write_bytes(dumps(snap, encoding))


def read(path) -> Snapshot:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise SnapshotFormatError(f"cannot read {path}: {exc}") from exc
    return loads(data)
