"""Snapshot files and time-series tables."""
from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .solver import FluidState

MAGIC = b"NSFSNAP\x00"
VERSION = 1
FIELDS = ("rho", "mom_x", "mom_y", "rho_e")


class SnapshotError(ValueError):
    pass


@dataclass
class SnapshotHeader:
    nx: int
    ny: int
    dx: float
    dy: float
    t: float
    step: int = 0
    fields: tuple = FIELDS
    version: int = VERSION
    endianness: str = "little"
    spec_hash: str = ""
    origin: tuple = (0.0, 0.0)
    extra: dict = field(default_factory=dict)

    def to_json(self):
        d = dict(self.__dict__)
        d["fields"] = list(self.fields)
        d["origin"] = list(self.origin)
        return json.dumps(d, sort_keys=True).encode()

    @classmethod
    def from_json(cls, raw):
        d = json.loads(raw)
        d["fields"] = tuple(d["fields"])
        d["origin"] = tuple(d["origin"])
        return cls(**d)


def write_arrays(path, header: SnapshotHeader, arrays):
    path = Path(path)
    blob = header.to_json()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for a in arrays:
            a = np.ascontiguousarray(a, dtype="<f8")
            if a.shape != (header.nx, header.ny):
                raise SnapshotError(f"array shape {a.shape} does not match header")
            fh.write(a.tobytes(order="C"))
    return path


def read_arrays(path):
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise SnapshotError(f"{path}: not a snapshot file")
        (n,) = struct.unpack("<I", fh.read(4))
        header = SnapshotHeader.from_json(fh.read(n).decode())
        if header.version != VERSION:
            raise SnapshotError(f"unsupported snapshot version {header.version}")
        size = header.nx * header.ny
        arrays = []
        for name in header.fields:
            buf = fh.read(8 * size)
            if len(buf) != 8 * size:
                raise SnapshotError(f"{path}: truncated field {name}")
            arrays.append(np.frombuffer(buf, dtype="<f8").reshape(header.nx, header.ny).astype(float))
    return header, arrays


def write_snapshot(path, state: FluidState, grid, step=0, spec_hash=""):
    header = SnapshotHeader(grid.nx, grid.ny, grid.dx, grid.dy, state.t, int(step),
                            spec_hash=spec_hash, origin=tuple(grid.origin))
    return write_arrays(path, header, [state.rho, state.mom[0], state.mom[1], state.rho_e])


def read_snapshot(path):
    header, (rho, mx, my, re) = read_arrays(path)
    return header, FluidState(rho, np.array([mx, my]), re, header.t)


def header_diff(header: SnapshotHeader, grid, spec_hash=None):
    """Human-readable list of mismatches between a snapshot and a grid/spec."""
    diffs = []
    for name, want in (("nx", grid.nx), ("ny", grid.ny), ("dx", grid.dx), ("dy", grid.dy)):
        have = getattr(header, name)
        if have != want:
            diffs.append(f"{name}: snapshot {have} != config {want}")
    if spec_hash is not None and header.spec_hash and header.spec_hash != spec_hash:
        diffs.append(f"spec hash: snapshot {header.spec_hash} != config {spec_hash}")
    return diffs


class SeriesWriter:
    """Comma-separated rows with a header; floats are written with ``repr`` so files round-trip exactly."""

    def __init__(self, path, columns, append=False):
        self.path = Path(path)
        self.columns = list(columns)
        exists = self.path.exists() and self.path.stat().st_size > 0
        self._fh = open(self.path, "a" if append else "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        if not (append and exists):
            self._w.writerow(self.columns)

    def write(self, row: dict):
        self._w.writerow([_fmt(row[c]) for c in self.columns])
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def read_series(path):
    """Columns of a series file as float arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    data = np.array([[float(x) for x in r] for r in body]) if body else np.zeros((0, len(head)))
    return {name: data[:, i] for i, name in enumerate(head)}
