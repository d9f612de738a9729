"""Snapshot files: one JSON header line followed by a raw float64 payload.

Header keys: ``n``, ``L``, ``components`` (names), ``dtype`` ("f64-le") and
``time``. The payload is little-endian float64 in row-major order with y
outer, x inner and the component index innermost, i.e. an array of shape
(n, n, components).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .integrator import State
from .spectral import TorusGrid

COMPONENTS = ("vx", "vy", "d1", "d2", "d3")


class SnapshotError(ValueError):
    pass


def write_snapshot(path: str | Path, s: State) -> None:
    header = {"n": s.grid.n, "L": s.grid.L, "components": list(COMPONENTS), "dtype": "f64-le", "time": s.t}
    data = np.moveaxis(np.concatenate([s.v, s.d]), 0, -1).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode() + b"\n")
        fh.write(data.tobytes(order="C"))


def read_snapshot(path: str | Path) -> State:
    with open(path, "rb") as fh:
        line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(line)
        n, L, comps = int(header["n"]), float(header["L"]), list(header["components"])
    except (ValueError, KeyError, TypeError) as exc:
        raise SnapshotError(f"{path}: bad snapshot header ({exc})") from exc
    if header.get("dtype") != "f64-le":
        raise SnapshotError(f"{path}: unsupported dtype {header.get('dtype')!r}")
    if comps != list(COMPONENTS):
        raise SnapshotError(f"{path}: unexpected components {comps}")
    expected = n * n * len(comps) * 8
    if len(payload) != expected:
        raise SnapshotError(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    arr = np.moveaxis(np.frombuffer(payload, dtype="<f8").reshape(n, n, len(comps)), -1, 0).astype(float)
    return State(TorusGrid(n, L), arr[:2].copy(), arr[2:].copy(), float(header["time"]))


def snapshot_name(k: int) -> str:
    return f"snap_{k:07d}.snap"


def read_directory(directory: str | Path) -> list[State]:
    """All snapshots of a run directory, ordered by time."""
    files = sorted(Path(directory).glob("snap_*.snap"))
    if not files:
        raise SnapshotError(f"no snapshots found in {directory}")
    states = [read_snapshot(f) for f in files]
    return sorted(states, key=lambda s: s.t)
