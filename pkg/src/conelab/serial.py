"""Binary snapshot format for grids and fields.

Layout: 8-byte magic ``CONEFLD1``, a little-endian uint32 header length, a
UTF-8 JSON header, then the raw float64 little-endian C-order payload.
The header records the angle vector, every axis (kind, nodes, periodicity,
pole flag, period), the value shape, and the time levels for space-time
fields.  Node coordinates and times survive the JSON round trip bit-exactly
(shortest-repr floats); the payload is written as raw bytes, so the whole
round trip is bit-exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .geometry import ConeAngles
from .grids import Axis, Grid, GridFunction

MAGIC = b"CONEFLD1"


def _axis_header(ax: Axis) -> dict:
    return dict(kind=ax.kind, nodes=list(map(float, ax.nodes)),
                periodic=bool(ax.periodic), pole=bool(ax.pole),
                period=float(ax.period))


def _axis_from_header(d: dict) -> Axis:
    return Axis(d["kind"], np.array(d["nodes"], dtype=float), d["periodic"],
                d["pole"], -1, d["period"])


def _grid_header(grid: Grid) -> dict:
    return dict(angles=dict(betas=list(grid.angles.betas), n=grid.angles.n),
                axes=[_axis_header(ax) for ax in grid.axes],
                grading="per-axis nodes recorded verbatim")


def _grid_from_header(d: dict) -> Grid:
    angles = ConeAngles(tuple(d["angles"]["betas"]), d["angles"]["n"])
    return Grid(angles, tuple(_axis_from_header(a) for a in d["axes"]))


def _write(path, header: dict, payload: np.ndarray):
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(np.ascontiguousarray(payload, dtype="<f8").tobytes())


def _read(path):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValueError(f"not a cone field snapshot: magic {magic!r}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        payload = np.frombuffer(fh.read(), dtype="<f8")
    return header, payload


def write_field(path, u: GridFunction):
    header = _grid_header(u.grid)
    header.update(kind="field", dims=list(u.grid.shape))
    _write(path, header, u.values)


def write_spacetime(path, st):
    header = _grid_header(st.grid)
    header.update(kind="spacetime", dims=list(st.values.shape),
                  time=list(map(float, st.times)))
    _write(path, header, st.values)


def read_snapshot(path):
    """Returns a GridFunction or a parabolic SpaceTimeField."""
    header, payload = _read(path)
    grid = _grid_from_header(header)
    dims = tuple(header["dims"])
    values = payload.reshape(dims)
    if header["kind"] == "field":
        return GridFunction(grid, values.copy())
    from .parabolic import SpaceTimeField
    return SpaceTimeField(grid, np.array(header["time"], dtype=float), values.copy())
