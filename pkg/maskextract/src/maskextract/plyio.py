"""Minimal PLY point-cloud reader and writer.

Only what dataset conversion needs: a vertex element with scalar
properties, ascii or binary little endian. Positions are required;
colors, normals, and per-point instance ids are carried through when
present. Faces and other elements are not supported.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

_PLY_TYPES = {
    "char": "i1",
    "uchar": "u1",
    "short": "i2",
    "ushort": "u2",
    "int": "i4",
    "uint": "u4",
    "float": "f4",
    "double": "f8",
    "int8": "i1",
    "uint8": "u1",
    "int16": "i2",
    "uint16": "u2",
    "int32": "i4",
    "uint32": "u4",
    "float32": "f4",
    "float64": "f8",
}


@dataclass
class Cloud:
    """A point cloud as parallel arrays; optional fields may be None."""

    positions: np.ndarray
    colors: Optional[np.ndarray] = None
    normals: Optional[np.ndarray] = None
    instance_ids: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError("positions must have shape (n, 3)")
        n = len(self.positions)
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.uint8)
            if self.colors.shape != (n, 3):
                raise ValueError("colors must have shape (n, 3)")
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64)
            if self.normals.shape != (n, 3):
                raise ValueError("normals must have shape (n, 3)")
        if self.instance_ids is not None:
            self.instance_ids = np.asarray(self.instance_ids, dtype=np.int64)
            if self.instance_ids.shape != (n,):
                raise ValueError("instance_ids must have shape (n,)")

    def __len__(self) -> int:
        return len(self.positions)


def _parse_header(handle) -> tuple[str, int, list[tuple[str, str]]]:
    magic = handle.readline().strip()
    if magic != b"ply":
        raise ValueError("not a PLY file (missing 'ply' magic)")
    fmt = None
    count = None
    props: list[tuple[str, str]] = []
    in_vertex = False
    while True:
        line = handle.readline()
        if not line:
            raise ValueError("unexpected end of PLY header")
        tokens = line.decode("ascii").split()
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            if tokens[1] == "vertex":
                count = int(tokens[2])
                in_vertex = True
            elif in_vertex:
                # Vertex properties are complete; later elements are ignored,
                # which is only safe when vertex data comes first.
                in_vertex = False
        elif tokens[0] == "property" and in_vertex:
            if tokens[1] == "list":
                raise ValueError("list properties in the vertex element are unsupported")
            props.append((tokens[2], tokens[1]))
        elif tokens[0] == "end_header":
            break
    if fmt not in ("ascii", "binary_little_endian"):
        raise ValueError(f"unsupported PLY format '{fmt}'")
    if count is None:
        raise ValueError("PLY header has no vertex element")
    return fmt, count, props


def read_cloud(path) -> Cloud:
    """Read a vertex-only PLY file into a Cloud."""
    path = Path(path)
    with open(path, "rb") as handle:
        fmt, count, props = _parse_header(handle)
        names = [name for name, _ in props]
        for axis in ("x", "y", "z"):
            if axis not in names:
                raise ValueError(f"{path}: vertex element lacks '{axis}'")
        dtype = np.dtype([(name, _PLY_TYPES[kind]) for name, kind in props])
        if fmt == "binary_little_endian":
            data = np.frombuffer(handle.read(count * dtype.itemsize), dtype=dtype, count=count)
        else:
            data = np.loadtxt(handle, dtype=dtype, max_rows=count, ndmin=1)
    positions = np.stack([data["x"], data["y"], data["z"]], axis=1).astype(np.float64)
    colors = None
    if all(c in names for c in ("red", "green", "blue")):
        colors = np.stack([data["red"], data["green"], data["blue"]], axis=1).astype(np.uint8)
    normals = None
    if all(c in names for c in ("nx", "ny", "nz")):
        normals = np.stack([data["nx"], data["ny"], data["nz"]], axis=1).astype(np.float64)
    instance_ids = None
    if "instance_id" in names:
        instance_ids = data["instance_id"].astype(np.int64)
    return Cloud(positions, colors=colors, normals=normals, instance_ids=instance_ids)


def write_cloud(path, cloud: Cloud) -> None:
    """Write a Cloud as binary little-endian PLY."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = [("x", "f8", "double"), ("y", "f8", "double"), ("z", "f8", "double")]
    if cloud.colors is not None:
        fields += [("red", "u1", "uchar"), ("green", "u1", "uchar"), ("blue", "u1", "uchar")]
    if cloud.normals is not None:
        fields += [("nx", "f8", "double"), ("ny", "f8", "double"), ("nz", "f8", "double")]
    if cloud.instance_ids is not None:
        if cloud.instance_ids.min(initial=0) < 0:
            raise ValueError("instance ids must be non-negative for PLY output")
        fields += [("instance_id", "u4", "uint")]
    data = np.empty(len(cloud), dtype=np.dtype([(n, d) for n, d, _ in fields]))
    for i, axis in enumerate(("x", "y", "z")):
        data[axis] = cloud.positions[:, i]
    if cloud.colors is not None:
        for i, chan in enumerate(("red", "green", "blue")):
            data[chan] = cloud.colors[:, i]
    if cloud.normals is not None:
        for i, comp in enumerate(("nx", "ny", "nz")):
            data[comp] = cloud.normals[:, i]
    if cloud.instance_ids is not None:
        data["instance_id"] = cloud.instance_ids.astype(np.uint32)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {len(cloud)}"]
    header += [f"property {kind} {name}" for name, _, kind in fields]
    header += ["end_header", ""]
    with open(path, "wb") as handle:
        handle.write("\n".join(header).encode("ascii"))
        handle.write(data.tobytes())
