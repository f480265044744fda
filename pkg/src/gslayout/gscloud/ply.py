"""Minimal PLY I/O for Gaussian clouds (ASCII and binary little-endian).

Vertex properties ``x y z sx sy sz opacity label`` are understood; any other
scalar vertex properties are carried through ``GaussianCloud.extra``.  Label
names ride in header comments of the form ``comment label <int> <name>``.
"""
from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .cloud import GaussianCloud, Pose

_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}
_NAMES = {"i1": "char", "u1": "uchar", "i2": "short", "u2": "ushort",
          "i4": "int", "u4": "uint", "f4": "float", "f8": "double"}
_CORE = ("x", "y", "z", "sx", "sy", "sz", "opacity", "label")
_FORMATS = {"ascii", "binary_little_endian", "binary_big_endian"}


class PlyError(ValueError):
    pass


def _header(fmt, n, props, comments):
    lines = ["ply", f"format {fmt} 1.0"]
    lines += [f"comment {c}" for c in comments]
    lines.append(f"element vertex {n}")
    lines += [f"property {_NAMES[np.dtype(t).str[1:]]} {name}" for name, t in props]
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def write_vertices(path, columns, label_names, fmt="binary_little_endian"):
    """Write a vertex table given as an ordered ``[(name, array)]`` list."""
    if fmt not in ("ascii", "binary_little_endian"):
        raise PlyError(f"unsupported output format {fmt!r}")
    n = len(columns[0][1])
    props = [(name, np.asarray(arr).dtype) for name, arr in columns]
    comments = [f"label {i} {name}" for i, name in sorted(label_names.items())]
    buf = io.BytesIO()
    buf.write(_header(fmt, n, props, comments))
    if fmt == "ascii":
        for r in range(n):
            vals = []
            for _, arr in columns:
                v = arr[r]
                vals.append(repr(float(v)) if np.issubdtype(arr.dtype, np.floating) else str(int(v)))
            buf.write((" ".join(vals) + "\n").encode("ascii"))
    else:
        dt = np.dtype([(name, "<" + np.dtype(t).str[1:]) for name, t in props])
        rec = np.empty(n, dtype=dt)
        for name, arr in columns:
            rec[name] = arr
        buf.write(rec.tobytes())
    data = buf.getvalue()
    Path(path).write_bytes(data)
    return data


def _cloud_columns(cloud, means, label_id):
    n = len(cloud)
    cols = [
        ("x", means[:, 0]), ("y", means[:, 1]), ("z", means[:, 2]),
        ("sx", cloud.scales[:, 0]), ("sy", cloud.scales[:, 1]), ("sz", cloud.scales[:, 2]),
        ("opacity", cloud.opacities),
        ("label", np.full(n, label_id, dtype=np.int32)),
    ]
    cols += [(k, np.asarray(v)) for k, v in sorted(cloud.extra.items())]
    return cols


def write_ply(path, cloud, pose=None, fmt="binary_little_endian"):
    """Write one cloud; means are world-frame when ``pose`` is given."""
    means = cloud.means if pose is None else pose.apply(cloud.means)
    return write_vertices(path, _cloud_columns(cloud, means, 0), {0: cloud.label or "object"}, fmt)


def write_composite_ply(path, clouds, poses=None, fmt="binary_little_endian"):
    """Write several clouds into one file, tagged by the integer ``label`` property."""
    labels = sorted(clouds)
    if not labels:
        raise PlyError("nothing to export")
    blocks = []
    extra_keys = None
    for i, lab in enumerate(labels):
        c = clouds[lab]
        keys = sorted(c.extra)
        extra_keys = keys if extra_keys is None else [k for k in extra_keys if k in keys]
        means = c.means if poses is None else poses[lab].apply(c.means)
        blocks.append(_cloud_columns(c, means, i))
    names = [n for n, _ in blocks[0] if n in _CORE] + list(extra_keys)
    cols = [(name, np.concatenate([dict(b)[name] for b in blocks])) for name in names]
    return write_vertices(path, cols, dict(enumerate(labels)), fmt)


def read_vertices(path):
    """Parse a PLY file into ``(columns dict, label_names, format)``."""
    raw = Path(path).read_bytes()
    end = raw.find(b"end_header")
    if not raw.startswith(b"ply") or end < 0:
        raise PlyError(f"{path}: not a PLY file")
    nl = raw.index(b"\n", end)
    header = raw[:end].decode("ascii").splitlines()
    body = raw[nl + 1:]
    fmt, n, props, names, element = None, None, [], {}, None
    for line in header[1:]:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "comment" and len(parts) >= 4 and parts[1] == "label":
            names[int(parts[2])] = " ".join(parts[3:])
        elif parts[0] == "element":
            element = parts[1]
            if element == "vertex":
                n = int(parts[2])
            elif n is None:
                raise PlyError("elements before 'vertex' are not supported")
        elif parts[0] == "property" and element == "vertex":
            if parts[1] == "list":
                raise PlyError("list properties are not supported on vertices")
            if parts[1] not in _TYPES:
                raise PlyError(f"unknown property type {parts[1]!r}")
            props.append((parts[2], _TYPES[parts[1]]))
    if fmt not in _FORMATS:
        raise PlyError(f"unsupported PLY format {fmt!r}")
    if n is None:
        raise PlyError("no vertex element")
    if fmt == "ascii":
        rows = body.decode("ascii").split("\n")[:n]
        table = np.array([r.split()[: len(props)] for r in rows], dtype=float).reshape(n, len(props))
        cols = {name: table[:, j].astype(t) for j, (name, t) in enumerate(props)}
    else:
        e = "<" if fmt == "binary_little_endian" else ">"
        dt = np.dtype([(name, e + t) for name, t in props])
        rec = np.frombuffer(body, dtype=dt, count=n)
        cols = {name: rec[name].astype(t) for name, t in props}
    return cols, names, fmt


def _to_cloud(cols, mask, label):
    for req in ("x", "y", "z"):
        if req not in cols:
            raise PlyError(f"missing vertex property {req!r}")
    means = np.stack([cols["x"], cols["y"], cols["z"]], axis=1)[mask].astype(float)
    n = len(means)
    if all(k in cols for k in ("sx", "sy", "sz")):
        scales = np.stack([cols["sx"], cols["sy"], cols["sz"]], axis=1)[mask].astype(float)
    else:
        scales = np.full((n, 3), 0.01)
    opac = cols["opacity"][mask].astype(float) if "opacity" in cols else np.ones(n)
    extra = {k: v[mask] for k, v in cols.items() if k not in _CORE}
    return GaussianCloud.from_world(means, scales, opac, label, extra)


def read_ply(path, label=None):
    """Read a single-object PLY.

    Returns
    -------
    cloud : GaussianCloud
        Centered copy of the vertices.
    pose : Pose
        Pure translation that restores the file's coordinates.
    """
    cols, names, _ = read_vertices(path)
    n = len(cols["x"]) if "x" in cols else 0
    name = label or names.get(0) or Path(path).stem
    cloud, offset = _to_cloud(cols, np.ones(n, dtype=bool), name)
    return cloud, Pose(offset)


def read_composite_ply(path):
    """Split a composite PLY by its ``label`` property: ``{label: (cloud, pose)}``."""
    cols, names, _ = read_vertices(path)
    if "label" not in cols:
        raise PlyError("composite PLY needs a 'label' vertex property")
    out = {}
    for lid in np.unique(cols["label"]):
        name = names.get(int(lid), f"label_{int(lid)}")
        cloud, offset = _to_cloud(cols, cols["label"] == lid, name)
        out[name] = (cloud, Pose(offset))
    return out
