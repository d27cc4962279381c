"""Reading and writing clouds (PLY, XYZ) and transforms (4x4 text)."""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .core import PointCloud, RigidTransform

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


class CloudParseError(ValueError):
    """Malformed or unsupported point-cloud file."""


def _guess_format(path) -> str:
    ext = Path(path).suffix.lower()
    if ext == ".ply":
        return "PLY"
    if ext in (".xyz", ".txt", ".pts"):
        return "XYZ"
    raise ValueError(f"cannot infer cloud format from {path!r}; pass format=")


def _build_cloud(xyz, normals, where: str) -> PointCloud:
    bad = ~np.all(np.isfinite(xyz), axis=1)
    if normals is not None:
        bad |= ~np.all(np.isfinite(normals), axis=1)
    if bad.any():
        raise CloudParseError(f"non-finite coordinate at {where} {int(np.argmax(bad))}")
    if normals is not None:
        n = np.linalg.norm(normals, axis=1, keepdims=True)
        if np.any(n == 0):
            normals = None
        else:
            normals = normals / n
    return PointCloud(xyz, normals)


def load_cloud(path, format: str | None = None) -> PointCloud:
    fmt = (format or _guess_format(path)).upper()
    if fmt == "XYZ":
        return _load_xyz(path)
    if fmt == "PLY":
        return _load_ply(path)
    raise ValueError(f"unsupported format {fmt!r}")


def save_cloud(cloud: PointCloud, path, format: str | None = None, binary: bool = True) -> None:
    fmt = (format or _guess_format(path)).upper()
    if fmt == "XYZ":
        cols = cloud.points if cloud.normals is None else np.hstack([cloud.points, cloud.normals])
        np.savetxt(path, cols, fmt="%.17g")
    elif fmt == "PLY":
        _save_ply(cloud, path, binary)
    else:
        raise ValueError(f"unsupported format {fmt!r}")


def _load_xyz(path) -> PointCloud:
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            try:
                vals = [float(v) for v in s.replace(",", " ").split()]
            except ValueError as exc:
                raise CloudParseError(f"{path}: line {lineno}: {exc}") from None
            if len(vals) not in (3, 6) or (width is not None and len(vals) != width):
                raise CloudParseError(f"{path}: line {lineno}: expected 3 or 6 columns, got {len(vals)}")
            if not all(np.isfinite(vals)):
                raise CloudParseError(f"{path}: line {lineno}: non-finite coordinate")
            width = len(vals)
            rows.append(vals)
    if not rows:
        return PointCloud(np.zeros((0, 3)))
    arr = np.asarray(rows)
    return _build_cloud(arr[:, :3], arr[:, 3:6] if width == 6 else None, "row")


def _parse_ply_header(fh, path):
    magic = fh.readline()
    if magic.strip() != b"ply":
        raise CloudParseError(f"{path}: line 1: missing 'ply' magic")
    fmt = None
    elements = []  # [name, count, [(prop, dtype)]]
    lineno = 1
    while True:
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise CloudParseError(f"{path}: line {lineno}: header ended without end_header")
        tok = raw.decode("ascii", "replace").split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "end_header":
            break
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] not in ("ascii", "binary_little_endian"):
                raise CloudParseError(f"{path}: line {lineno}: unsupported format {' '.join(tok[1:])!r}")
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise CloudParseError(f"{path}: line {lineno}: malformed element line")
            elements.append([tok[1], int(tok[2]), []])
        elif tok[0] == "property":
            if not elements:
                raise CloudParseError(f"{path}: line {lineno}: property before element")
            if tok[1] == "list":
                if elements[-1][0] == "vertex":
                    raise CloudParseError(f"{path}: line {lineno}: list property in vertex element")
                elements[-1][2].append((tok[-1], None))
                continue
            if len(tok) != 3 or tok[1] not in _PLY_TYPES:
                raise CloudParseError(f"{path}: line {lineno}: malformed property line")
            elements[-1][2].append((tok[2], _PLY_TYPES[tok[1]]))
        else:
            raise CloudParseError(f"{path}: line {lineno}: unexpected header keyword {tok[0]!r}")
    if fmt is None:
        raise CloudParseError(f"{path}: header has no format line")
    return fmt, elements, lineno


def _load_ply(path) -> PointCloud:
    with open(path, "rb") as fh:
        fmt, elements, header_lines = _parse_ply_header(fh, path)
        if not elements or elements[0][0] != "vertex":
            raise CloudParseError(f"{path}: first element must be 'vertex'")
        _, count, props = elements[0]
        names = [p for p, _ in props]
        for axis in "xyz":
            if axis not in names:
                raise CloudParseError(f"{path}: vertex element lacks property {axis!r}")
        has_normals = all(n in names for n in ("nx", "ny", "nz"))
        if fmt == "ascii":
            table = np.empty((count, len(props)))
            for i in range(count):
                raw = fh.readline()
                lineno = header_lines + i + 1
                if not raw:
                    raise CloudParseError(f"{path}: line {lineno}: truncated body, expected {count} vertices")
                tok = raw.split()
                if len(tok) < len(props):
                    raise CloudParseError(f"{path}: line {lineno}: expected {len(props)} values")
                try:
                    table[i] = [float(v) for v in tok[: len(props)]]
                except ValueError:
                    raise CloudParseError(f"{path}: line {lineno}: unparsable number") from None
            col = {n: table[:, k] for k, n in enumerate(names)}
        else:
            dtype = np.dtype([(n, "<" + t) for n, t in props])
            offset = fh.tell()
            data = fh.read(dtype.itemsize * count)
            if len(data) < dtype.itemsize * count:
                raise CloudParseError(
                    f"{path}: byte offset {offset + len(data)}: truncated body, "
                    f"expected {dtype.itemsize * count} bytes of vertex data"
                )
            rec = np.frombuffer(data, dtype=dtype, count=count)
            col = {n: rec[n].astype(np.float64) for n in names}
    xyz = np.stack([col["x"], col["y"], col["z"]], axis=1)
    normals = np.stack([col["nx"], col["ny"], col["nz"]], axis=1) if has_normals else None
    return _build_cloud(xyz, normals, "vertex")


def _save_ply(cloud: PointCloud, path, binary: bool) -> None:
    props = ["x", "y", "z"] + (["nx", "ny", "nz"] if cloud.normals is not None else [])
    data = cloud.points if cloud.normals is None else np.hstack([cloud.points, cloud.normals])
    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
              f"element vertex {len(cloud)}"]
    header += [f"property double {p}" for p in props]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
        else:
            for row in data:
                fh.write((" ".join(f"{v:.17g}" for v in row) + "\n").encode("ascii"))


def save_transform(T: RigidTransform, path) -> None:
    np.savetxt(path, T.as_matrix(), fmt="%.17g")


def load_transform(path) -> RigidTransform:
    m = np.loadtxt(path, dtype=np.float64)
    try:
        return RigidTransform.from_matrix(m.reshape(4, 4))
    except ValueError as exc:
        raise CloudParseError(f"{os.fspath(path)}: {exc}") from None
