"""Point cloud container and PLY/XYZ readers and writers.

Supported file formats:

* PLY 1.0, ``ascii`` and ``binary_little_endian``, element ``vertex`` with
  scalar properties ``x, y, z`` (float32 or float64) plus optional extra
  scalar properties, which are carried as named per-point attributes.
* XYZ plain text: one point per line, whitespace separated, extra columns
  ignored on read.

Coordinates are always held as float64. Binary round trips are bit exact;
ASCII output uses enough digits to round trip float64 values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyCloud,
    EmptyInput,
    InvalidCloud,
    MalformedHeader,
    NonFiniteCoordinate,
    UnsupportedFormat,
)

PLY_ASCII = "ply_ascii"
PLY_BINARY_LE = "ply_binary_le"
XYZ = "xyz"
AUTO = "auto"

FORMATS = (PLY_ASCII, PLY_BINARY_LE, XYZ)

# PLY scalar type name -> little-endian numpy dtype string
_PLY_DTYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "<i2", "int16": "<i2",
    "ushort": "<u2", "uint16": "<u2",
    "int": "<i4", "int32": "<i4",
    "uint": "<u4", "uint32": "<u4",
    "float": "<f4", "float32": "<f4",
    "double": "<f8", "float64": "<f8",
}


@dataclass(frozen=True)
class PointCloud:
    """Immutable ordered set of 3D points with optional scalar attributes."""

    points: np.ndarray
    attributes: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidCloud(f"points must have shape (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise NonFiniteCoordinate("points contain NaN or Inf")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        attrs = {}
        for name, values in self.attributes.items():
            arr = np.asarray(values, dtype=np.float64)
            if arr.shape != (len(pts),):
                raise InvalidCloud(
                    f"attribute {name!r} has {arr.shape} entries, cloud has {len(pts)}"
                )
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            attrs[name] = arr
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "attributes", attrs)

    def __len__(self):
        return len(self.points)

    def with_attribute(self, name: str, values) -> "PointCloud":
        """Return a copy carrying an extra (or replaced) scalar attribute."""
        attrs = dict(self.attributes)
        attrs[name] = np.asarray(values, dtype=np.float64)
        return PointCloud(self.points, attrs)

    def select(self, indices) -> "PointCloud":
        """Return the sub-cloud at the given indices (order preserved)."""
        idx = np.asarray(indices, dtype=np.intp)
        return PointCloud(
            self.points[idx],
            {name: arr[idx] for name, arr in self.attributes.items()},
        )


@dataclass(frozen=True)
class BoundingBox:
    min_corner: np.ndarray
    max_corner: np.ndarray

    @property
    def volume(self) -> float:
        return float(np.prod(self.max_corner - self.min_corner))

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.max_corner - self.min_corner))


def bounding_box(cloud: PointCloud) -> BoundingBox:
    """Axis-aligned bounding box of a non-empty cloud."""
    if len(cloud) == 0:
        raise EmptyCloud("bounding_box of an empty cloud")
    return BoundingBox(cloud.points.min(axis=0), cloud.points.max(axis=0))


# --- parsing -----------------------------------------------------------


def parse_cloud(data: bytes, fmt: str = AUTO) -> PointCloud:
    """Parse a point cloud from an in-memory byte stream.

    ``fmt`` is one of :data:`FORMATS` or ``"auto"``, in which case PLY is
    detected from the leading magic and anything else is treated as XYZ.
    """
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise TypeError("parse_cloud expects bytes")
    data = bytes(data)
    if not data.strip():
        raise EmptyInput("empty input stream")
    if fmt == AUTO:
        # the header itself resolves ascii vs binary
        if data[:3] == b"ply":
            return _parse_ply(data, expect=AUTO)
        return _parse_xyz(data)
    if fmt in (PLY_ASCII, PLY_BINARY_LE):
        return _parse_ply(data, expect=fmt)
    if fmt == XYZ:
        return _parse_xyz(data)
    raise UnsupportedFormat(f"unknown format {fmt!r}")


def _parse_ply_header(data: bytes):
    """Split a PLY header into (elements, binary flag, body offset).

    Each element is (name, count, [(prop_name, dtype_str | ("list", ct, it))]).
    """
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise MalformedHeader("not a PLY file or missing end_header")
    nl = data.find(b"\n", end)
    if nl < 0:
        raise MalformedHeader("end_header line not terminated")
    body_start = nl + 1
    try:
        header = data[:end].decode("ascii")
    except UnicodeDecodeError as exc:
        raise MalformedHeader("header is not ASCII") from exc

    binary = None
    elements = []
    for raw in header.splitlines()[1:]:
        parts = raw.split()
        if not parts or parts[0] == "comment" or parts[0] == "obj_info":
            continue
        if parts[0] == "format":
            if len(parts) < 2:
                raise MalformedHeader("bad format line")
            if parts[1] == "ascii":
                binary = False
            elif parts[1] == "binary_little_endian":
                binary = True
            elif parts[1] == "binary_big_endian":
                raise UnsupportedFormat("big-endian PLY is not supported")
            else:
                raise MalformedHeader(f"unknown PLY format {parts[1]!r}")
        elif parts[0] == "element":
            if len(parts) != 3:
                raise MalformedHeader(f"bad element line: {raw!r}")
            try:
                count = int(parts[2])
            except ValueError as exc:
                raise MalformedHeader(f"bad element count: {raw!r}") from exc
            if count < 0:
                raise MalformedHeader(f"negative element count: {raw!r}")
            elements.append((parts[1], count, []))
        elif parts[0] == "property":
            if not elements:
                raise MalformedHeader("property before any element")
            if parts[1] == "list":
                if len(parts) != 5:
                    raise MalformedHeader(f"bad list property: {raw!r}")
                ct, it = parts[2], parts[3]
                if ct not in _PLY_DTYPES or it not in _PLY_DTYPES:
                    raise MalformedHeader(f"unknown list types: {raw!r}")
                elements[-1][2].append((parts[4], ("list", ct, it)))
            else:
                if len(parts) != 3:
                    raise MalformedHeader(f"bad property line: {raw!r}")
                if parts[1] not in _PLY_DTYPES:
                    raise MalformedHeader(f"unknown property type {parts[1]!r}")
                elements[-1][2].append((parts[2], _PLY_DTYPES[parts[1]]))
    if binary is None:
        raise MalformedHeader("missing format line")
    return elements, binary, body_start


def _parse_ply(data: bytes, expect: str) -> PointCloud:
    elements, binary, offset = _parse_ply_header(data)
    if expect == PLY_ASCII and binary:
        raise UnsupportedFormat("file is binary PLY, ply_ascii was requested")
    if expect == PLY_BINARY_LE and not binary:
        raise UnsupportedFormat("file is ASCII PLY, ply_binary_le was requested")
    vertex = next((e for e in elements if e[0] == "vertex"), None)
    if vertex is None:
        raise MalformedHeader("no vertex element")
    _, count, props = vertex
    names = [p[0] for p in props]
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise MalformedHeader(f"vertex element lacks property {axis!r}")

    if binary:
        table = _read_binary_vertices(data, offset, elements, vertex)
    else:
        table = _read_ascii_vertices(data, offset, elements, vertex)

    xyz = np.column_stack(
        [table["x"], table["y"], table["z"]]
    ).astype(np.float64)
    if not np.all(np.isfinite(xyz)):
        raise NonFiniteCoordinate("PLY vertex data contains NaN or Inf")
    attrs = {
        name: table[name].astype(np.float64)
        for name in names
        if name not in ("x", "y", "z")
    }
    return PointCloud(xyz, attrs)


def _read_binary_vertices(data, offset, elements, vertex):
    pos = offset
    for elem in elements:
        name, count, props = elem
        if elem is vertex:
            break
        if any(isinstance(p[1], tuple) for p in props):
            raise UnsupportedFormat(
                f"cannot skip binary element {name!r} with list properties"
            )
        pos += count * sum(np.dtype(p[1]).itemsize for p in props)
    _, count, props = vertex
    if any(isinstance(p[1], tuple) for p in props):
        raise UnsupportedFormat("list property inside binary vertex element")
    dtype = np.dtype([(p[0], p[1]) for p in props])
    nbytes = count * dtype.itemsize
    if len(data) - pos < nbytes:
        raise MalformedHeader(
            f"vertex element declares {count} entries but body is short"
        )
    return np.frombuffer(data, dtype=dtype, count=count, offset=pos)


def _read_ascii_vertices(data, offset, elements, vertex):
    lines = data[offset:].splitlines()
    row = 0
    for elem in elements:
        name, count, props = elem
        if elem is vertex:
            break
        row += count
    _, count, props = vertex
    if len(lines) - row < count:
        raise MalformedHeader(
            f"vertex element declares {count} entries but body has fewer lines"
        )
    scalar_names = [p[0] for p in props if not isinstance(p[1], tuple)]
    out = {name: np.empty(count, dtype=np.float64) for name in scalar_names}
    has_lists = any(isinstance(p[1], tuple) for p in props)
    if not has_lists:
        # fast path: fixed column layout
        try:
            flat = np.array(
                b" ".join(lines[row : row + count]).split(), dtype=np.float64
            )
        except ValueError as exc:
            raise MalformedHeader(f"bad ASCII vertex data: {exc}") from exc
        if flat.size != count * len(props):
            raise MalformedHeader("ASCII vertex rows have inconsistent width")
        flat = flat.reshape(count, len(props))
        for j, name in enumerate(scalar_names):
            out[name] = flat[:, j]
        return out
    for i in range(count):
        tokens = lines[row + i].split()
        t = 0
        try:
            for pname, ptype in props:
                if isinstance(ptype, tuple):
                    n = int(tokens[t])
                    t += 1 + n
                else:
                    out[pname][i] = float(tokens[t])
                    t += 1
        except (IndexError, ValueError) as exc:
            raise MalformedHeader(f"bad ASCII vertex line {i}") from exc
    return out


def _parse_xyz(data: bytes) -> PointCloud:
    rows = []
    for lineno, raw in enumerate(data.splitlines(), start=1):
        tokens = raw.split()
        if not tokens:
            continue
        if len(tokens) < 3:
            raise MalformedHeader(f"XYZ line {lineno}: fewer than 3 columns")
        try:
            rows.append([float(tokens[0]), float(tokens[1]), float(tokens[2])])
        except ValueError as exc:
            raise MalformedHeader(f"XYZ line {lineno}: {exc}") from exc
    if not rows:
        raise EmptyInput("XYZ stream holds no points")
    pts = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(pts)):
        raise NonFiniteCoordinate("XYZ data contains NaN or Inf")
    return PointCloud(pts)


# --- writing -----------------------------------------------------------


def _fmt_float(v: float) -> str:
    # shortest representation that round-trips float64
    return repr(float(v))


def write_cloud(
    cloud: PointCloud, fmt: str, include_attributes: bool = True
) -> bytes:
    """Serialize a cloud to bytes in the requested format."""
    if fmt == PLY_ASCII:
        return _write_ply(cloud, binary=False, attrs=include_attributes)
    if fmt == PLY_BINARY_LE:
        return _write_ply(cloud, binary=True, attrs=include_attributes)
    if fmt == XYZ:
        return _write_xyz(cloud, attrs=include_attributes)
    raise UnsupportedFormat(f"unknown format {fmt!r}")


def _ply_header(cloud: PointCloud, binary: bool, attrs: bool) -> bytes:
    lines = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property double x",
        "property double y",
        "property double z",
    ]
    if attrs:
        lines += [f"property double {name}" for name in cloud.attributes]
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def _vertex_table(cloud: PointCloud, attrs: bool) -> np.ndarray:
    cols = [cloud.points]
    if attrs and cloud.attributes:
        cols += [arr[:, None] for arr in cloud.attributes.values()]
    return np.hstack(cols) if len(cloud) else np.empty((0, 3))


def _write_ply(cloud: PointCloud, binary: bool, attrs: bool) -> bytes:
    header = _ply_header(cloud, binary, attrs)
    table = _vertex_table(cloud, attrs)
    if binary:
        return header + table.astype("<f8").tobytes()
    body = "".join(
        " ".join(_fmt_float(v) for v in row) + "\n" for row in table
    )
    return header + body.encode("ascii")


def _write_xyz(cloud: PointCloud, attrs: bool) -> bytes:
    table = _vertex_table(cloud, attrs)
    body = "".join(
        " ".join(_fmt_float(v) for v in row) + "\n" for row in table
    )
    return body.encode("ascii")


def load_cloud(path, fmt: str = AUTO) -> PointCloud:
    """Read a cloud from disk (format sniffed unless forced)."""
    with open(path, "rb") as fh:
        return parse_cloud(fh.read(), fmt)


def save_cloud(cloud: PointCloud, path, fmt: str | None = None,
               include_attributes: bool = True) -> None:
    """Write a cloud to disk; format defaults from the file extension."""
    if fmt is None:
        name = str(path).lower()
        fmt = PLY_BINARY_LE if name.endswith(".ply") else XYZ
    data = write_cloud(cloud, fmt, include_attributes)
    with open(path, "wb") as fh:
        fh.write(data)
