"""Readers/writers for ASCII PCD point clouds, OBJ meshes and PGM depth dumps.

PCD (subset of PCL's v0.7 format)
    Header keywords one per line, in order: ``VERSION``, ``FIELDS``, ``SIZE``,
    ``TYPE``, ``COUNT``, ``WIDTH``, ``HEIGHT``, ``VIEWPOINT``, ``POINTS``,
    ``DATA``.  Only ``DATA ascii`` is supported.  ``FIELDS`` must contain
    ``x y z`` (other fields are ignored on read).  Lines starting with ``#``
    are comments.  The writer emits ``FIELDS x y z``, ``TYPE F F F``,
    ``SIZE 8 8 8`` and 17 significant digits per coordinate, so a write/read
    round trip reproduces the float64 values bit for bit.

OBJ
    ``v x y z`` lines define vertices, ``f a b c ...`` lines faces.  Face
    indices are 1-based, negative indices count back from the latest vertex,
    ``a/b/c`` tokens use the first component only.  Polygons with more than
    three corners are fan triangulated.  All other records are ignored.

PGM
    Binary ``P5`` with maxval 65535, big-endian, depth in millimetres rounded
    to the nearest integer and clipped to 65535; no-return pixels are 0.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .geometry import PointCloud, TriMesh


class FormatError(ValueError):
    pass


def write_pcd(path, cloud: PointCloud) -> None:
    n = len(cloud)
    lines = [
        "# .PCD v0.7 - Point Cloud Data file format",
        f"# frame {cloud.frame}",
        "VERSION 0.7",
        "FIELDS x y z",
        "SIZE 8 8 8",
        "TYPE F F F",
        "COUNT 1 1 1",
        f"WIDTH {n}",
        "HEIGHT 1",
        "VIEWPOINT 0 0 0 1 0 0 0",
        f"POINTS {n}",
        "DATA ascii",
    ]
    body = "\n".join(" ".join(repr(float(c)) for c in p) for p in cloud.points)
    Path(path).write_text("\n".join(lines) + "\n" + body + ("\n" if n else ""))


def read_pcd(path, frame=None) -> PointCloud:
    header = {}
    data_lines: list[str] = []
    seen_frame = "world"
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "frame":
                    seen_frame = parts[1]
                continue
            key, _, rest = line.partition(" ")
            key = key.upper()
            header[key] = rest.split()
            if key == "DATA":
                if header["DATA"] != ["ascii"]:
                    raise FormatError(f"unsupported PCD DATA mode {rest!r}")
                data_lines = [ln for ln in fh if ln.strip()]
                break
    if "FIELDS" not in header or "DATA" not in header:
        raise FormatError("PCD header missing FIELDS or DATA")
    fields = header["FIELDS"]
    try:
        cols = [fields.index(c) for c in ("x", "y", "z")]
    except ValueError as exc:
        raise FormatError("PCD must have x, y and z fields") from exc
    n_points = int(header.get("POINTS", [len(data_lines)])[0])
    if n_points != len(data_lines):
        raise FormatError(f"PCD declares {n_points} points but has {len(data_lines)} data rows")
    if data_lines:
        rows = np.array([[float(t) for t in ln.split()] for ln in data_lines])
        if rows.shape[1] != len(fields):
            raise FormatError("PCD data rows do not match FIELDS")
        pts = rows[:, cols]
    else:
        pts = np.zeros((0, 3))
    return PointCloud(pts, frame or seen_frame)


def read_obj(path) -> TriMesh:
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            parts = raw.split("#", 1)[0].split()
            if not parts:
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise FormatError(f"{path}:{lineno}: vertex needs 3 coordinates")
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                if len(idx) < 3:
                    raise FormatError(f"{path}:{lineno}: face needs at least 3 vertices")
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    return TriMesh(np.array(verts), np.array(faces))


def write_obj(path, mesh: TriMesh) -> None:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def write_pgm(path, depth: np.ndarray) -> None:
    d = np.asarray(depth, dtype=np.float64)
    mm = np.where(np.isfinite(d), np.rint(d * 1000.0), 0.0)
    mm = np.clip(mm, 0, 65535).astype(">u2")
    h, w = mm.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(mm.tobytes())


def read_pgm(path) -> np.ndarray:
    """Inverse of :func:`write_pgm`: metres, ``inf`` for zero pixels."""
    raw = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    pos += 1
    if tokens[0] != b"P5" or int(tokens[3]) != 65535:
        raise FormatError("expected a 16-bit binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    mm = np.frombuffer(raw[pos:pos + 2 * w * h], dtype=">u2").reshape(h, w).astype(np.float64)
    return np.where(mm > 0, mm / 1000.0, np.inf)
