"""Closed triangle meshes for simple solids; objects rest on ``z = 0``, the table slab lies below it."""

from __future__ import annotations

import math

import numpy as np

from .geometry import TriMesh


def box_mesh(sx: float, sy: float, sz: float, center_xy: tuple[float, float] = (0.0, 0.0)) -> TriMesh:
    cx, cy = center_xy
    x0, x1 = cx - sx / 2, cx + sx / 2
    y0, y1 = cy - sy / 2, cy + sy / 2
    v = np.array(
        [
            [x0, y0, 0], [x1, y0, 0], [x1, y1, 0], [x0, y1, 0],
            [x0, y0, sz], [x1, y0, sz], [x1, y1, sz], [x0, y1, sz],
        ],
        dtype=np.float64,
    )
    # outward-facing winding
    f = [
        [0, 2, 1], [0, 3, 2],  # bottom
        [4, 5, 6], [4, 6, 7],  # top
        [0, 1, 5], [0, 5, 4],
        [1, 2, 6], [1, 6, 5],
        [2, 3, 7], [2, 7, 6],
        [3, 0, 4], [3, 4, 7],
    ]
    return TriMesh(v, np.array(f))


def table_mesh(size: float = 0.6, thickness: float = 0.02) -> TriMesh:
    """Square slab whose top face is the plane ``z = 0``."""
    m = box_mesh(size, size, thickness)
    return TriMesh(m.vertices - np.array([0.0, 0.0, thickness]), m.triangles)


def cube_mesh(side: float, origin=(0.0, 0.0, 0.0)) -> TriMesh:
    """Axis-aligned cube with its minimum corner at ``origin``."""
    m = box_mesh(side, side, side, (side / 2, side / 2))
    return TriMesh(m.vertices + np.asarray(origin, dtype=np.float64), m.triangles)


def prism_mesh(polygon, height: float) -> TriMesh:
    """Vertical extrusion of a convex counter-clockwise polygon."""
    poly = np.asarray(polygon, dtype=np.float64)
    n = len(poly)
    if n < 3:
        raise ValueError("polygon needs at least 3 vertices")
    bottom = np.column_stack([poly, np.zeros(n)])
    top = np.column_stack([poly, np.full(n, height)])
    v = np.vstack([bottom, top])
    f = []
    for i in range(1, n - 1):
        f.append([0, i + 1, i])
        f.append([n, n + i, n + i + 1])
    for i in range(n):
        j = (i + 1) % n
        f.append([i, j, n + j])
        f.append([i, n + j, n + i])
    return TriMesh(v, np.array(f))


def cylinder_mesh(radius: float, height: float, segments: int = 64) -> TriMesh:
    ang = np.arange(segments) * (2.0 * math.pi / segments)
    ring = np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])
    return prism_mesh(ring, height)


def sphere_mesh(radius: float, center=(0.0, 0.0, 0.0), rings: int = 24, segments: int = 48) -> TriMesh:
    """UV sphere; poles are single vertices."""
    verts = [[0.0, 0.0, radius]]
    for i in range(1, rings):
        phi = math.pi * i / rings
        for j in range(segments):
            th = 2.0 * math.pi * j / segments
            verts.append([radius * math.sin(phi) * math.cos(th), radius * math.sin(phi) * math.sin(th), radius * math.cos(phi)])
    verts.append([0.0, 0.0, -radius])
    f = []
    south = len(verts) - 1
    for j in range(segments):
        k = (j + 1) % segments
        f.append([0, 1 + j, 1 + k])
    for i in range(rings - 2):
        a = 1 + i * segments
        b = a + segments
        for j in range(segments):
            k = (j + 1) % segments
            f.append([a + j, b + j, b + k])
            f.append([a + j, b + k, a + k])
    last = 1 + (rings - 2) * segments
    for j in range(segments):
        k = (j + 1) % segments
        f.append([last + j, south, last + k])
    return TriMesh(np.asarray(verts) + np.asarray(center, dtype=np.float64), np.array(f))


def triangle_incircle(a, b, c) -> tuple[tuple[float, float], float]:
    """Centre and radius of the circle inscribed in a 2D triangle."""
    a, b, c = (np.asarray(p, dtype=np.float64) for p in (a, b, c))
    la, lb, lc = np.linalg.norm(b - c), np.linalg.norm(c - a), np.linalg.norm(a - b)
    per = la + lb + lc
    center = (la * a + lb * b + lc * c) / per
    s = per / 2
    area = 0.5 * abs((b - a)[0] * (c - a)[1] - (b - a)[1] * (c - a)[0])
    return (float(center[0]), float(center[1])), float(area / s)


def demo_models():
    """Three table-top objects: one rotationally symmetric, two without any
    rotational symmetry.  Volumes are true inscribed cylinders."""
    from .geometry import VolumeApprox
    from .msgt import ObjectModel

    tri = [(-0.035, -0.025), (0.035, -0.025), (0.010, 0.030)]
    wedge_c, wedge_r = triangle_incircle(*tri)
    house = [(-0.03, -0.02), (0.03, -0.02), (0.03, 0.01), (0.0, 0.025), (-0.03, 0.01)]
    return {
        "can": ObjectModel.from_mesh("can", cylinder_mesh(0.026, 0.09, 48), rotationally_symmetric=True),
        "wedge": ObjectModel.from_mesh(
            "wedge", prism_mesh(tri, 0.07), volume=VolumeApprox(wedge_c, wedge_r, 0.0, 0.07)
        ),
        "block": ObjectModel.from_mesh(
            "block", prism_mesh(house, 0.05), volume=VolumeApprox((0.0, 0.0), 0.02, 0.0, 0.05)
        ),
    }
