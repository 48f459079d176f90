"""Software pinhole depth renderer (z-buffer rasterisation) and occlusion test."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .geometry import CameraModel, PointCloud, RigidPose2D, TriMesh

NO_RETURN = np.inf
NEAR_PLANE = 1e-3
EPS_RENDER = 1e-4

# barycentric slack so pixels exactly on a shared edge are claimed by both triangles
_INSIDE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DepthImage:
    """Camera-frame z per pixel, row-major ``(height, width)``; ``inf`` = no return."""

    depth: NDArray[np.float64]
    camera: CameraModel

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=np.float64)
        if d.shape != (self.camera.height, self.camera.width):
            raise ValueError(f"depth shape {d.shape} does not match camera {(self.camera.height, self.camera.width)}")
        finite = np.isfinite(d)
        if np.any(d[finite] <= 0) or np.any(np.isnan(d)) or np.any(d == -np.inf):
            raise ValueError("finite depths must be positive")
        d = d.copy()
        d.setflags(write=False)
        object.__setattr__(self, "depth", d)

    @property
    def width(self) -> int:
        return self.camera.width

    @property
    def height(self) -> int:
        return self.camera.height

    @classmethod
    def empty(cls, camera: CameraModel) -> "DepthImage":
        return cls(np.full((camera.height, camera.width), NO_RETURN), camera)

    def returns(self) -> NDArray[np.bool_]:
        return np.isfinite(self.depth)

    def count(self) -> int:
        return int(np.count_nonzero(np.isfinite(self.depth)))


def _project_pairs(cam_vertices: NDArray[np.float64], tris: NDArray[np.int64], camera: CameraModel):
    """Candidate (pixel, depth) pairs for every pixel covered by a triangle."""
    W, H = camera.width, camera.height
    v0 = cam_vertices[tris[:, 0]]
    v1 = cam_vertices[tris[:, 1]]
    v2 = cam_vertices[tris[:, 2]]
    # triangles touching the near plane are dropped whole; scenes keep objects well in front
    front = (v0[:, 2] > NEAR_PLANE) & (v1[:, 2] > NEAR_PLANE) & (v2[:, 2] > NEAR_PLANE)
    v0, v1, v2 = v0[front], v1[front], v2[front]
    if len(v0) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)

    def proj(v):
        return camera.fx * v[:, 0] / v[:, 2] + camera.cx, camera.fy * v[:, 1] / v[:, 2] + camera.cy

    u0, w0 = proj(v0)
    u1, w1 = proj(v1)
    u2, w2 = proj(v2)
    area = (u1 - u0) * (w2 - w0) - (w1 - w0) * (u2 - u0)
    umin = np.maximum(np.ceil(np.minimum(np.minimum(u0, u1), u2) - 1e-9), 0).astype(np.int64)
    umax = np.minimum(np.floor(np.maximum(np.maximum(u0, u1), u2) + 1e-9), W - 1).astype(np.int64)
    vmin = np.maximum(np.ceil(np.minimum(np.minimum(w0, w1), w2) - 1e-9), 0).astype(np.int64)
    vmax = np.minimum(np.floor(np.maximum(np.maximum(w0, w1), w2) + 1e-9), H - 1).astype(np.int64)
    nu = umax - umin + 1
    nv = vmax - vmin + 1
    keep = (nu > 0) & (nv > 0) & (np.abs(area) > 1e-12)
    if not np.any(keep):
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    idx = np.nonzero(keep)[0]
    counts = nu[idx] * nv[idx]
    total = int(counts.sum())
    tri = np.repeat(idx, counts)
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    local = np.arange(total, dtype=np.int64) - starts
    pu = umin[tri] + local % nu[tri]
    pv = vmin[tri] + local // nu[tri]
    fu = pu.astype(np.float64)
    fv = pv.astype(np.float64)

    a = area[tri]
    # normalised edge functions (barycentric coordinates in screen space)
    b0 = ((u1[tri] - fu) * (w2[tri] - fv) - (w1[tri] - fv) * (u2[tri] - fu)) / a
    b1 = ((u2[tri] - fu) * (w0[tri] - fv) - (w2[tri] - fv) * (u0[tri] - fu)) / a
    b2 = 1.0 - b0 - b1
    inside = (b0 >= -_INSIDE_TOL) & (b1 >= -_INSIDE_TOL) & (b2 >= -_INSIDE_TOL)
    tri, pu, pv, fu, fv = tri[inside], pu[inside], pv[inside], fu[inside], fv[inside]

    # exact ray/plane depth: z = (n . v0) / (n . d) with d = (x/z, y/z, 1)
    n = np.cross(v1 - v0, v2 - v0)
    nd0 = np.einsum("ij,ij->i", n, v0)
    dx = (fu - camera.cx) / camera.fx
    dy = (fv - camera.cy) / camera.fy
    nt = n[tri]
    denom = nt[:, 0] * dx + nt[:, 1] * dy + nt[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        z = nd0[tri] / denom
    ok = np.isfinite(z) & (z > NEAR_PLANE)
    return (pv[ok] * W + pu[ok]), z[ok]


def render_depth(models: Sequence[tuple[TriMesh, RigidPose2D]], camera: CameraModel) -> DepthImage:
    """Z-buffer render of posed meshes; each pixel keeps the nearest surface."""
    H, W = camera.height, camera.width
    zbuf = np.full(H * W, NO_RETURN)
    if models:
        verts = []
        tris = []
        offset = 0
        for mesh, pose in models:
            world = mesh.vertices @ pose.rotation().T + pose.translation()
            verts.append(world)
            tris.append(mesh.triangles + offset)
            offset += len(world)
        world = np.vstack(verts)
        cam_vertices = camera.pose.apply(world)
        pix, z = _project_pairs(cam_vertices, np.vstack(tris), camera)
        if len(pix):
            np.minimum.at(zbuf, pix, z)
    return DepthImage(zbuf.reshape(H, W), camera)


def backproject(depth: NDArray[np.float64], camera: CameraModel, pixels: NDArray[np.int64] | None = None) -> NDArray[np.float64]:
    """World-frame points for the given flat pixel indices (default: all returns), row-major order."""
    flat = np.asarray(depth, dtype=np.float64).reshape(-1)
    if pixels is None:
        pixels = np.flatnonzero(np.isfinite(flat))
    return backproject_pixels(pixels, flat[pixels], camera)


def backproject_pixels(pixels: NDArray[np.int64], z: NDArray[np.float64], camera: CameraModel) -> NDArray[np.float64]:
    u = (pixels % camera.width).astype(np.float64)
    v = (pixels // camera.width).astype(np.float64)
    cam = np.column_stack([(u - camera.cx) / camera.fx * z, (v - camera.cy) / camera.fy * z, z])
    return camera.world_from_camera.apply(cam)


def depth_to_cloud(img: DepthImage) -> PointCloud:
    return PointCloud(backproject(img.depth, img.camera), "world")


def occludes(parent: DepthImage, child: DepthImage, eps_render: float = EPS_RENDER) -> bool:
    """True if ``child`` hides or removes any return present in ``parent``."""
    if parent.depth.shape != child.depth.shape:
        raise ValueError(f"image size mismatch: {parent.depth.shape} vs {child.depth.shape}")
    return occludes_array(parent.depth, child.depth, eps_render)


def occludes_array(parent: NDArray[np.float64], child: NDArray[np.float64], eps_render: float = EPS_RENDER) -> bool:
    has = np.isfinite(parent)
    p = parent[has]
    c = child[has]
    # an inf child pixel fails the first test, so check it separately
    return bool(np.any(~np.isfinite(c)) or np.any(c < p - eps_render))
