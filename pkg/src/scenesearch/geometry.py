"""Spatial primitives: point clouds, rigid transforms, exact NN queries, volumes.

Conventions
-----------
* World frame is gravity aligned with the table top at ``z = 0``.
* Object models live in a canonical frame whose base plane is ``z = 0``; a
  planar pose ``(x, y, theta)`` rotates about +z and translates in x/y only.
* Camera poses map world points into the camera frame: ``p_cam = R p + t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Literal, Sequence, Union

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

TWO_PI = 2.0 * math.pi

Frame = Literal["camera", "world"]
Point3 = tuple[float, float, float]


def normalize_angle(theta: float) -> float:
    """Wrap an angle into ``[0, 2*pi)``."""
    t = math.fmod(float(theta), TWO_PI)
    if t < 0.0:
        t += TWO_PI
    # fmod of a tiny negative number can round up to exactly 2*pi
    if t >= TWO_PI:
        t = 0.0
    return t


def shortest_angular_difference(a: float, b: float) -> float:
    """Smallest absolute rotation taking ``b`` onto ``a``; result in ``[0, pi]``."""
    d = math.fmod(float(a) - float(b), TWO_PI)
    d = abs(d)
    if d > math.pi:
        d = TWO_PI - d
    return d


def _as_points(points) -> NDArray[np.float64]:
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        return np.zeros((0, 3), dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (N, 3) array of points, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered set of 3D points tagged with the frame they are expressed in."""

    points: NDArray[np.float64]
    frame: Frame = "world"

    def __post_init__(self):
        pts = _as_points(self.points)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.frame not in ("camera", "world"):
            raise ValueError(f"unknown frame {self.frame!r}")

    def __len__(self) -> int:
        return self.points.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self.frame == other.frame and np.array_equal(self.points, other.points)

    @classmethod
    def empty(cls, frame: Frame = "world") -> "PointCloud":
        return cls(np.zeros((0, 3)), frame)

    def bounds(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        if len(self) == 0:
            raise ValueError("empty cloud has no bounds")
        return self.points.min(axis=0), self.points.max(axis=0)


@dataclass(frozen=True)
class RigidPose2D:
    """Planar object pose: translation in the table plane plus yaw about +z."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.theta)):
            raise ValueError("pose components must be finite")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    def rotation(self) -> NDArray[np.float64]:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def translation(self) -> NDArray[np.float64]:
        return np.array([self.x, self.y, 0.0])

    def compose(self, other: "RigidPose2D") -> "RigidPose2D":
        """``self * other``: apply ``other`` first, then ``self``."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return RigidPose2D(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    def inverse(self) -> "RigidPose2D":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return RigidPose2D(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.theta)

    def to_rigid3(self) -> "Rigid3":
        return Rigid3(self.rotation(), self.translation())


@dataclass(frozen=True, eq=False)
class Rigid3:
    """General 6-DoF rigid transform ``p -> R p + t``."""

    rotation: NDArray[np.float64]
    translation: NDArray[np.float64]

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3).copy()
        t = np.asarray(self.translation, dtype=np.float64).reshape(3).copy()
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("transform must be finite")
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9) or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("rotation must be orthonormal with determinant +1")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Rigid3":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        return points @ self.rotation.T + self.translation

    def inverse(self) -> "Rigid3":
        Rt = self.rotation.T
        return Rigid3(Rt, -Rt @ self.translation)

    def compose(self, other: "Rigid3") -> "Rigid3":
        return Rigid3(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def matrix(self) -> NDArray[np.float64]:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T


def look_at(eye: Sequence[float], target: Sequence[float], up: Sequence[float] = (0.0, 0.0, 1.0)) -> Rigid3:
    """World->camera transform for a camera at ``eye`` looking at ``target``.

    Camera axes follow the usual pinhole convention: +z forward, +x right,
    +y down in the image.
    """
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(up, dtype=np.float64))
    n = np.linalg.norm(right)
    if n < 1e-12:
        raise ValueError("up vector is parallel to the viewing direction")
    right /= n
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd])
    return Rigid3(R, -R @ eye)


def transform_cloud(cloud: PointCloud, pose: Union[RigidPose2D, Rigid3], frame: Frame | None = None) -> PointCloud:
    """Rigidly move every point; count and order are preserved."""
    T = pose.to_rigid3() if isinstance(pose, RigidPose2D) else pose
    return PointCloud(T.apply(cloud.points), frame or cloud.frame)


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: Rigid3 = field(default_factory=Rigid3.identity)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @cached_property
    def world_from_camera(self) -> Rigid3:
        return self.pose.inverse()

    def pixel_rays(self) -> NDArray[np.float64]:
        """Camera-frame ray directions with unit z, shape ``(height, width, 3)``."""
        u, v = np.meshgrid(np.arange(self.width, dtype=np.float64), np.arange(self.height, dtype=np.float64))
        return np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1)

    def footprint(self, depth: float) -> float:
        """Approximate lateral size of one pixel at the given depth."""
        return depth / min(self.fx, self.fy)


class SpatialIndex:
    """Exact nearest-neighbour index over a point cloud (read-only after build)."""

    def __init__(self, cloud: PointCloud | NDArray[np.float64]):
        pts = cloud.points if isinstance(cloud, PointCloud) else _as_points(cloud)
        self.points = pts
        self._tree = cKDTree(pts) if len(pts) else None

    def __len__(self) -> int:
        return self.points.shape[0]

    def nearest_distance(self, queries: NDArray[np.float64], upper_bound: float = np.inf) -> NDArray[np.float64]:
        """Distance to the nearest indexed point, ``inf`` if none within ``upper_bound``."""
        q = _as_points(queries)
        if self._tree is None:
            return np.full(len(q), np.inf)
        if len(q) == 0:
            return np.zeros(0)
        d, _ = self._tree.query(q, k=1, distance_upper_bound=upper_bound)
        return d

    def query(self, queries: NDArray[np.float64], upper_bound: float = np.inf):
        """Nearest distance and index; index == len(self) where nothing is in range."""
        q = _as_points(queries)
        if self._tree is None:
            return np.full(len(q), np.inf), np.zeros(len(q), dtype=np.int64)
        return self._tree.query(q, k=1, distance_upper_bound=upper_bound)

    def within(self, queries: NDArray[np.float64], delta: float) -> NDArray[np.bool_]:
        """Vectorised :func:`nearest_within`. Distance exactly ``delta`` counts as a hit."""
        if delta < 0:
            raise ValueError("delta must be non-negative")
        # inflate the search bound slightly so boundary points are returned, then compare exactly
        d = self.nearest_distance(queries, upper_bound=delta * (1.0 + 1e-9) + 1e-15)
        return d <= delta


def nearest_within(index: SpatialIndex, p: Iterable[float], delta: float) -> bool:
    return bool(index.within(np.asarray(p, dtype=np.float64).reshape(1, 3), delta)[0])


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: NDArray[np.float64]
    triangles: NDArray[np.int64]

    def __post_init__(self):
        v = _as_points(self.vertices).copy()
        f = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3).copy()
        if len(v) == 0 or len(f) == 0:
            raise ValueError("mesh must have vertices and triangles")
        if not np.all(np.isfinite(v)):
            raise ValueError("mesh vertices must be finite")
        if f.min() < 0 or f.max() >= len(v):
            raise ValueError("triangle index out of range")
        areas = self._areas(v, f)
        if np.any(areas <= 1e-12):
            raise ValueError(f"{int(np.sum(areas <= 1e-12))} degenerate triangle(s) in mesh")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)

    @staticmethod
    def _areas(v, f):
        a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def bounds(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def footprint_radius(self) -> float:
        """Radius of the smallest origin-centred circle containing the footprint."""
        return float(np.max(np.hypot(self.vertices[:, 0], self.vertices[:, 1])))


@dataclass(frozen=True)
class VolumeApprox:
    """Upright cylinder in the model frame, used as a conservative object volume."""

    center_offset: tuple[float, float]
    radius: float
    z_min: float
    z_max: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if not self.z_max > self.z_min:
            raise ValueError("z_max must exceed z_min")
        object.__setattr__(self, "center_offset", (float(self.center_offset[0]), float(self.center_offset[1])))


def inscribed_cylinder(mesh: TriMesh) -> VolumeApprox:
    """Cylinder on the bounding-box footprint centre, radius = half the smaller extent.

    Conservative for convex solids of revolution about a vertical axis; for
    other shapes it is a heuristic that may poke outside the solid.
    """
    lo, hi = mesh.bounds()
    ext = hi - lo
    if ext[0] <= 0 or ext[1] <= 0 or ext[2] <= 0:
        raise ValueError("mesh has zero extent along some axis")
    center = (0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]))
    return VolumeApprox(center, 0.5 * float(min(ext[0], ext[1])), float(lo[2]), float(hi[2]))


def points_in_volume(points: NDArray[np.float64], vol: VolumeApprox, pose: RigidPose2D) -> NDArray[np.bool_]:
    """Boolean mask of points inside the posed cylinder (boundary inclusive)."""
    pts = _as_points(points)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    # cylinder axis in the world frame
    ox, oy = vol.center_offset
    ax = pose.x + c * ox - s * oy
    ay = pose.y + s * ox + c * oy
    dx = pts[:, 0] - ax
    dy = pts[:, 1] - ay
    z = pts[:, 2]
    return (dx * dx + dy * dy <= vol.radius * vol.radius) & (z >= vol.z_min) & (z <= vol.z_max)


def point_in_volume(p: Iterable[float], vol: VolumeApprox, pose: RigidPose2D) -> bool:
    return bool(points_in_volume(np.asarray(p, dtype=np.float64).reshape(1, 3), vol, pose)[0])
