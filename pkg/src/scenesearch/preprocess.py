"""Table-plane removal and gravity alignment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PointCloud, Rigid3

# a plane must carry at least this fraction of the cloud to count as the table
MIN_INLIER_FRACTION = 0.3


@dataclass(frozen=True)
class PlaneFit:
    """Plane ``n . p + d = 0``; the unit normal points toward the side holding most off-plane points."""

    normal: tuple[float, float, float]
    offset: float
    inliers: int
    found: bool

    @property
    def coefficients(self) -> tuple[float, float, float, float]:
        return (*self.normal, self.offset)

    def distance(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ np.asarray(self.normal) + self.offset


def _plane_from_points(p: np.ndarray):
    n = np.cross(p[1] - p[0], p[2] - p[0])
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        return None
    n = n / norm
    return n, -float(n @ p[0])


def fit_plane_ransac(points: np.ndarray, iterations: int = 200, inlier_eps: float = 0.005, seed: int = 0) -> PlaneFit:
    """Seeded RANSAC, followed by a least-squares refit on the winning inlier set."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 3:
        raise ValueError("plane fitting needs at least 3 points")
    rng = np.random.default_rng(seed)
    best_n, best_d, best_count = None, 0.0, -1
    for _ in range(iterations):
        sample = pts[rng.choice(len(pts), 3, replace=False)]
        plane = _plane_from_points(sample)
        if plane is None:
            continue
        n, d = plane
        count = int(np.count_nonzero(np.abs(pts @ n + d) <= inlier_eps))
        if count > best_count:
            best_n, best_d, best_count = n, d, count
    if best_n is None:
        return PlaneFit((0.0, 0.0, 1.0), 0.0, 0, False)
    inl = pts[np.abs(pts @ best_n + best_d) <= inlier_eps]
    if len(inl) >= 3:
        c = inl.mean(axis=0)
        _, _, vt = np.linalg.svd(inl - c, full_matrices=False)
        n = vt[-1]
        if n @ best_n < 0:
            n = -n
        d = -float(n @ c)
        # keep the refit only if it does not lose support
        if np.count_nonzero(np.abs(pts @ n + d) <= inlier_eps) >= best_count:
            best_n, best_d = n, d
            best_count = int(np.count_nonzero(np.abs(pts @ n + d) <= inlier_eps))
    # orient the normal so most off-plane points sit on the positive side
    side = pts @ best_n + best_d
    off = np.abs(side) > inlier_eps
    if np.count_nonzero(side[off] < 0) > np.count_nonzero(side[off] > 0):
        best_n, best_d = -best_n, -best_d
    found = best_count >= MIN_INLIER_FRACTION * len(pts)
    return PlaneFit(tuple(float(v) for v in best_n), float(best_d), best_count, found)


@dataclass(frozen=True)
class PlaneRemoval:
    cloud: PointCloud
    plane: PlaneFit
    warning: bool

    @property
    def coefficients(self) -> tuple[float, float, float, float]:
        return self.plane.coefficients


def remove_plane(cloud: PointCloud, iterations: int = 200, inlier_eps: float = 0.005, seed: int = 0) -> PlaneRemoval:
    """Drop the dominant plane's inliers.

    When no plane holds at least 30% of the points the cloud comes back
    unchanged with ``warning`` set.
    """
    if len(cloud) < 3:
        raise ValueError("remove_plane needs a cloud with at least 3 points")
    fit = fit_plane_ransac(cloud.points, iterations, inlier_eps, seed)
    if not fit.found:
        return PlaneRemoval(cloud, fit, True)
    keep = np.abs(fit.distance(cloud.points)) > inlier_eps
    return PlaneRemoval(PointCloud(cloud.points[keep], cloud.frame), fit, False)


def gravity_alignment(plane: PlaneFit) -> Rigid3:
    """Rigid transform taking the plane to z = 0 with its normal along +z."""
    n = np.asarray(plane.normal, dtype=np.float64)
    z = np.array([0.0, 0.0, 1.0])
    v = np.cross(n, z)
    s = np.linalg.norm(v)
    c = float(n @ z)
    if s < 1e-12:
        R = np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    else:
        k = v / s
        kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
        R = np.eye(3) + s * kx + (1 - c) * (kx @ kx)
    # the point -d * n lies on the plane; send it to the origin
    t = -R @ (-plane.offset * n)
    return Rigid3(R, t)
