"""Planar (x, y, yaw) point-to-point ICP."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import PointCloud, RigidPose2D, SpatialIndex


@dataclass(frozen=True)
class IcpConfig:
    max_correspondence: float = 0.02
    max_iterations: int = 30
    convergence_eps: float = 1e-6
    # evenly strided subset of the source used for matching; None keeps all points
    max_points: Optional[int] = 150

    def __post_init__(self):
        if not self.max_correspondence > 0:
            raise ValueError("max_correspondence must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")

    @classmethod
    def for_grid(cls, xy_step: float, **kw) -> "IcpConfig":
        """Correspondence cap at half the translation grid step."""
        return cls(max_correspondence=xy_step / 2, **kw)


@dataclass(frozen=True)
class IcpResult:
    refined_pose: RigidPose2D
    fitness: float
    iterations: int
    converged: bool


def fit_planar(src: np.ndarray, dst: np.ndarray) -> tuple[float, float, float]:
    """Least-squares yaw + xy translation mapping ``src`` onto ``dst`` (z ignored).

    Returns ``(tx, ty, phi)`` such that ``Rz(phi) @ src + t ~= dst``.
    """
    sc = src[:, :2].mean(axis=0)
    dc = dst[:, :2].mean(axis=0)
    s = src[:, :2] - sc
    d = dst[:, :2] - dc
    cross = float(np.sum(s[:, 0] * d[:, 1] - s[:, 1] * d[:, 0]))
    dot = float(np.sum(s[:, 0] * d[:, 0] + s[:, 1] * d[:, 1]))
    phi = math.atan2(cross, dot)
    c, sn = math.cos(phi), math.sin(phi)
    tx = dc[0] - (c * sc[0] - sn * sc[1])
    ty = dc[1] - (sn * sc[0] + c * sc[1])
    return tx, ty, phi


def _place(points: np.ndarray, pose: RigidPose2D) -> np.ndarray:
    return points @ pose.rotation().T + pose.translation()


def icp_refine(source: PointCloud, target_index: SpatialIndex, initial: RigidPose2D, cfg: IcpConfig = IcpConfig()) -> IcpResult:
    """Align ``source`` (expressed in the object frame) to the indexed target.

    ``initial`` places the source in the target frame.  Each iteration matches
    every source point to its nearest target within ``cfg.max_correspondence``,
    solves the planar rigid fit in closed form and applies it.  Stops when the
    RMS residual changes by less than ``convergence_eps`` or the increment is
    smaller than that.  ``fitness`` is the RMS over matched pairs at the
    returned pose.
    """
    src = source.points
    if len(src) == 0:
        raise ValueError("ICP source cloud is empty")
    if cfg.max_points is not None and len(src) > cfg.max_points:
        src = src[np.linspace(0, len(src) - 1, cfg.max_points).astype(np.int64)]
    pose = initial
    prev_rms = math.inf
    converged = False
    it = 0
    rms = math.inf
    for it in range(1, cfg.max_iterations + 1):
        moved = _place(src, pose)
        dist, idx = target_index.query(moved, upper_bound=cfg.max_correspondence)
        ok = np.isfinite(dist)
        if not np.any(ok):
            return IcpResult(initial, math.inf, it, False)
        rms = float(np.sqrt(np.mean(dist[ok] ** 2)))
        if abs(prev_rms - rms) < cfg.convergence_eps:
            converged = True
            break
        prev_rms = rms
        tx, ty, phi = fit_planar(moved[ok], target_index.points[idx[ok]])
        pose = RigidPose2D(tx, ty, phi).compose(pose)
        if math.hypot(tx, ty) < cfg.convergence_eps and abs(phi) < cfg.convergence_eps:
            converged = True
            break
    # fitness at the pose actually returned
    dist, _ = target_index.query(_place(src, pose), upper_bound=cfg.max_correspondence)
    ok = np.isfinite(dist)
    fitness = float(np.sqrt(np.mean(dist[ok] ** 2))) if np.any(ok) else rms
    return IcpResult(pose, fitness, it, converged)
