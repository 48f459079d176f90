"""Explanation cost: integer counts of points left unexplained between clouds.

A point is unexplained by a cloud when its nearest neighbour there is farther
than ``delta``; a distance of exactly ``delta`` still explains it.  The full
cost of a scene counts unexplained observed points plus unexplained rendered
points.  When a scene is assembled one object at a time without occluding
what is already rendered, the cost splits into per-object pieces
(:func:`delta_rendered_cost`, :func:`delta_observed_cost`) plus a
:func:`residual_cost` for observed points outside every object volume.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import PointCloud, RigidPose2D, SpatialIndex, VolumeApprox, points_in_volume

DEFAULT_DELTA = 0.003


@dataclass(frozen=True)
class CostBreakdown:
    delta_rendered: int
    delta_observed: int
    residual: int = 0

    def __post_init__(self):
        for name in ("delta_rendered", "delta_observed", "residual"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")
            object.__setattr__(self, name, int(v))

    @property
    def total(self) -> int:
        return self.delta_rendered + self.delta_observed + self.residual


def _pts(targets) -> np.ndarray:
    return targets.points if isinstance(targets, PointCloud) else np.asarray(targets, dtype=np.float64).reshape(-1, 3)


def count_unexplained(targets: PointCloud | np.ndarray, by: SpatialIndex, delta: float = DEFAULT_DELTA) -> int:
    pts = _pts(targets)
    if len(pts) == 0:
        return 0
    return int(np.count_nonzero(~by.within(pts, delta)))


def explanation_cost(observed: PointCloud, rendered: PointCloud, delta: float = DEFAULT_DELTA) -> int:
    return count_unexplained(observed, SpatialIndex(rendered), delta) + count_unexplained(
        rendered, SpatialIndex(observed), delta
    )


def delta_rendered_cost(new_points: PointCloud | np.ndarray, observed_index: SpatialIndex, delta: float = DEFAULT_DELTA) -> int:
    """Newly visible rendered points that no observed point explains."""
    return count_unexplained(new_points, observed_index, delta)


def delta_observed_cost(
    observed: PointCloud,
    vol: VolumeApprox,
    pose: RigidPose2D,
    new_points_index: SpatialIndex,
    delta: float = DEFAULT_DELTA,
) -> int:
    """Observed points inside the posed volume that the new points fail to explain."""
    inside = observed.points[points_in_volume(observed.points, vol, pose)]
    return count_unexplained(inside, new_points_index, delta)


def residual_cost(
    observed: PointCloud,
    union_volume: Sequence[tuple[VolumeApprox, RigidPose2D]],
    full_rendered_index: SpatialIndex,
    delta: float = DEFAULT_DELTA,
) -> int:
    """Observed points outside every volume that the complete render fails to explain."""
    pts = observed.points
    covered = np.zeros(len(pts), dtype=bool)
    for vol, pose in union_volume:
        covered |= points_in_volume(pts, vol, pose)
    return count_unexplained(pts[~covered], full_rendered_index, delta)
