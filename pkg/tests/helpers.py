"""Scene builders shared by the tests."""

import math

import numpy as np

from scenesearch.geometry import RigidPose2D
from scenesearch.msgt import ObjectPoseHypothesis, PoseGrid, SceneTask
from scenesearch.synth import synthesize_scene


def hyp(mid, x, y, deg=0.0):
    return ObjectPoseHypothesis(mid, RigidPose2D(x, y, math.radians(deg)))


def make_task(models, truth, camera, grid=None, noise=0.0, seed=0, icp=None, delta=0.003):
    scene = synthesize_scene(models, truth, camera, noise, seed)
    if grid is None:
        grid = PoseGrid.around(scene.observed, snap=True)
    return SceneTask(scene.observed, camera, models, scene.required, grid, delta, icp)


def small_grid(center=(0.0, 0.0), n=3, step=0.04, yaw_deg=90.0):
    half = step * (n - 1) / 2
    return PoseGrid(center[0] - half, center[0] + half, center[1] - half, center[1] + half, step, math.radians(yaw_deg))


def brute_nearest(points, queries):
    """O(N*M) nearest distances, the reference for the k-d tree."""
    if len(points) == 0:
        return np.full(len(queries), np.inf)
    d = np.linalg.norm(queries[:, None, :] - points[None, :, :], axis=2)
    return d.min(axis=1)
