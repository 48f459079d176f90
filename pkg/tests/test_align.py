import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scenesearch.align import IcpConfig, fit_planar, icp_refine
from scenesearch.geometry import PointCloud, RigidPose2D, SpatialIndex, shortest_angular_difference
from scenesearch.render import depth_to_cloud, render_depth


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-3.1, 3.1))
def test_fit_planar_recovers_exact_transform(tx, ty, phi):
    src = np.random.default_rng(0).normal(size=(30, 3))
    p = RigidPose2D(tx, ty, phi)
    dst = src @ p.rotation().T + p.translation()
    ex, ey, ephi = fit_planar(src, dst)
    assert ex == pytest.approx(tx, abs=1e-9)
    assert ey == pytest.approx(ty, abs=1e-9)
    assert shortest_angular_difference(ephi, phi) < 1e-9


def l_shape():
    """Asymmetric solid blob: a dense random fill of an L-shaped prism."""
    rng = np.random.default_rng(7)
    a = rng.uniform([0, 0, 0], [0.06, 0.015, 0.02], size=(400, 3))
    b = rng.uniform([0, 0.015, 0], [0.015, 0.045, 0.02], size=(250, 3))
    return np.vstack([a, b])


def test_icp_recovers_small_offset():
    model = l_shape()
    truth = RigidPose2D(0.10, -0.05, 0.3)
    target = model @ truth.rotation().T + truth.translation()
    start = RigidPose2D(0.105, -0.047, 0.3 + math.radians(4))
    res = icp_refine(PointCloud(model), SpatialIndex(PointCloud(target)), start, IcpConfig(max_points=None, max_iterations=100))
    assert math.hypot(res.refined_pose.x - truth.x, res.refined_pose.y - truth.y) < 1e-4
    assert shortest_angular_difference(res.refined_pose.theta, truth.theta) < math.radians(0.1)
    assert res.fitness < 1e-4


def test_icp_at_truth_stays_put():
    model = l_shape()
    truth = RigidPose2D(0.0, 0.0, 1.0)
    target = model @ truth.rotation().T + truth.translation()
    res = icp_refine(PointCloud(model), SpatialIndex(PointCloud(target)), truth, IcpConfig(max_points=None))
    assert res.converged
    assert res.fitness == pytest.approx(0.0, abs=1e-12)
    assert math.hypot(res.refined_pose.x, res.refined_pose.y) < 1e-12


def test_icp_without_matches_returns_initial():
    start = RigidPose2D(5.0, 5.0, 0.0)
    res = icp_refine(PointCloud(l_shape()), SpatialIndex(PointCloud(l_shape())), start, IcpConfig(max_correspondence=0.01))
    assert res.refined_pose == start
    assert math.isinf(res.fitness)
    assert not res.converged


def test_icp_rejects_empty_source():
    with pytest.raises(ValueError):
        icp_refine(PointCloud.empty(), SpatialIndex(PointCloud(l_shape())), RigidPose2D(0, 0))


def test_icp_config_validation():
    with pytest.raises(ValueError):
        IcpConfig(max_correspondence=0)
    with pytest.raises(ValueError):
        IcpConfig(max_iterations=0)
    assert IcpConfig.for_grid(0.04).max_correspondence == pytest.approx(0.02)


def test_icp_on_rendered_wedge(models, camera):
    truth = RigidPose2D(0.012, -0.009, math.radians(50))
    obs = depth_to_cloud(render_depth([(models["wedge"].mesh, truth)], camera))
    grid_pose = RigidPose2D(0.0, 0.0, math.radians(45))
    vis = depth_to_cloud(render_depth([(models["wedge"].mesh, grid_pose)], camera)).points
    local = (vis - grid_pose.translation()) @ grid_pose.rotation()
    res = icp_refine(PointCloud(local), SpatialIndex(obs), grid_pose, IcpConfig.for_grid(0.04))
    assert math.hypot(res.refined_pose.x - truth.x, res.refined_pose.y - truth.y) < 0.005
    assert shortest_angular_difference(res.refined_pose.theta, truth.theta) < math.radians(2)
