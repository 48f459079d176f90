import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from helpers import brute_nearest
from scenesearch.cost import (
    CostBreakdown,
    count_unexplained,
    delta_observed_cost,
    delta_rendered_cost,
    explanation_cost,
    residual_cost,
)
from scenesearch.geometry import PointCloud, RigidPose2D, SpatialIndex, VolumeApprox

small = st.floats(-0.05, 0.05, allow_nan=False)
clouds = arrays(np.float64, st.tuples(st.integers(0, 25), st.just(3)), elements=small)


def brute_cost(obs, ren, delta):
    return int(np.sum(brute_nearest(ren, obs) > delta) + np.sum(brute_nearest(obs, ren) > delta))


def test_identical_clouds_cost_nothing():
    pts = np.random.default_rng(0).normal(size=(50, 3))
    assert explanation_cost(PointCloud(pts), PointCloud(pts)) == 0


def test_empty_render_charges_every_observed_point():
    pts = np.random.default_rng(0).normal(size=(17, 3))
    assert explanation_cost(PointCloud(pts), PointCloud.empty()) == 17
    assert explanation_cost(PointCloud.empty(), PointCloud(pts)) == 17
    assert explanation_cost(PointCloud.empty(), PointCloud.empty()) == 0


def test_distance_exactly_delta_is_explained():
    a = PointCloud(np.array([[0.0, 0.0, 0.0]]))
    b = PointCloud(np.array([[0.003, 0.0, 0.0]]))
    assert explanation_cost(a, b, 0.003) == 0
    c = PointCloud(np.array([[0.0031, 0.0, 0.0]]))
    assert explanation_cost(a, c, 0.003) == 2


def test_zero_delta_needs_coincident_points():
    a = PointCloud(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]))
    b = PointCloud(np.array([[0.0, 0.0, 0.0]]))
    assert explanation_cost(a, b, 0.0) == 1


@settings(max_examples=80)
@given(clouds, clouds, st.floats(0.0, 0.05))
def test_matches_brute_force_and_is_symmetric(o, r, delta):
    c = explanation_cost(PointCloud(o), PointCloud(r), delta)
    assert c == brute_cost(o, r, delta)
    assert c == explanation_cost(PointCloud(r), PointCloud(o), delta)
    assert 0 <= c <= len(o) + len(r)


def test_cost_breakdown_validation():
    assert CostBreakdown(1, 2, 3).total == 6
    with pytest.raises(ValueError):
        CostBreakdown(-1, 0)
    with pytest.raises(ValueError):
        CostBreakdown(0.5, 0)


def test_partial_costs():
    obs = PointCloud(np.array([[0.0, 0.0, 0.01], [0.0, 0.0, 0.02], [0.5, 0.5, 0.01]]))
    idx = SpatialIndex(obs)
    new = np.array([[0.0, 0.0, 0.011], [0.2, 0.0, 0.0]])
    assert delta_rendered_cost(new, idx, 0.003) == 1
    vol = VolumeApprox((0.0, 0.0), 0.01, 0.0, 0.05)
    # the two observed points inside the volume: one explained by the new points
    assert delta_observed_cost(obs, vol, RigidPose2D(0, 0), SpatialIndex(new), 0.003) == 1
    # the point at (0.5, 0.5) is outside every volume and unexplained
    assert residual_cost(obs, [(vol, RigidPose2D(0, 0))], SpatialIndex(new), 0.003) == 1
    assert residual_cost(obs, [], SpatialIndex(new), 0.003) == 2


def test_count_unexplained_empty_targets():
    assert count_unexplained(np.zeros((0, 3)), SpatialIndex(PointCloud.empty())) == 0
