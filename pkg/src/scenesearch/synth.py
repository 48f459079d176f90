"""Synthetic table-top scenes with known ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .geometry import CameraModel, PointCloud, RigidPose2D, TriMesh, look_at
from .msgt import ObjectModel, ObjectPoseHypothesis
from .render import NEAR_PLANE, depth_to_cloud, render_depth


def default_camera(width: int = 160, height: int = 120, focal: float = 300.0) -> CameraModel:
    """Desk-scale camera about 0.6 m from the table origin, pitched down 45 degrees."""
    scale = width / 160.0
    return CameraModel(
        focal * scale,
        focal * scale,
        (width - 1) / 2.0,
        (height - 1) / 2.0,
        width,
        height,
        look_at((0.0, -0.42, 0.45), (0.0, 0.0, 0.03)),
    )


@dataclass(frozen=True, eq=False)
class GroundTruthScene:
    observed: PointCloud
    camera: CameraModel
    truth: tuple[ObjectPoseHypothesis, ...]
    noise_sigma: float = 0.0
    seed: int = 0

    @property
    def required(self) -> tuple[str, ...]:
        return tuple(sorted(h.model_id for h in self.truth))


class OutOfFrustum(ValueError):
    pass


def check_in_frustum(model: ObjectModel, pose: RigidPose2D, camera: CameraModel) -> None:
    world = model.mesh.vertices @ pose.rotation().T + pose.translation()
    cam = camera.pose.apply(world)
    if np.any(cam[:, 2] <= NEAR_PLANE):
        raise OutOfFrustum(f"{model.id} at {pose} is behind the camera")
    u = camera.fx * cam[:, 0] / cam[:, 2] + camera.cx
    v = camera.fy * cam[:, 1] / cam[:, 2] + camera.cy
    if np.any(u < 0) or np.any(u > camera.width - 1) or np.any(v < 0) or np.any(v > camera.height - 1):
        raise OutOfFrustum(f"{model.id} at {pose} leaves the image")


def synthesize_scene(
    models: Mapping[str, ObjectModel],
    truth: Sequence[ObjectPoseHypothesis],
    camera: CameraModel,
    noise_sigma: float = 0.0,
    seed: int = 0,
    table: Optional[TriMesh] = None,
) -> GroundTruthScene:
    """Render the true scene, back-project it and add isotropic Gaussian noise.

    ``table`` is an extra world-frame mesh (e.g. a slab under ``z = 0``)
    rendered along with the objects.
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    for h in truth:
        check_in_frustum(models[h.model_id], h.pose, camera)
    scene = [(models[h.model_id].mesh, h.pose) for h in truth]
    if table is not None:
        scene.append((table, RigidPose2D(0.0, 0.0, 0.0)))
    img = render_depth(scene, camera)
    pts = depth_to_cloud(img).points
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        pts = pts + rng.normal(0.0, noise_sigma, size=pts.shape)
    return GroundTruthScene(PointCloud(pts, "world"), camera, tuple(truth), float(noise_sigma), int(seed))


def footprint_radius(model: ObjectModel) -> float:
    return model.mesh.footprint_radius()


def random_layout(
    models: Mapping[str, ObjectModel],
    ids: Sequence[str],
    rng: np.random.Generator,
    x_range=(-0.1, 0.1),
    y_range=(-0.1, 0.1),
    yaw_step: float | None = None,
    xy_step: float | None = None,
    origin=(0.0, 0.0),
    clearance: float = 0.01,
    camera: CameraModel | None = None,
    max_tries: int = 2000,
) -> list[ObjectPoseHypothesis]:
    """Random non-touching placement; snaps to a grid when steps are given."""
    out: list[ObjectPoseHypothesis] = []
    for mid in ids:
        m = models[mid]
        r = footprint_radius(m)
        for _ in range(max_tries):
            if xy_step:
                ix = rng.integers(math.ceil((x_range[0] - origin[0]) / xy_step - 1e-9), math.floor((x_range[1] - origin[0]) / xy_step + 1e-9) + 1)
                iy = rng.integers(math.ceil((y_range[0] - origin[1]) / xy_step - 1e-9), math.floor((y_range[1] - origin[1]) / xy_step + 1e-9) + 1)
                x, y = origin[0] + xy_step * ix, origin[1] + xy_step * iy
            else:
                x, y = rng.uniform(*x_range), rng.uniform(*y_range)
            if m.rotationally_symmetric:
                th = 0.0
            elif yaw_step:
                th = yaw_step * int(rng.integers(0, int(round(2 * math.pi / yaw_step))))
            else:
                th = rng.uniform(0, 2 * math.pi)
            pose = RigidPose2D(x, y, th)
            ok = all(
                math.hypot(x - o.pose.x, y - o.pose.y) > r + footprint_radius(models[o.model_id]) + clearance for o in out
            )
            if ok and camera is not None:
                try:
                    check_in_frustum(m, pose, camera)
                except OutOfFrustum:
                    ok = False
            if ok:
                out.append(ObjectPoseHypothesis(mid, pose))
                break
        else:
            raise RuntimeError(f"could not place {mid} without collisions")
    return out


def occluded_fraction(
    models: Mapping[str, ObjectModel],
    camera: CameraModel,
    target: ObjectPoseHypothesis,
    others: Sequence[ObjectPoseHypothesis],
) -> float:
    """Share of ``target``'s own pixels hidden by ``others`` in the joint render."""
    alone = render_depth([(models[target.model_id].mesh, target.pose)], camera).depth
    rest = render_depth([(models[h.model_id].mesh, h.pose) for h in others], camera).depth
    px = np.isfinite(alone)
    if not px.any():
        return 1.0
    return float(np.count_nonzero(rest[px] <= alone[px]) / np.count_nonzero(px))


def occlusion_pair(
    models: Mapping[str, ObjectModel],
    camera: CameraModel,
    rng: np.random.Generator,
    xy_step: float = 0.04,
    yaw_step: float = math.radians(22.5),
    min_occluded: float = 0.5,
    max_occluded: float = 0.85,
    clearance: float = 0.005,
    max_tries: int = 5000,
) -> tuple[ObjectPoseHypothesis, ObjectPoseHypothesis, float]:
    """On-grid (front, rear, occluded share) with the rear object partly hidden.

    The front object sits two lattice steps closer to the camera (-y) and at
    most one step to either side.  ``max_occluded`` keeps enough of the rear
    object in view for it to be localizable at all.
    """
    ids = sorted(models)
    n_yaw = int(round(2 * math.pi / yaw_step))

    def yaw(mid):
        return 0.0 if models[mid].rotationally_symmetric else yaw_step * int(rng.integers(n_yaw))

    for _ in range(max_tries):
        f, r = (str(v) for v in rng.choice(ids, 2, replace=False))
        rx, ry = xy_step * int(rng.integers(-2, 3)), xy_step * int(rng.integers(-1, 3))
        fx, fy = rx + xy_step * int(rng.integers(-1, 2)), ry - 2 * xy_step
        if math.hypot(rx - fx, ry - fy) <= footprint_radius(models[f]) + footprint_radius(models[r]) + clearance:
            continue
        front = ObjectPoseHypothesis(f, RigidPose2D(fx, fy, yaw(f)))
        rear = ObjectPoseHypothesis(r, RigidPose2D(rx, ry, yaw(r)))
        try:
            check_in_frustum(models[f], front.pose, camera)
            check_in_frustum(models[r], rear.pose, camera)
        except OutOfFrustum:
            continue
        hidden = occluded_fraction(models, camera, rear, [front])
        if min_occluded <= hidden <= max_occluded:
            return front, rear, hidden
    raise RuntimeError("no occluding layout found")
