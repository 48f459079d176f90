"""JSON side files that travel with point clouds and meshes.

Models directory
    ``models.json`` holds ``{"models": [entry, ...]}``.  Each entry has
    ``id`` (string), ``mesh`` (OBJ path relative to the directory) and
    optionally ``symmetric`` (bool, default false) and ``volume``
    (``{"center": [x, y], "radius": r, "z_min": a, "z_max": b}``; the
    inscribed cylinder of the mesh footprint is used when absent).

Scene
    A scene is an ASCII PCD plus a sibling ``.json`` file with the same stem:
    ``{"camera": camera, "required": [ids], "truth": [pose, ...] | null,
    "noise_sigma": s, "seed": n}``.  A camera is ``{"fx", "fy", "cx", "cy",
    "width", "height", "rotation": 3x3 rows, "translation": [tx, ty, tz]}``
    with the rotation and translation mapping world to camera coordinates.

Poses
    ``{"poses": [pose, ...]}`` where a pose is
    ``{"id": model_id, "x": m, "y": m, "theta": rad}``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .fileio import FormatError, read_obj, read_pcd, write_obj, write_pcd
from .geometry import CameraModel, PointCloud, Rigid3, RigidPose2D, VolumeApprox
from .msgt import ObjectModel, ObjectPoseHypothesis
from .synth import GroundTruthScene

MANIFEST = "models.json"


def camera_to_dict(cam: CameraModel) -> dict:
    return {
        "fx": cam.fx,
        "fy": cam.fy,
        "cx": cam.cx,
        "cy": cam.cy,
        "width": cam.width,
        "height": cam.height,
        "rotation": cam.pose.rotation.tolist(),
        "translation": cam.pose.translation.tolist(),
    }


def camera_from_dict(d: Mapping) -> CameraModel:
    try:
        return CameraModel(
            float(d["fx"]),
            float(d["fy"]),
            float(d["cx"]),
            float(d["cy"]),
            int(d["width"]),
            int(d["height"]),
            Rigid3(d["rotation"], d["translation"]),
        )
    except KeyError as exc:
        raise FormatError(f"camera is missing field {exc.args[0]!r}") from exc


def pose_to_dict(h: ObjectPoseHypothesis) -> dict:
    return {"id": h.model_id, "x": h.pose.x, "y": h.pose.y, "theta": h.pose.theta}


def pose_from_dict(d: Mapping) -> ObjectPoseHypothesis:
    try:
        return ObjectPoseHypothesis(str(d["id"]), RigidPose2D(float(d["x"]), float(d["y"]), float(d["theta"])))
    except KeyError as exc:
        raise FormatError(f"pose is missing field {exc.args[0]!r}") from exc


def write_poses(path, poses: Sequence[ObjectPoseHypothesis], extra: Optional[dict] = None) -> None:
    doc = {"poses": [pose_to_dict(h) for h in poses]}
    doc.update(extra or {})
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_poses(path) -> list[ObjectPoseHypothesis]:
    doc = _load_json(path)
    if "poses" in doc:
        return [pose_from_dict(p) for p in doc["poses"]]
    if doc.get("truth") is not None:
        return [pose_from_dict(p) for p in doc["truth"]]
    raise FormatError(f"{path}: no 'poses' or 'truth' list")


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc


def scene_sidecar(pcd_path) -> Path:
    return Path(pcd_path).with_suffix(".json")


def write_scene(pcd_path, scene: GroundTruthScene, include_truth: bool = True) -> None:
    write_pcd(pcd_path, scene.observed)
    doc = {
        "camera": camera_to_dict(scene.camera),
        "required": list(scene.required),
        "truth": [pose_to_dict(h) for h in scene.truth] if include_truth else None,
        "noise_sigma": scene.noise_sigma,
        "seed": scene.seed,
    }
    scene_sidecar(pcd_path).write_text(json.dumps(doc, indent=2) + "\n")


def read_scene(pcd_path) -> tuple[PointCloud, CameraModel, tuple[str, ...], Optional[list[ObjectPoseHypothesis]]]:
    """Observed cloud, camera, required ids and (when recorded) the true poses."""
    side = scene_sidecar(pcd_path)
    if not side.exists():
        raise FormatError(f"scene side file {side} not found")
    doc = _load_json(side)
    if "camera" not in doc or "required" not in doc:
        raise FormatError(f"{side}: needs 'camera' and 'required'")
    truth = doc.get("truth")
    return (
        read_pcd(pcd_path),
        camera_from_dict(doc["camera"]),
        tuple(str(r) for r in doc["required"]),
        None if truth is None else [pose_from_dict(p) for p in truth],
    )


def write_models(directory, models: Mapping[str, ObjectModel]) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for mid in sorted(models):
        m = models[mid]
        write_obj(d / f"{mid}.obj", m.mesh)
        v = m.volume
        entries.append(
            {
                "id": mid,
                "mesh": f"{mid}.obj",
                "symmetric": m.rotationally_symmetric,
                "volume": {"center": list(v.center_offset), "radius": v.radius, "z_min": v.z_min, "z_max": v.z_max},
            }
        )
    (d / MANIFEST).write_text(json.dumps({"models": entries}, indent=2) + "\n")


def read_models(directory) -> dict[str, ObjectModel]:
    d = Path(directory)
    manifest = d / MANIFEST
    if not manifest.exists():
        raise FormatError(f"no {MANIFEST} in {d}")
    doc = _load_json(manifest)
    out: dict[str, ObjectModel] = {}
    for e in doc.get("models", []):
        try:
            mid, mesh_file = str(e["id"]), e["mesh"]
        except KeyError as exc:
            raise FormatError(f"{manifest}: model entry missing {exc.args[0]!r}") from exc
        if mid in out:
            raise FormatError(f"{manifest}: duplicate model id {mid!r}")
        mesh = read_obj(d / mesh_file)
        vol = None
        if e.get("volume") is not None:
            v = e["volume"]
            vol = VolumeApprox(tuple(v["center"]), float(v["radius"]), float(v["z_min"]), float(v["z_max"]))
        out[mid] = ObjectModel.from_mesh(mid, mesh, bool(e.get("symmetric", False)), vol)
    if not out:
        raise FormatError(f"{manifest}: no models listed")
    return out
