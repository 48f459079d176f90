"""End-to-end pipeline: (synthesize) -> preprocess -> solve -> evaluate -> write.

Failures are re-raised as :class:`StageError` naming the stage they came from.
Outputs are ``results.json`` (configuration, per-trial records and the
aggregate report), ``histogram.csv`` (correct counts per threshold pair) and
``timing.json``.  Wall-clock numbers live only in ``timing.json`` so the
other two files are byte-identical across reruns with the same seeds.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from .config import ConfigError, RunConfig
from .evaluation import EvalReport, evaluate
from .geometry import CameraModel, PointCloud, Rigid3, RigidPose2D, transform_cloud
from .msgt import ObjectModel, ObjectPoseHypothesis, PoseGrid, SceneTask
from .preprocess import gravity_alignment, remove_plane
from .scenefiles import pose_to_dict, read_scene
from .search import SearchResult, solve
from .shapes import demo_models, table_mesh
from .synth import GroundTruthScene, default_camera, random_layout, synthesize_scene


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class SynthesisSpec:
    """Recipe for randomized synthetic trials."""

    objects: tuple[str, ...]
    trials: int = 1
    noise_sigma: float = 0.0
    seed: int = 0
    on_grid: bool = True
    table: bool = False
    x_range: tuple[float, float] = (-0.08, 0.08)
    y_range: tuple[float, float] = (-0.08, 0.08)
    clearance: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if len(self.objects) == 0:
            raise ConfigError("a scene needs at least one object (K >= 1)")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")

    @classmethod
    def from_dict(cls, d: Mapping) -> "SynthesisSpec":
        known = {f for f in cls.__dataclass_fields__}
        extra = sorted(set(d) - known)
        if extra:
            raise ConfigError(f"unknown synthesis fields {extra}")
        kw = dict(d)
        for k in ("x_range", "y_range", "objects"):
            if k in kw:
                kw[k] = tuple(kw[k])
        return cls(**kw)


def synthesize_trials(spec: SynthesisSpec, models: Mapping[str, ObjectModel], cfg: RunConfig, camera: Optional[CameraModel] = None) -> list[GroundTruthScene]:
    missing = sorted(set(spec.objects) - set(models))
    if missing:
        raise ConfigError(f"synthesis asks for unknown models {missing}")
    cam = camera or default_camera()
    table = table_mesh() if spec.table else None
    scenes = []
    for trial in range(spec.trials):
        rng = np.random.default_rng([spec.seed, trial])
        truth = random_layout(
            models,
            spec.objects,
            rng,
            spec.x_range,
            spec.y_range,
            yaw_step=cfg.yaw_step if spec.on_grid else None,
            xy_step=cfg.grid_xy if spec.on_grid else None,
            clearance=spec.clearance,
            camera=cam,
        )
        noise_seed = int(rng.integers(0, 2**31 - 1))
        scenes.append(synthesize_scene(models, truth, cam, spec.noise_sigma, noise_seed, table=table))
    return scenes


@dataclass
class Preprocessed:
    observed: PointCloud
    camera: CameraModel
    plane: Optional[tuple[float, float, float, float]] = None
    warning: bool = False
    alignment: Optional[Rigid3] = None


def preprocess(observed: PointCloud, camera: CameraModel, cfg: RunConfig) -> Preprocessed:
    """Optionally strip the table and move everything into the table-aligned frame."""
    if not cfg.remove_table:
        return Preprocessed(observed, camera)
    res = remove_plane(observed, cfg.ransac_iterations, cfg.inlier_eps, cfg.seed)
    if res.warning:
        return Preprocessed(res.cloud, camera, res.coefficients, True)
    T = gravity_alignment(res.plane)
    cloud = transform_cloud(res.cloud, T)
    cam = CameraModel(camera.fx, camera.fy, camera.cx, camera.cy, camera.width, camera.height, camera.pose.compose(T.inverse()))
    return Preprocessed(cloud, cam, res.coefficients, False, T)


def build_task(observed: PointCloud, camera: CameraModel, models: Mapping[str, ObjectModel], required: Sequence[str], cfg: RunConfig) -> SceneTask:
    if len(required) == 0:
        raise ConfigError("a scene needs at least one required object (K >= 1)")
    if len(observed) == 0:
        raise ConfigError("observed cloud is empty")
    grid = PoseGrid.around(observed, cfg.grid_xy, cfg.yaw_step, snap=True)
    return SceneTask(observed, camera, models, tuple(required), grid, cfg.delta, cfg.icp_config())


@dataclass
class ExperimentResult:
    report: Optional[EvalReport]
    records: list[dict] = field(default_factory=list)
    results: list[SearchResult] = field(default_factory=list, repr=False)


def _stage(name: str, fn: Callable, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - relabel and re-raise
        raise StageError(name, exc) from exc


def _finite(v):
    return None if v is None or (isinstance(v, float) and not math.isfinite(v)) else v


Source = Union[SynthesisSpec, Sequence[GroundTruthScene], Sequence[Union[str, Path]]]


def run_experiment(
    source: Source,
    cfg: RunConfig = RunConfig(),
    models: Optional[Mapping[str, ObjectModel]] = None,
    out_dir: Optional[Union[str, Path]] = None,
    on_event: Optional[Callable[[dict], None]] = None,
) -> ExperimentResult:
    """Run every trial and score all objects together.

    ``source`` is a synthesis recipe, ready-made scenes, or PCD paths with
    their JSON side files.  Scenes without recorded truth are solved but
    not scored.
    """
    models = dict(models) if models is not None else demo_models()
    if isinstance(source, SynthesisSpec):
        scenes = _stage("synthesize", synthesize_trials, source, models, cfg)
        loaded = [(s.observed, s.camera, s.required, list(s.truth)) for s in scenes]
    else:
        loaded = []
        for item in source:
            if isinstance(item, GroundTruthScene):
                loaded.append((item.observed, item.camera, item.required, list(item.truth)))
            else:
                loaded.append(_stage("load", read_scene, item))
    if not loaded:
        raise ConfigError("experiment has no scenes")

    records: list[dict] = []
    results: list[SearchResult] = []
    all_pred: list[ObjectPoseHypothesis] = []
    all_truth: list[ObjectPoseHypothesis] = []
    timings: list[dict] = []
    for trial, (observed, camera, required, truth) in enumerate(loaded):
        if len(required) == 0:
            raise ConfigError(f"trial {trial}: scene lists no required objects (K = 0)")
        pre = _stage("preprocess", preprocess, observed, camera, cfg)
        task = _stage("solve", build_task, pre.observed, pre.camera, models, required, cfg)
        res: SearchResult = _stage("solve", solve, task, cfg.search_config(), on_event)
        results.append(res)
        predicted = res.poses
        if pre.alignment is not None:
            # report poses in the input frame
            back = pre.alignment.inverse()
            predicted = [_pose_in_frame(h, back) for h in predicted]
        rec = {
            "trial": trial,
            "required": list(task.required),
            "observed_points": len(observed),
            "cost": res.cost,
            "bound_certificate": _finite(res.bound_certificate),
            "certified": res.certified,
            "expansions": res.expansions,
            "generated": res.generated,
            "timed_out": res.timed_out,
            "predicted": [pose_to_dict(h) for h in predicted],
            "truth": None if truth is None else [pose_to_dict(h) for h in truth],
            "table_plane": None if pre.plane is None else list(pre.plane),
            "table_warning": pre.warning,
        }
        if truth is not None and res.goal is not None:
            rep = _stage("evaluate", evaluate, predicted, truth, models)
            rec["translation_errors"] = [e.translation for e in rep.errors]
            rec["yaw_errors"] = [e.yaw for e in rep.errors]
            all_pred.extend(predicted)
            all_truth.extend(truth)
        records.append(rec)
        timings.append({"trial": trial, "wall_time": res.wall_time})

    report = None
    if all_truth:
        stats = {
            "trials": len(records),
            "solved": sum(r["cost"] is not None for r in records),
            "mean_expansions": float(np.mean([r["expansions"] for r in records])),
            "mean_generated": float(np.mean([r["generated"] for r in records])),
        }
        report = _stage("evaluate", evaluate, all_pred, all_truth, models, stats=stats)
    out = ExperimentResult(report, records, results)
    if out_dir is not None:
        _stage("write", write_outputs, out, cfg, Path(out_dir), timings)
    return out


def _pose_in_frame(h: ObjectPoseHypothesis, T: Rigid3) -> ObjectPoseHypothesis:
    p = T.apply(np.array([[h.pose.x, h.pose.y, 0.0]]))[0]
    heading = T.rotation @ np.array([math.cos(h.pose.theta), math.sin(h.pose.theta), 0.0])
    return ObjectPoseHypothesis(h.model_id, RigidPose2D(float(p[0]), float(p[1]), math.atan2(heading[1], heading[0])))


def write_outputs(result: ExperimentResult, cfg: RunConfig, out_dir: Path, timings: Optional[list[dict]] = None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "config": cfg.to_dict(),
        "trials": result.records,
        "report": None if result.report is None else result.report.to_dict(),
    }
    (out_dir / "results.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    with open(out_dir / "histogram.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dt_m", "dtheta_deg", "correct", "total"])
        if result.report is not None:
            for dt, dth, c, n in result.report.histogram_rows():
                w.writerow([repr(dt), repr(round(dth, 9)), c, n])
    if timings is not None:
        (out_dir / "timing.json").write_text(json.dumps(timings, indent=2) + "\n")
