"""Generative multi-object pose search.

Known rigid objects are located in a depth point cloud by rendering
hypothesized scenes, scoring them against the observation, and running a
bounded-suboptimal heuristic search over scenes built one non-occluding
object at a time.
"""

from .config import ConfigError, RunConfig, load_config
from .cost import CostBreakdown, explanation_cost
from .evaluation import EvalReport, evaluate
from .experiment import StageError, SynthesisSpec, run_experiment
from .geometry import CameraModel, PointCloud, Rigid3, RigidPose2D, SpatialIndex, TriMesh, VolumeApprox
from .msgt import ObjectModel, ObjectPoseHypothesis, PoseGrid, SceneState, SceneTask, successors
from .render import DepthImage, render_depth
from .search import SearchConfig, SearchResult, brute_force_oracle, solve

__version__ = "0.1.0"

__all__ = [
    "CameraModel",
    "ConfigError",
    "CostBreakdown",
    "DepthImage",
    "EvalReport",
    "ObjectModel",
    "ObjectPoseHypothesis",
    "PointCloud",
    "PoseGrid",
    "Rigid3",
    "RigidPose2D",
    "RunConfig",
    "SceneState",
    "SceneTask",
    "SearchConfig",
    "SearchResult",
    "SpatialIndex",
    "StageError",
    "SynthesisSpec",
    "TriMesh",
    "VolumeApprox",
    "brute_force_oracle",
    "evaluate",
    "explanation_cost",
    "load_config",
    "render_depth",
    "run_experiment",
    "solve",
    "successors",
]
