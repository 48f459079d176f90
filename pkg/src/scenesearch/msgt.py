"""Monotone scene generation tree.

A node is a partial assignment of object poses.  A child adds exactly one
object that does not hide any pixel already rendered by its parent, so the
rendered cloud only ever grows down the tree.  Edge costs are the per-object
pieces of the explanation cost (see :mod:`scenesearch.cost`), with the
residual term charged on edges that complete the assignment; the ``g`` of a
goal is therefore its full explanation cost.

States keep only the pixels their last object added (plus a parent link), so
thousands of open states stay cheap; the full depth buffer is rebuilt on
demand.
"""

from __future__ import annotations

import math
import multiprocessing as mp
from collections import Counter, OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .align import IcpConfig, icp_refine
from .cost import DEFAULT_DELTA, CostBreakdown, count_unexplained
from .geometry import (
    TWO_PI,
    CameraModel,
    PointCloud,
    RigidPose2D,
    SpatialIndex,
    TriMesh,
    VolumeApprox,
    inscribed_cylinder,
    points_in_volume,
    shortest_angular_difference,
)
from .render import EPS_RENDER, DepthImage, backproject, backproject_pixels, render_depth

KEY_RESOLUTION = 1e-4
_YAW_TICKS = int(round(TWO_PI / KEY_RESOLUTION))


@dataclass(frozen=True)
class ObjectModel:
    id: str
    mesh: TriMesh
    volume: VolumeApprox
    rotationally_symmetric: bool = False

    def __post_init__(self):
        lo, hi = self.mesh.bounds()
        v = self.volume
        cx, cy = v.center_offset
        tol = 1e-9
        inside = (
            cx - v.radius >= lo[0] - tol and cx + v.radius <= hi[0] + tol
            and cy - v.radius >= lo[1] - tol and cy + v.radius <= hi[1] + tol
            and v.z_min >= lo[2] - tol and v.z_max <= hi[2] + tol
        )
        if not inside:
            raise ValueError(f"volume of {self.id!r} is not inside the mesh bounding box")

    @classmethod
    def from_mesh(cls, id: str, mesh: TriMesh, rotationally_symmetric: bool = False, volume: VolumeApprox | None = None):
        return cls(id, mesh, volume or inscribed_cylinder(mesh), rotationally_symmetric)


@dataclass(frozen=True, order=True)
class ObjectPoseHypothesis:
    model_id: str
    pose: RigidPose2D = field(compare=False)

    def sort_key(self):
        return (self.model_id, self.pose.x, self.pose.y, self.pose.theta)

    def key(self) -> tuple:
        p = self.pose
        yaw = int(round(p.theta / KEY_RESOLUTION)) % _YAW_TICKS
        return (self.model_id, int(round(p.x / KEY_RESOLUTION)), int(round(p.y / KEY_RESOLUTION)), yaw)


@dataclass(frozen=True)
class PoseGrid:
    """Discrete candidate poses: ``x_min + i * xy_step`` (same for y) and ``k * yaw_step``."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    xy_step: float = 0.04
    yaw_step: float = math.radians(22.5)

    def __post_init__(self):
        if not (self.xy_step > 0 and self.yaw_step > 0):
            raise ValueError("grid steps must be positive")
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise ValueError("grid bounds are empty")

    @staticmethod
    def _axis(lo: float, hi: float, step: float) -> list[float]:
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return [lo + step * i for i in range(n)]

    def xs(self) -> list[float]:
        return self._axis(self.x_min, self.x_max, self.xy_step)

    def ys(self) -> list[float]:
        return self._axis(self.y_min, self.y_max, self.xy_step)

    def yaws(self, symmetric: bool = False) -> list[float]:
        if symmetric:
            return [0.0]
        n = TWO_PI / self.yaw_step
        count = int(round(n)) if abs(n - round(n)) < 1e-9 else int(math.ceil(n))
        return [self.yaw_step * k for k in range(count)]

    def poses(self, symmetric: bool = False) -> list[RigidPose2D]:
        return [RigidPose2D(x, y, t) for x in self.xs() for y in self.ys() for t in self.yaws(symmetric)]

    def size(self, symmetric: bool = False) -> int:
        return len(self.xs()) * len(self.ys()) * len(self.yaws(symmetric))

    def contains_refinement(self, on_grid: RigidPose2D, refined: RigidPose2D, symmetric: bool) -> bool:
        """Whether an ICP-refined pose stayed inside its grid cell."""
        half = self.xy_step / 2 + 1e-9
        if abs(refined.x - on_grid.x) > half or abs(refined.y - on_grid.y) > half:
            return False
        if symmetric:
            return True
        return shortest_angular_difference(refined.theta, on_grid.theta) <= self.yaw_step / 2 + 1e-9

    @classmethod
    def around(
        cls, cloud: PointCloud, xy_step: float = 0.04, yaw_step: float = math.radians(22.5), snap: bool = False
    ) -> "PoseGrid":
        """Observed cloud's x/y bounding box inflated by one step.

        With ``snap`` the bounds are widened further to multiples of ``xy_step``
        so grid points sit on the lattice through the world origin.
        """
        lo, hi = cloud.bounds()
        x0, x1, y0, y1 = lo[0] - xy_step, hi[0] + xy_step, lo[1] - xy_step, hi[1] + xy_step
        if snap:
            x0, y0 = (xy_step * math.floor(v / xy_step + 1e-9) for v in (x0, y0))
            x1, y1 = (xy_step * math.ceil(v / xy_step - 1e-9) for v in (x1, y1))
        return cls(x0, x1, y0, y1, xy_step, yaw_step)


@dataclass(frozen=True, eq=False)
class SceneTask:
    observed: PointCloud
    camera: CameraModel
    models: Mapping[str, ObjectModel]
    required: tuple[str, ...]
    grid: PoseGrid
    delta: float = DEFAULT_DELTA
    icp: Optional[IcpConfig] = None
    eps_render: float = EPS_RENDER
    observed_index: SpatialIndex = field(init=False, repr=False)

    def __post_init__(self):
        req = tuple(sorted(self.required))
        if len(req) < 1:
            raise ValueError("a scene needs at least one required object (K >= 1)")
        missing = sorted(set(req) - set(self.models))
        if missing:
            raise ValueError(f"required objects without a model: {missing}")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        object.__setattr__(self, "required", req)
        object.__setattr__(self, "models", dict(self.models))
        object.__setattr__(self, "observed_index", SpatialIndex(self.observed))

    def __getstate__(self):
        state = dict(self.__dict__)
        state.pop("observed_index", None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        object.__setattr__(self, "observed_index", SpatialIndex(self.observed))

    @property
    def K(self) -> int:
        return len(self.required)

    def joint_size(self) -> int:
        n = 1
        for mid in self.required:
            n *= self.grid.size(self.models[mid].rotationally_symmetric)
        return n


class SceneState:
    """Immutable search node; see module docstring for the storage scheme."""

    __slots__ = (
        "assignments", "parent", "pixels", "values", "cloud_size", "g",
        "h_overlap", "canonical_key", "edge", "camera",
    )

    def __init__(self, assignments, parent, pixels, values, cloud_size, g, h_overlap, canonical_key, edge, camera):
        self.assignments: tuple[ObjectPoseHypothesis, ...] = assignments
        self.parent: Optional[SceneState] = parent
        self.pixels: np.ndarray = pixels
        self.values: np.ndarray = values
        self.cloud_size: int = cloud_size
        self.g: int = g
        self.h_overlap: int = h_overlap
        self.canonical_key: tuple = canonical_key
        self.edge: Optional[CostBreakdown] = edge
        self.camera: CameraModel = camera

    @classmethod
    def root(cls, task: SceneTask) -> "SceneState":
        empty = np.zeros(0, dtype=np.int64)
        return cls((), None, empty, np.zeros(0), 0, 0, len(task.observed), (), None, task.camera)

    def __len__(self) -> int:
        return len(self.assignments)

    def __repr__(self) -> str:
        parts = ", ".join(f"{a.model_id}@({a.pose.x:.4f},{a.pose.y:.4f},{math.degrees(a.pose.theta):.1f}deg)" for a in self.assignments)
        return f"SceneState(g={self.g}, [{parts}])"

    def depth_flat(self) -> np.ndarray:
        buf = np.full(self.camera.width * self.camera.height, np.inf)
        node = self
        while node is not None:
            buf[node.pixels] = node.values
            node = node.parent
        return buf

    @property
    def depth(self) -> DepthImage:
        return DepthImage(self.depth_flat().reshape(self.camera.height, self.camera.width), self.camera)

    def path(self) -> list["SceneState"]:
        out = []
        node = self
        while node is not None:
            out.append(node)
            node = node.parent
        return out[::-1]


def canonical_key(assignments: Iterable[ObjectPoseHypothesis]) -> tuple:
    return tuple(sorted(a.key() for a in assignments))


def remaining_ids(s: SceneState, task: SceneTask) -> list[str]:
    left = Counter(task.required)
    left.subtract(a.model_id for a in s.assignments)
    return sorted(mid for mid, n in left.items() if n > 0)


def is_goal(s: SceneState, task: SceneTask) -> bool:
    return len(s.assignments) == task.K


def path_cost(goal: SceneState, task: SceneTask) -> int:
    if not is_goal(goal, task):
        raise ValueError(f"state assigns {len(goal)} of {task.K} objects; not a goal")
    return goal.g


def overlap_count(assignments: Sequence[ObjectPoseHypothesis], task: SceneTask) -> int:
    """Observed points outside the union of the assigned object volumes."""
    pts = task.observed.points
    covered = np.zeros(len(pts), dtype=bool)
    for a in assignments:
        covered |= points_in_volume(pts, task.models[a.model_id].volume, a.pose)
    return int(len(pts) - np.count_nonzero(covered))


@dataclass(frozen=True)
class Candidate:
    """Outcome of trying one placement on top of a parent state."""

    hypothesis: ObjectPoseHypothesis
    pixels: np.ndarray
    values: np.ndarray
    cost: CostBreakdown
    h_overlap: int
    key: tuple
    refined: bool


class Expander:
    """Evaluates placements for one task; owns a cache of single-object renders."""

    def __init__(self, task: SceneTask, cache_size: int = 4096):
        self.task = task
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size
        # ICP depends only on the visible pixels of the candidate, which are
        # usually the same at every depth of the tree
        self._icp_memo: OrderedDict = OrderedDict()

    def render_single(self, model_id: str, pose: RigidPose2D) -> np.ndarray:
        key = (model_id, pose.x, pose.y, pose.theta)
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        img = render_depth([(self.task.models[model_id].mesh, pose)], self.task.camera).depth.reshape(-1)
        self._cache[key] = img
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return img

    def _placement(self, parent_depth: np.ndarray, model_id: str, pose: RigidPose2D, cand: np.ndarray | None = None):
        """New pixel indices for a non-occluding placement, or ``None`` if it occludes."""
        if cand is None:
            cand = render_depth([(self.task.models[model_id].mesh, pose)], self.task.camera).depth.reshape(-1)
        has = np.isfinite(parent_depth)
        if np.any(cand[has] < parent_depth[has] - self.task.eps_render):
            return None
        new = np.flatnonzero(~has & np.isfinite(cand))
        return new, cand[new]

    def evaluate(
        self,
        parent_depth: np.ndarray,
        assignments: tuple[ObjectPoseHypothesis, ...],
        model_id: str,
        pose: RigidPose2D,
        use_icp: bool = True,
    ) -> Optional[Candidate]:
        """Try placing ``model_id`` at ``pose`` on top of a parent scene.

        Returns ``None`` when the placement would occlude the parent.
        """
        task = self.task
        model = task.models[model_id]
        placed = self._placement(parent_depth, model_id, pose, self.render_single(model_id, pose))
        if placed is None:
            return None
        pixels, values = placed
        refined = False
        if use_icp and task.icp is not None and len(pixels):
            new_pose = self._refine(model, pose, pixels, values)
            if new_pose is not None:
                again = self._placement(parent_depth, model_id, new_pose, self.render_single(model_id, new_pose))
                # refinements that break monotonicity fall back to the grid pose
                if again is not None:
                    pose, (pixels, values), refined = new_pose, again, True
        hyp = ObjectPoseHypothesis(model_id, pose)
        full = assignments + (hyp,)
        new_pts = backproject_pixels(pixels, values, task.camera)
        d_r = count_unexplained(new_pts, task.observed_index, task.delta)
        inside = task.observed.points[points_in_volume(task.observed.points, model.volume, pose)]
        d_o = count_unexplained(inside, SpatialIndex(new_pts), task.delta)
        residual = 0
        if len(full) == task.K:
            child = parent_depth.copy()
            child[pixels] = values
            all_pts = backproject(child, task.camera)
            pts = task.observed.points
            covered = np.zeros(len(pts), dtype=bool)
            for a in full:
                covered |= points_in_volume(pts, task.models[a.model_id].volume, a.pose)
            residual = count_unexplained(pts[~covered], SpatialIndex(all_pts), task.delta)
        return Candidate(
            hyp, pixels, values, CostBreakdown(d_r, d_o, residual), overlap_count(full, task), canonical_key(full), refined
        )

    def _refine(self, model: ObjectModel, pose: RigidPose2D, pixels: np.ndarray, values: np.ndarray) -> Optional[RigidPose2D]:
        """ICP-refined pose, or ``None`` when refinement leaves the grid cell or changes nothing."""
        key = (model.id, pose.x, pose.y, pose.theta, pixels.tobytes())
        if key in self._icp_memo:
            self._icp_memo.move_to_end(key)
            return self._icp_memo[key]
        task = self.task
        world = backproject_pixels(pixels, values, task.camera)
        local = (world - pose.translation()) @ pose.rotation()
        new_pose = icp_refine(PointCloud(local), task.observed_index, pose, task.icp).refined_pose
        if model.rotationally_symmetric:
            new_pose = RigidPose2D(new_pose.x, new_pose.y, 0.0)
        if new_pose == pose or not task.grid.contains_refinement(pose, new_pose, model.rotationally_symmetric):
            new_pose = None
        self._icp_memo[key] = new_pose
        if len(self._icp_memo) > 4 * self._cache_size:
            self._icp_memo.popitem(last=False)
        return new_pose

    def candidates(self, s: SceneState) -> list[tuple[str, RigidPose2D]]:
        out = []
        for mid in remaining_ids(s, self.task):
            out.extend((mid, p) for p in self.task.grid.poses(self.task.models[mid].rotationally_symmetric))
        return out

    def evaluate_many(self, parent_depth, assignments, work, use_icp=True) -> list[Optional[Candidate]]:
        return [self.evaluate(parent_depth, assignments, mid, pose, use_icp) for mid, pose in work]


def make_child(s: SceneState, c: Candidate) -> SceneState:
    return SceneState(
        s.assignments + (c.hypothesis,),
        s,
        c.pixels,
        c.values,
        s.cloud_size + len(c.pixels),
        s.g + c.cost.total,
        c.h_overlap,
        c.key,
        c.cost,
        s.camera,
    )


# worker-process state for parallel successor generation
_WORKER: Optional[Expander] = None


def _init_worker(task: SceneTask) -> None:
    global _WORKER
    _WORKER = Expander(task)


def _work_chunk(args):
    parent_depth, assignments, work, use_icp = args
    return _WORKER.evaluate_many(parent_depth, assignments, work, use_icp)


class SuccessorGenerator:
    """Successor function of the tree, optionally fanned out over worker processes.

    The output of :meth:`__call__` depends only on the state and the task: the
    candidate list is split into contiguous chunks, evaluated independently
    and concatenated back in order.
    """

    def __init__(self, task: SceneTask, workers: int = 1, use_icp: bool = True):
        self.task = task
        self.workers = max(1, int(workers))
        self.use_icp = use_icp
        self.local = Expander(task)
        self._pool: Optional[ProcessPoolExecutor] = None
        if self.workers > 1:
            self._pool = ProcessPoolExecutor(
                self.workers, mp_context=mp.get_context("fork"), initializer=_init_worker, initargs=(task,)
            )

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __call__(self, s: SceneState) -> list[tuple[SceneState, CostBreakdown]]:
        if len(s) >= self.task.K:
            raise ValueError("goal states have no successors")
        parent_depth = s.depth_flat()
        work = self.local.candidates(s)
        if self._pool is None or len(work) < 2 * self.workers:
            results = self.local.evaluate_many(parent_depth, s.assignments, work, self.use_icp)
        else:
            n_chunks = self.workers * 4
            bounds = np.linspace(0, len(work), n_chunks + 1).astype(int)
            chunks = [work[a:b] for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
            results = []
            for part in self._pool.map(_work_chunk, [(parent_depth, s.assignments, c, self.use_icp) for c in chunks]):
                results.extend(part)
        out = []
        seen = set()
        for c in results:
            if c is None or c.key in seen:
                continue
            seen.add(c.key)
            out.append((make_child(s, c), c.cost))
        return out


def successors(s: SceneState, task: SceneTask, workers: int = 1, use_icp: bool = True) -> list[tuple[SceneState, CostBreakdown]]:
    """One-shot convenience wrapper around :class:`SuccessorGenerator`."""
    with SuccessorGenerator(task, workers, use_icp) as gen:
        return gen(s)


def extend(s: SceneState, task: SceneTask, hyp: ObjectPoseHypothesis, use_icp: bool = False) -> Optional[SceneState]:
    """Child of ``s`` with one specific placement, or ``None`` if it occludes ``s``."""
    c = Expander(task).evaluate(s.depth_flat(), s.assignments, hyp.model_id, hyp.pose, use_icp)
    return None if c is None else make_child(s, c)


def monotone_order(
    assignment: Sequence[ObjectPoseHypothesis], task: SceneTask, expander: Optional[Expander] = None
) -> Optional[list[ObjectPoseHypothesis]]:
    """First insertion order (depth-first over permutations) that never occludes, or ``None``.

    Pass an ``expander`` to share its render cache across many calls.
    """
    exp = expander if expander is not None else Expander(task)
    imgs = [exp.render_single(a.model_id, a.pose) for a in assignment]
    n = len(assignment)

    def dfs(depth, used, order):
        if len(order) == n:
            return order
        for i in range(n):
            if used & (1 << i):
                continue
            if exp._placement(depth, assignment[i].model_id, assignment[i].pose, imgs[i]) is None:
                continue
            found = dfs(np.where(np.isfinite(depth), depth, imgs[i]), used | (1 << i), order + [assignment[i]])
            if found is not None:
                return found
        return None

    return dfs(np.full(task.camera.width * task.camera.height, np.inf), 0, [])
