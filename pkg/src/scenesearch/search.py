"""Bounded-suboptimal multi-heuristic best-first search over the scene tree.

The anchor queue orders open states by ``g`` (the admissible heuristic is
identically zero).  FOCAL is the set of open states with ``g <= w * min_key``.
Every round expands, for each inadmissible heuristic in turn, the FOCAL state
that heuristic likes best, then the anchor minimum.  The search stops as soon
as the best goal seen satisfies ``g <= w * min_key``; because every unexpanded
goal hangs below some open state and edge costs are non-negative, that
certifies ``cost <= w * OPT``.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence


from .cost import count_unexplained
from .geometry import SpatialIndex
from .msgt import (
    Expander,
    ObjectPoseHypothesis,
    SceneState,
    SceneTask,
    SuccessorGenerator,
    is_goal,
    monotone_order,
    overlap_count,
)
from .render import depth_to_cloud, render_depth


def h_depth(s: SceneState, K: int) -> int:
    if len(s) > K:
        raise ValueError("state has more assignments than objects")
    return K - len(s)


def h_overlap(s: SceneState, task: SceneTask) -> int:
    return overlap_count(s.assignments, task)


# heuristics read the value cached on the state at generation time
HEURISTICS: dict[str, Callable[[SceneState, SceneTask], int]] = {
    "depth": lambda s, task: task.K - len(s),
    "overlap": lambda s, task: s.h_overlap,
}


@dataclass(frozen=True)
class SearchConfig:
    w: float = 3.0
    time_limit: float = math.inf
    heuristics: tuple[str, ...] = ("depth", "overlap")
    workers: int = 1
    use_icp: bool = True
    max_expansions: Optional[int] = None

    def __post_init__(self):
        if not self.w >= 1.0:
            raise ValueError("suboptimality factor w must be >= 1")
        unknown = [h for h in self.heuristics if h not in HEURISTICS]
        if unknown:
            raise ValueError(f"unknown heuristics {unknown}; available: {sorted(HEURISTICS)}")
        if self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        object.__setattr__(self, "heuristics", tuple(self.heuristics))


@dataclass
class SearchResult:
    goal: Optional[SceneState]
    cost: Optional[int]
    bound_certificate: float
    expansions: int
    generated: int
    wall_time: float
    timed_out: bool
    min_key: float = math.inf
    evaluated: int = 0
    expansion_log: list[tuple[str, tuple]] = field(default_factory=list, repr=False)

    @property
    def certified(self) -> bool:
        return self.goal is not None and not self.timed_out and self.cost <= self.bound_certificate

    @property
    def poses(self) -> list[ObjectPoseHypothesis]:
        return [] if self.goal is None else list(self.goal.assignments)

    def signature(self) -> tuple:
        """Everything that must not depend on scheduling or worker count."""
        goal_key = None if self.goal is None else self.goal.canonical_key
        return (self.cost, goal_key, self.expansions, self.generated, self.timed_out, tuple(self.expansion_log))


class _Open:
    """Open list: a lazy anchor heap plus a dict of expandable (non-goal) states."""

    def __init__(self, K: int):
        self.K = K
        self._heap: list = []
        self._tick = itertools.count()
        self.expandable: dict[tuple, SceneState] = {}
        self.closed: set[tuple] = set()

    def push(self, s: SceneState) -> None:
        heapq.heappush(self._heap, (s.g, self.K - len(s), s.canonical_key, next(self._tick), s))
        if len(s) < self.K:
            self.expandable[s.canonical_key] = s

    def _clean(self) -> None:
        while self._heap and self._heap[0][2] in self.closed:
            heapq.heappop(self._heap)

    def top(self) -> Optional[SceneState]:
        self._clean()
        return self._heap[0][4] if self._heap else None

    def min_key(self) -> float:
        t = self.top()
        return math.inf if t is None else t.g

    def close(self, s: SceneState) -> None:
        self.closed.add(s.canonical_key)
        self.expandable.pop(s.canonical_key, None)


def solve(
    task: SceneTask,
    cfg: SearchConfig = SearchConfig(),
    on_event: Optional[Callable[[dict], None]] = None,
    on_edge: Optional[Callable[[SceneState, SceneState], None]] = None,
) -> SearchResult:
    """Search the tree for a goal whose cost is within ``cfg.w`` of optimal.

    ``on_event`` receives a progress record after every expansion;
    ``on_edge`` sees each (parent, child) pair as it is generated.
    """
    t0 = time.perf_counter()
    K = task.K
    root = SceneState.root(task)
    open_ = _Open(K)
    open_.push(root)
    seen = {root.canonical_key}
    best: Optional[SceneState] = None
    expansions = generated = evaluated = 0
    timed_out = False
    log: list[tuple[str, tuple]] = []
    heuristics = [(name, HEURISTICS[name]) for name in cfg.heuristics]
    schedule = [(name, fn) for name, fn in heuristics] + [("anchor", None)]

    def done(min_key: float) -> bool:
        return best is not None and best.g <= cfg.w * min_key

    with SuccessorGenerator(task, cfg.workers, cfg.use_icp) as succ:

        def expand(s: SceneState, which: str) -> None:
            nonlocal best, expansions, generated, evaluated
            open_.close(s)
            expansions += 1
            log.append((which, s.canonical_key))
            children = succ(s)
            evaluated += len(succ.local.candidates(s))
            for child, _edge in children:
                if child.canonical_key in seen:
                    continue
                seen.add(child.canonical_key)
                generated += 1
                if on_edge is not None:
                    on_edge(s, child)
                open_.push(child)
                if is_goal(child, task) and (best is None or child.g < best.g):
                    best = child
            if on_event is not None:
                on_event(
                    {
                        "event": "expand",
                        "via": which,
                        "expansions": expansions,
                        "generated": generated,
                        "best_cost": None if best is None else best.g,
                        "min_key": open_.min_key(),
                        "open": len(open_.expandable),
                        "elapsed": round(time.perf_counter() - t0, 4),
                    }
                )

        stop = False
        while not stop:
            for name, fn in schedule:
                min_key = open_.min_key()
                if done(min_key) or not open_.expandable:
                    stop = True
                    break
                if time.perf_counter() - t0 > cfg.time_limit or (
                    cfg.max_expansions is not None and expansions >= cfg.max_expansions
                ):
                    timed_out = True
                    stop = True
                    break
                if fn is None:
                    s = open_.top()
                    # a goal at the top of the anchor would already satisfy done()
                    assert s is not None and len(s) < K
                else:
                    bound = cfg.w * min_key
                    s = min(
                        (c for c in open_.expandable.values() if c.g <= bound),
                        key=lambda c: (fn(c, task), K - len(c), c.canonical_key),
                    )
                expand(s, name)

    min_key = open_.min_key()
    if best is not None and best.g < min_key:
        min_key = best.g
    result = SearchResult(
        goal=best,
        cost=None if best is None else best.g,
        bound_certificate=cfg.w * min_key,
        expansions=expansions,
        generated=generated,
        wall_time=time.perf_counter() - t0,
        timed_out=timed_out,
        min_key=min_key,
        evaluated=evaluated,
        expansion_log=log,
    )
    if on_event is not None:
        on_event(
            {
                "event": "done",
                "cost": result.cost,
                "bound_certificate": result.bound_certificate,
                "expansions": expansions,
                "generated": generated,
                "timed_out": timed_out,
                "elapsed": round(result.wall_time, 4),
            }
        )
    return result


class OracleTooLarge(ValueError):
    pass


def brute_force_oracle(task: SceneTask, limit: int = 10**6) -> tuple[Optional[list[ObjectPoseHypothesis]], Optional[int]]:
    """Exhaustive joint search over on-grid poses (no ICP), rendering each scene whole.

    Assignments with no non-occluding insertion order cannot appear in the
    tree and are skipped, so the optimum matches the tree's.  Repeated model
    ids are enumerated as multisets (with repetition, like the tree).  Ties go to the lexicographically
    smallest assignment in enumeration order.
    """
    n = task.joint_size()
    if n > limit:
        raise OracleTooLarge(f"{n} joint configurations exceed the oracle limit of {limit}")
    slots = []
    for mid in task.required:
        m = task.models[mid]
        slots.append([ObjectPoseHypothesis(mid, p) for p in task.grid.poses(m.rotationally_symmetric)])
    best_cost: Optional[int] = None
    best: Optional[list[ObjectPoseHypothesis]] = None
    exp = Expander(task, cache_size=sum(len(s) for s in slots) + 1)
    for combo in _multiset_product(task.required, slots):
        if monotone_order(combo, task, exp) is None:
            continue
        img = render_depth([(task.models[h.model_id].mesh, h.pose) for h in combo], task.camera)
        rendered = depth_to_cloud(img)
        # same count as explanation_cost, reusing the task's observed index
        c = count_unexplained(task.observed, SpatialIndex(rendered), task.delta) + count_unexplained(
            rendered, task.observed_index, task.delta
        )
        if best_cost is None or c < best_cost:
            best_cost, best = c, list(combo)
    return best, best_cost


def _multiset_product(required: Sequence[str], slots: Sequence[Sequence[ObjectPoseHypothesis]]):
    """Cartesian product yielding each multiset once when ids repeat (``required`` is sorted)."""
    n = len(required)

    def rec(i, start, acc):
        if i == n:
            yield tuple(acc)
            return
        for j in range(start, len(slots[i])):
            nxt = j if i + 1 < n and required[i + 1] == required[i] else 0
            yield from rec(i + 1, nxt, acc + [slots[i][j]])

    yield from rec(0, 0, [])
