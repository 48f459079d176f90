"""Pose-estimation scoring: per-object errors and correct counts over a threshold grid."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import shortest_angular_difference
from .msgt import ObjectModel, ObjectPoseHypothesis

TRANSLATION_THRESHOLDS = (0.01, 0.05, 0.1)
YAW_THRESHOLDS = tuple(math.radians(a) for a in (5.0, 10.0, 20.0, 180.0))


class IdMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ObjectError:
    model_id: str
    predicted: ObjectPoseHypothesis
    truth: ObjectPoseHypothesis
    translation: float
    yaw: float
    symmetric: bool

    def correct(self, dt: float, dtheta: float) -> bool:
        return self.translation < dt and (self.symmetric or self.yaw < dtheta)


@dataclass
class EvalReport:
    errors: list[ObjectError]
    translation_thresholds: tuple[float, ...]
    yaw_thresholds: tuple[float, ...]
    counts: dict[tuple[float, float], int]
    stats: dict = field(default_factory=dict)

    @property
    def n_objects(self) -> int:
        return len(self.errors)

    def correct(self, dt: float, dtheta: float) -> int:
        return sum(e.correct(dt, dtheta) for e in self.errors)

    def to_dict(self) -> dict:
        return {
            "objects": [
                {
                    "model_id": e.model_id,
                    "predicted": [e.predicted.pose.x, e.predicted.pose.y, e.predicted.pose.theta],
                    "truth": [e.truth.pose.x, e.truth.pose.y, e.truth.pose.theta],
                    "translation_error": e.translation,
                    "yaw_error": e.yaw,
                    "symmetric": e.symmetric,
                }
                for e in self.errors
            ],
            "histogram": [
                {"dt": dt, "dtheta": dth, "correct": c, "total": self.n_objects}
                for (dt, dth), c in sorted(self.counts.items())
            ],
            "stats": dict(self.stats),
        }

    def histogram_rows(self) -> list[tuple[float, float, int, int]]:
        return [(dt, math.degrees(dth), c, self.n_objects) for (dt, dth), c in sorted(self.counts.items())]


def evaluate(
    predicted: Sequence[ObjectPoseHypothesis],
    truth: Sequence[ObjectPoseHypothesis],
    models: Optional[Mapping[str, ObjectModel]] = None,
    translation_thresholds: Sequence[float] = TRANSLATION_THRESHOLDS,
    yaw_thresholds: Sequence[float] = YAW_THRESHOLDS,
    stats: Optional[dict] = None,
) -> EvalReport:
    """Pair predictions with truth per model id (min total translation error) and score them.

    Yaw is ignored for models flagged rotationally symmetric in ``models``.
    """
    if Counter(h.model_id for h in predicted) != Counter(h.model_id for h in truth):
        raise IdMismatch(
            f"predicted ids {sorted(h.model_id for h in predicted)} differ from truth ids {sorted(h.model_id for h in truth)}"
        )
    errors: list[ObjectError] = []
    for mid in sorted({h.model_id for h in truth}):
        ps = [h for h in predicted if h.model_id == mid]
        ts = [h for h in truth if h.model_id == mid]
        cost = np.array([[math.hypot(p.pose.x - t.pose.x, p.pose.y - t.pose.y) for t in ts] for p in ps])
        rows, cols = linear_sum_assignment(cost)
        symmetric = bool(models is not None and mid in models and models[mid].rotationally_symmetric)
        for r, c in zip(rows, cols):
            p, t = ps[r], ts[c]
            errors.append(
                ObjectError(mid, p, t, float(cost[r, c]), shortest_angular_difference(p.pose.theta, t.pose.theta), symmetric)
            )
    ts_ = tuple(sorted(float(v) for v in translation_thresholds))
    ys_ = tuple(sorted(float(v) for v in yaw_thresholds))
    counts = {(dt, dth): sum(e.correct(dt, dth) for e in errors) for dt in ts_ for dth in ys_}
    return EvalReport(errors, ts_, ys_, counts, dict(stats or {}))
