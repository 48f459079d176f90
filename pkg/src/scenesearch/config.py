"""Run configuration shared by the CLI and the experiment driver.

Every field can be overridden from the environment with the ``SCENESEARCH_``
prefix and the upper-cased field name, e.g. ``SCENESEARCH_W=1.5`` or
``SCENESEARCH_GRID_YAW=45``.  Command-line flags win over the environment,
which wins over the preset.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass
from typing import Mapping, Optional

from .align import IcpConfig
from .cost import DEFAULT_DELTA
from .search import HEURISTICS, SearchConfig

ENV_PREFIX = "SCENESEARCH_"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    delta: float = DEFAULT_DELTA
    w: float = 3.0
    grid_xy: float = 0.04
    grid_yaw: float = 22.5  # degrees
    time_limit: float = math.inf
    workers: int = 1
    seed: int = 0
    icp_cap: Optional[float] = None  # metres; None means half a grid step
    icp: bool = True
    heuristics: tuple[str, ...] = ("depth", "overlap")
    remove_table: bool = False
    inlier_eps: float = 0.005
    ransac_iterations: int = 200

    def __post_init__(self):
        if not self.w >= 1.0:
            raise ConfigError(f"w must be >= 1, got {self.w}")
        if not self.delta >= 0:
            raise ConfigError(f"delta must be non-negative, got {self.delta}")
        if not self.grid_xy > 0:
            raise ConfigError(f"grid_xy must be positive, got {self.grid_xy}")
        if not 0 < self.grid_yaw <= 360:
            raise ConfigError(f"grid_yaw must be in (0, 360] degrees, got {self.grid_yaw}")
        if abs(360.0 / self.grid_yaw - round(360.0 / self.grid_yaw)) > 1e-9:
            raise ConfigError(f"grid_yaw must divide 360 degrees, got {self.grid_yaw}")
        if not self.time_limit > 0:
            raise ConfigError(f"time_limit must be positive, got {self.time_limit}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.icp_cap is not None and not self.icp_cap > 0:
            raise ConfigError(f"icp_cap must be positive, got {self.icp_cap}")
        if not self.inlier_eps > 0:
            raise ConfigError(f"inlier_eps must be positive, got {self.inlier_eps}")
        if self.ransac_iterations < 1:
            raise ConfigError("ransac_iterations must be >= 1")
        unknown = [h for h in self.heuristics if h not in HEURISTICS]
        if unknown:
            raise ConfigError(f"unknown heuristics {unknown}; available: {sorted(HEURISTICS)}")
        object.__setattr__(self, "heuristics", tuple(self.heuristics))

    @property
    def yaw_step(self) -> float:
        return math.radians(self.grid_yaw)

    def icp_config(self) -> Optional[IcpConfig]:
        if not self.icp:
            return None
        if self.icp_cap is None:
            return IcpConfig.for_grid(self.grid_xy)
        return IcpConfig(max_correspondence=self.icp_cap)

    def search_config(self) -> SearchConfig:
        return SearchConfig(
            w=self.w,
            time_limit=self.time_limit,
            heuristics=self.heuristics,
            workers=self.workers,
            use_icp=self.icp,
        )

    def replace(self, **changes) -> "RunConfig":
        try:
            return dataclasses.replace(self, **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["heuristics"] = list(self.heuristics)
        if math.isinf(self.time_limit):
            d["time_limit"] = None
        return d


PRESETS: dict[str, RunConfig] = {
    "default": RunConfig(),
    # large, cluttered boards: looser bound and noise threshold
    "chessboard": RunConfig(w=15.0, delta=0.0075),
}


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _coerce(field: dataclasses.Field, text: str):
    name = field.name
    try:
        if name == "heuristics":
            return tuple(h for h in (p.strip() for p in text.split(",")) if h)
        if name in ("icp", "remove_table"):
            return _parse_bool(text)
        if name in ("workers", "seed", "ransac_iterations"):
            return int(text)
        if name == "icp_cap" and text.strip().lower() in ("", "none"):
            return None
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {text!r}") from exc


def from_env(base: RunConfig = RunConfig(), env: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Apply ``SCENESEARCH_*`` overrides on top of ``base``."""
    env = os.environ if env is None else env
    changes = {}
    for f in dataclasses.fields(RunConfig):
        key = ENV_PREFIX + f.name.upper()
        if key in env:
            changes[f.name] = _coerce(f, env[key])
    return base.replace(**changes) if changes else base


def load_config(preset: str = "default", env: Optional[Mapping[str, str]] = None, **overrides) -> RunConfig:
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; available: {sorted(PRESETS)}")
    cfg = from_env(PRESETS[preset], env)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return cfg.replace(**overrides) if overrides else cfg
