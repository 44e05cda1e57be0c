"""Generator configuration and the flat ``key = value`` config file reader.

Example file::

    # generator
    n_vehicles_min = 2
    n_vehicles_max = 6
    speed_min = 50
    speed_max = 120
    duration = 20
    dt = 0.05
    presets = ClearNoon, HardRainNight
    spawn_lanes = 1, 2, 3, 4, 5
    mv_limits = 90, 100, 120
    dim.T = 7.5, 2.5, 3.5

    # engine thresholds
    engine.trigger_gap = 40
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .domain import DEFAULT_DIMENSIONS, PRESETS, PRESETS_BY_NAME, Dimensions, VehicleKind
from .errors import ConfigError


@dataclass(frozen=True)
class EngineParams:
    """Tunable constants of the kinematic engine and ego policy."""

    trigger_gap: float = 40.0
    return_margin: float = 5.0
    lc_base: float = 2.0
    lc_ref_speed: float = 80.0
    lc_min: float = 1.5
    lc_max: float = 4.0
    collision_decel: float = 8.0
    # IDM car-following
    idm_a: float = 2.0
    idm_b: float = 3.0
    idm_s0: float = 2.0
    idm_headway: float = 1.2
    idm_delta: float = 4.0
    max_decel: float = 9.0
    # non-ego speed holding
    a_max: float = 2.0
    # weather
    y_pert_max: float = 0.3
    k_min: int = 10
    k_max: int = 60
    lane_keep_tau: float = 1.0
    # visibility
    r0: float = 80.0
    v_cloud: float = 0.6
    v_hl: float = 0.6
    fog_factor: float = 0.5
    r_min: float = 15.0


@dataclass(frozen=True)
class GeneratorConfig:
    n_vehicles_min: int = 2
    n_vehicles_max: int = 6
    speed_min: float = 50.0
    speed_max: float = 120.0
    duration: float = 20.0
    dt: float = 0.05
    presets: tuple[str, ...] = tuple(p.name for p in PRESETS)
    spawn_lanes: tuple[int, ...] = (1, 2, 3, 4, 5)
    mv_limits: tuple[float, ...] = (90.0, 100.0, 120.0)
    dimensions: Mapping[VehicleKind, Dimensions] = field(default_factory=lambda: dict(DEFAULT_DIMENSIONS))
    engine: EngineParams = field(default_factory=EngineParams)

    def check(self) -> None:
        if not 1 <= self.n_vehicles_min <= self.n_vehicles_max:
            raise ConfigError("n_vehicles_min must be >= 1 and <= n_vehicles_max")
        if not 0 <= self.speed_min <= self.speed_max:
            raise ConfigError("speed_min must be >= 0 and <= speed_max")
        if self.dt <= 0 or self.duration <= 0:
            raise ConfigError("dt and duration must be positive")
        if not self.presets:
            raise ConfigError("preset whitelist is empty")
        unknown = [p for p in self.presets if p not in PRESETS_BY_NAME]
        if unknown:
            raise ConfigError(f"unknown presets {unknown}")
        if not self.spawn_lanes or any(not 1 <= lane <= 5 for lane in self.spawn_lanes):
            raise ConfigError("spawn_lanes must be a non-empty subset of 1..5")
        if not any(lane <= 4 for lane in self.spawn_lanes):
            raise ConfigError("spawn_lanes must contain a lane the ego may start on (1..4)")
        if not self.mv_limits:
            raise ConfigError("mv_limits is empty")
        e = self.engine
        if e.k_min > e.k_max or e.lc_min > e.lc_max or e.r_min > e.r0:
            raise ConfigError("engine bounds inverted")


_INT_KEYS = {"n_vehicles_min", "n_vehicles_max"}
_FLOAT_KEYS = {"speed_min", "speed_max", "duration", "dt"}


def _floats(raw: str, key: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in raw.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {raw!r}") from None


def parse_config(text: str) -> GeneratorConfig:
    values: dict[str, object] = {}
    dims = dict(DEFAULT_DIMENSIONS)
    engine_fields = {f.name: f.type for f in dataclasses.fields(EngineParams)}
    engine: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        try:
            if key in _INT_KEYS:
                values[key] = int(raw)
            elif key in _FLOAT_KEYS:
                values[key] = float(raw)
            elif key == "presets":
                values[key] = tuple(p.strip() for p in raw.split(",") if p.strip())
            elif key == "spawn_lanes":
                values[key] = tuple(int(v) for v in raw.split(",") if v.strip())
            elif key == "mv_limits":
                values[key] = _floats(raw, key)
            elif key.startswith("dim."):
                kind = VehicleKind(key[4:])
                lwh = _floats(raw, key)
                if len(lwh) != 3 or min(lwh) <= 0:
                    raise ConfigError(f"line {lineno}: {key} needs three positive numbers")
                dims[kind] = Dimensions(*lwh)
            elif key.startswith("engine.") and key[7:] in engine_fields:
                name = key[7:]
                engine[name] = int(raw) if engine_fields[name] in ("int", int) else float(raw)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key}: {raw!r}") from None
    cfg = GeneratorConfig(**values, dimensions=dims, engine=EngineParams(**engine))
    cfg.check()
    return cfg


def load_config(path: str | Path | None) -> GeneratorConfig:
    if path is None:
        return GeneratorConfig()
    return parse_config(Path(path).read_text(encoding="utf-8"))
