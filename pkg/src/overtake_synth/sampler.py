"""Seeded generation of the initial conditions of a simulation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import GeneratorConfig
from .domain import (
    COLOURS,
    EGO_KINDS,
    GEOMETRY,
    PRESETS,
    PRESETS_BY_NAME,
    Dimensions,
    VehicleKind,
    WeatherPreset,
)
from .errors import PlacementFailure

MIN_SPAWN_GAP = 1.0
MAX_PLACEMENT_TRIES = 1000
SPEED_BOUNDS = (50.0, 120.0)
VEHICLE_COUNT_BOUNDS = (2, 6)


@dataclass(frozen=True)
class VehicleSpawn:
    kind: VehicleKind
    colour: str
    x0: float
    lane0: int
    target_speed: float
    dims: Dimensions


@dataclass(frozen=True)
class ScenarioSpec:
    sim_id: int
    seed: int
    vehicles: tuple[VehicleSpawn, ...]
    ego_index: int
    preset: WeatherPreset
    duration: float
    dt: float
    mv_limit: float

    @property
    def ego(self) -> VehicleSpawn:
        return self.vehicles[self.ego_index]


def sim_seed(master_seed: int, sim_id: int) -> int:
    """Per-simulation 64-bit seed derived by hashing ``(master_seed, sim_id)``."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(sim_id,))
    return int(ss.generate_state(1, np.uint64)[0])


def streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (sampler, engine) PCG64 streams for one simulation seed."""
    sampler_ss, engine_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.PCG64(sampler_ss)), np.random.Generator(np.random.PCG64(engine_ss))


def preset_catalog() -> list[WeatherPreset]:
    return list(PRESETS)


def _clear(x: float, length: float, lane: int, placed: list[VehicleSpawn]) -> bool:
    for other in placed:
        if other.lane0 != lane:
            continue
        if abs(x - other.x0) < (length + other.dims.length) / 2 + MIN_SPAWN_GAP:
            return False
    return True


def sample_scenario(seed: int, config: GeneratorConfig | None = None, sim_id: int = 1) -> ScenarioSpec:
    """Draw one scenario; the same ``seed`` and ``config`` always give the same spec."""
    config = config or GeneratorConfig()
    config.check()
    rng, _ = streams(seed)
    geo = GEOMETRY
    all_kinds = list(VehicleKind)

    def speed() -> float:
        return round(float(rng.uniform(config.speed_min, config.speed_max)), 2)

    def spawn(kind: VehicleKind, x: float, lane: int) -> VehicleSpawn:
        return VehicleSpawn(kind, COLOURS[int(rng.integers(len(COLOURS)))], round(x, 2), lane, speed(),
                            config.dimensions[kind])

    n = int(rng.integers(config.n_vehicles_min, config.n_vehicles_max + 1))
    ego_lanes = sorted(lane for lane in config.spawn_lanes if lane < geo.n_lanes)
    lanes = sorted(config.spawn_lanes)

    tries = 0
    while True:
        tries += 1
        if tries > MAX_PLACEMENT_TRIES:
            raise PlacementFailure(f"no non-overlapping placement for {n} vehicles (seed={seed})")
        ego_kind = EGO_KINDS[int(rng.integers(len(EGO_KINDS)))]
        lead_kind = all_kinds[int(rng.integers(len(all_kinds)))]
        ego_len = config.dimensions[ego_kind].length
        lead_len = config.dimensions[lead_kind].length
        min_sep = (ego_len + lead_len) / 2 + MIN_SPAWN_GAP
        if geo.x_min + min_sep > geo.x_max:
            continue
        ego_lane = ego_lanes[int(rng.integers(len(ego_lanes)))]
        ego_x = float(rng.uniform(geo.x_min, geo.x_max - min_sep))
        lead_x = float(rng.uniform(ego_x + min_sep, geo.x_max))
        ego = spawn(ego_kind, ego_x, ego_lane)
        lead = spawn(lead_kind, lead_x, ego_lane)
        # rounding to centimetres may eat into the gap
        if not _clear(lead.x0, lead_len, ego_lane, [ego]):
            continue
        placed = [ego, lead]
        while len(placed) < n and tries <= MAX_PLACEMENT_TRIES:
            kind = all_kinds[int(rng.integers(len(all_kinds)))]
            lane = lanes[int(rng.integers(len(lanes)))]
            x = round(float(rng.uniform(geo.x_min, geo.x_max)), 2)
            if _clear(x, config.dimensions[kind].length, lane, placed):
                placed.append(spawn(kind, x, lane))
            else:
                tries += 1
        if len(placed) == n:
            break

    preset = PRESETS_BY_NAME[config.presets[int(rng.integers(len(config.presets)))]]
    mv_limit = float(config.mv_limits[int(rng.integers(len(config.mv_limits)))])
    return ScenarioSpec(
        sim_id=sim_id,
        seed=seed,
        vehicles=tuple(placed),
        ego_index=0,
        preset=preset,
        duration=config.duration,
        dt=config.dt,
        mv_limit=mv_limit,
    )


def validate_scenario(spec: ScenarioSpec) -> list[str]:
    """List every broken scenario invariant; an empty list means the scenario is valid."""
    report: list[str] = []
    geo = GEOMETRY
    lo, hi = VEHICLE_COUNT_BOUNDS
    if not lo <= len(spec.vehicles) <= hi:
        report.append(f"vehicle count {len(spec.vehicles)} out of [{lo},{hi}]")
    if not 0 <= spec.ego_index < len(spec.vehicles):
        report.append(f"ego index {spec.ego_index} out of range")
        return report
    smin, smax = SPEED_BOUNDS
    for i, v in enumerate(spec.vehicles):
        if not smin <= v.target_speed <= smax:
            report.append(f"vehicle {i}: speed out of [{smin:g},{smax:g}] ({v.target_speed:g})")
        if not geo.x_min <= v.x0 <= geo.x_max:
            report.append(f"vehicle {i}: x0 out of [{geo.x_min:g},{geo.x_max:g}] ({v.x0:g})")
        if not 1 <= v.lane0 <= geo.n_lanes:
            report.append(f"vehicle {i}: lane {v.lane0} out of 1..{geo.n_lanes}")
        if v.colour not in COLOURS:
            report.append(f"vehicle {i}: unknown colour {v.colour!r}")
    ego = spec.ego
    if ego.kind not in EGO_KINDS:
        report.append(f"ego kind {ego.kind.value} not allowed")
    if ego.lane0 == geo.n_lanes:
        report.append("ego on lane 5")
    ahead = [v for i, v in enumerate(spec.vehicles)
             if i != spec.ego_index and v.lane0 == ego.lane0 and v.x0 > ego.x0]
    if not ahead:
        report.append("no preceding vehicle in ego lane")
    for i in range(len(spec.vehicles)):
        for j in range(i + 1, len(spec.vehicles)):
            a, b = spec.vehicles[i], spec.vehicles[j]
            if a.lane0 == b.lane0 and abs(a.x0 - b.x0) < (a.dims.length + b.dims.length) / 2 + MIN_SPAWN_GAP - 1e-9:
                report.append(f"vehicles {i} and {j} overlap at spawn")
    if spec.preset.name not in PRESETS_BY_NAME:
        report.append(f"unknown preset {spec.preset.name}")
    if spec.dt <= 0 or spec.duration <= 0:
        report.append("non-positive dt or duration")
    return report
