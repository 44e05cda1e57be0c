"""Fixed-timestep kinematic simulation of one scenario.

Vehicles move along +x.  Non-ego vehicles keep their lane and regulate speed
with an IDM law toward their target speed.  The ego follows its lane leader
until it is close enough to a slower one, then runs a two-lane-change
overtake (left, pass, right).  Rain and wind periodically shove the ego
sideways and reduced visibility shortens how far ahead the ego can see.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import EngineParams
from .domain import (
    GEOMETRY,
    Dimensions,
    SimClock,
    VehicleKind,
    WeatherPreset,
    lane_center,
    lane_of,
    line_types,
    neighbour_widths,
)
from .errors import BadDuration, BadSpeed
from .sampler import ScenarioSpec, streams

KMH = 3.6
LATERAL_MARGIN = 0.3


# ---------------------------------------------------------------------------
# log records

@dataclass(frozen=True)
class VehicleInfo:
    id: int
    kind: VehicleKind
    colour: str


@dataclass(frozen=True)
class FrameRecord:
    """One row of the frame log; per-vehicle cells are tuples keyed by vehicle id."""

    S: int
    F: int
    TS: float
    IDego: int
    Dim: tuple[tuple[int, float, float, float], ...]
    L: tuple[tuple[int, float, float, int], ...]
    V: tuple[tuple[int, float], ...]
    D: tuple[tuple[int, float, float], ...]
    A: tuple[tuple[int, float], ...]
    MV: float
    RT: str
    LT: str
    LW: float
    LWR: float
    LWL: float
    C: Optional[int]
    Prec: float
    Fog: float
    Wind: float
    DN: str
    HL: str
    OV: int

    def position(self, vid: int) -> tuple[float, float, int]:
        for i, x, y, lane in self.L:
            if i == vid:
                return x, y, lane
        raise KeyError(vid)

    def speed(self, vid: int) -> float:
        for i, v in self.V:
            if i == vid:
                return v
        raise KeyError(vid)

    def dims(self, vid: int) -> tuple[float, float, float]:
        for i, length, width, height in self.Dim:
            if i == vid:
                return length, width, height
        raise KeyError(vid)


@dataclass
class SimulationLog:
    sim_id: int
    ego_id: int
    dt: float
    duration: float
    preset: str
    vehicles: tuple[VehicleInfo, ...]
    frames: list[FrameRecord] = field(default_factory=list)
    seed: int = 0

    def kind_of(self, vid: int) -> VehicleKind:
        for v in self.vehicles:
            if v.id == vid:
                return v.kind
        raise KeyError(vid)


# ---------------------------------------------------------------------------
# controller / world state

class Phase(str, enum.Enum):
    FOLLOW = "FOLLOW"
    CHANGING_LEFT = "CHANGING_LEFT"
    PASSING = "PASSING"
    CHANGING_RIGHT = "CHANGING_RIGHT"
    DONE = "DONE"
    ABORTED = "ABORTED"


@dataclass
class EgoControllerState:
    phase: Phase = Phase.FOLLOW
    target_id: Optional[int] = None
    start_frame: int = 0
    lc_duration: float = 0.0
    from_y: float = 0.0
    to_y: float = 0.0
    origin_lane: int = 0

    def t_phase_start(self, dt: float) -> float:
        return self.start_frame * dt


@dataclass
class VehicleState:
    id: int
    x: float
    y: float
    speed: float  # m/s
    target_speed: float  # m/s
    dims: Dimensions
    accel: float = 0.0
    y_base: float = 0.0
    y_off: float = 0.0
    heading: tuple[float, float] = (1.0, 0.0)
    alive: bool = True
    collided: bool = False

    @property
    def speed_kmh(self) -> float:
        return self.speed * KMH

    @property
    def front(self) -> float:
        return self.x + self.dims.length / 2

    @property
    def rear(self) -> float:
        return self.x - self.dims.length / 2

    @property
    def box(self) -> tuple[float, float, float, float]:
        return self.x, self.y, self.dims.length, self.dims.width


@dataclass
class WorldState:
    clock: SimClock
    frame: int
    vehicles: list[VehicleState]
    ego_id: int
    preset: WeatherPreset
    mv_limit: float
    collision: Optional[tuple[int, int]] = None
    ov_events: list[int] = field(default_factory=list)

    @property
    def ego(self) -> VehicleState:
        return next(v for v in self.vehicles if v.id == self.ego_id)


# ---------------------------------------------------------------------------
# small pure helpers

def lateral_offset(t_since_start: float, T_lc: float, from_y: float, to_y: float) -> float:
    """Cosine-eased lane-change profile with zero lateral speed at both ends."""
    if T_lc <= 0:
        raise BadDuration(f"lane-change duration must be positive, got {T_lc}")
    s = min(max(t_since_start / T_lc, 0.0), 1.0)
    if s == 1.0:
        return to_y
    return from_y + (to_y - from_y) * (1.0 - math.cos(math.pi * s)) / 2.0


def lateral_speed(t_since_start: float, T_lc: float, from_y: float, to_y: float) -> float:
    if not 0.0 <= t_since_start < T_lc:
        return 0.0
    return (to_y - from_y) * math.pi / (2.0 * T_lc) * math.sin(math.pi * t_since_start / T_lc)


def lane_change_duration(speed_kmh: float, params: EngineParams = EngineParams()) -> float:
    raw = params.lc_base * speed_kmh / params.lc_ref_speed
    return min(max(raw, params.lc_min), params.lc_max)


def detect_collision(a: tuple[float, float, float, float], b: tuple[float, float, float, float]) -> bool:
    """Axis-aligned overlap test for ``(x, y, length, width)`` boxes centred on (x, y).

    Touching edges do not count as contact.
    """
    ax, ay, al, aw = a
    bx, by, bl, bw = b
    return abs(ax - bx) < (al + bl) / 2 and abs(ay - by) < (aw + bw) / 2


def box_gap(a: tuple[float, float, float, float], b: tuple[float, float, float, float]) -> float:
    """Euclidean clearance between two boxes; 0 when they overlap."""
    ax, ay, al, aw = a
    bx, by, bl, bw = b
    dx = max(0.0, abs(ax - bx) - (al + bl) / 2)
    dy = max(0.0, abs(ay - by) - (aw + bw) / 2)
    return math.hypot(dx, dy)


def perturbation_interval(preset: WeatherPreset, params: EngineParams = EngineParams()) -> int:
    severity = (preset.wind + preset.precipitation) / 200.0
    return int(math.floor(params.k_max - (params.k_max - params.k_min) * severity + 0.5))


def perturbation_magnitude(preset: WeatherPreset, params: EngineParams = EngineParams()) -> float:
    return params.y_pert_max * (preset.wind + preset.precipitation) / 200.0


def apply_weather_perturbation(state: VehicleState, preset: WeatherPreset, rng: np.random.Generator,
                               frame: int, params: EngineParams = EngineParams()) -> float:
    """Lateral shove for ``frame``; non-zero only every K-th frame.

    The sign (wind direction) is drawn only on event frames so the stream
    consumption depends on nothing but the frame schedule.
    """
    if frame <= 0 or frame % perturbation_interval(preset, params) != 0:
        return 0.0
    sign = 1.0 if rng.random() < 0.5 else -1.0
    return sign * perturbation_magnitude(preset, params)


def effective_detection_range(preset: WeatherPreset, params: EngineParams = EngineParams()) -> float:
    r = params.r0
    if preset.cloudiness > 60:
        r *= params.v_cloud
    if preset.horizon_line:
        r *= params.v_hl
    r *= 1.0 - params.fog_factor * preset.fog / 100.0
    return max(r, params.r_min)


def rule_of_three_rescale(speed_kmh: float) -> tuple[float, float]:
    """Map a real speed to the 40 km/h-capped simulator scale.

    Returns ``(sim_speed, time_factor)``; timestamps of a rescaled run are
    multiplied by ``time_factor`` to get real-world seconds.
    """
    if speed_kmh < 0:
        raise BadSpeed(f"negative speed {speed_kmh}")
    return speed_kmh * 40.0 / 120.0, 3.0


def idm_accel(v: float, v0: float, gap: Optional[float], lead_v: float, p: EngineParams) -> float:
    free = 1.0 - (v / v0) ** p.idm_delta if v0 > 0 else -1.0
    if gap is None:
        return p.idm_a * free
    s_star = p.idm_s0 + max(0.0, v * p.idm_headway + v * (v - lead_v) / (2.0 * math.sqrt(p.idm_a * p.idm_b)))
    return p.idm_a * (free - (s_star / max(gap, 0.1)) ** 2)


# ---------------------------------------------------------------------------
# engine

def _leader(car: VehicleState, cars: list[VehicleState], max_range: float = math.inf):
    """Nearest vehicle ahead whose lateral extent overlaps ``car``; returns (vehicle, bumper gap)."""
    best, best_gap = None, math.inf
    for other in cars:
        if other is car or other.x <= car.x:
            continue
        if abs(other.y - car.y) >= (other.dims.width + car.dims.width) / 2 + LATERAL_MARGIN:
            continue
        gap = other.rear - car.front
        if gap < best_gap and gap <= max_range:
            best, best_gap = other, gap
    return best, best_gap


def initial_world(spec: ScenarioSpec) -> WorldState:
    cars = []
    for i, v in enumerate(spec.vehicles):
        y = lane_center(v.lane0)
        speed = v.target_speed / KMH
        cars.append(VehicleState(id=i + 1, x=v.x0, y=y, y_base=y, speed=speed, target_speed=speed, dims=v.dims))
    return WorldState(SimClock(spec.dt, spec.duration), 0, cars, spec.ego_index + 1, spec.preset, spec.mv_limit)


def _lane_free(world: WorldState, lane: int, lo: float, hi: float) -> bool:
    for car in world.vehicles:
        if car.id == world.ego_id:
            continue
        if lane_of(car.y) == lane and car.front > lo and car.rear < hi:
            return False
    return True


def decide(world: WorldState, ctl: EgoControllerState, params: EngineParams) -> int:
    """Advance the ego phase machine at the current frame; returns the OV flag."""
    ego = world.ego
    frame = world.frame
    dt = world.clock.dt
    elapsed = (frame - ctl.start_frame) * dt
    if ctl.phase is Phase.FOLLOW:
        lane = lane_of(ego.y_base)
        if lane >= GEOMETRY.n_lanes:
            return 0
        lead, gap = _leader(ego, world.vehicles, effective_detection_range(world.preset, params))
        if lead is None or gap >= params.trigger_gap or ego.target_speed <= lead.speed:
            return 0
        ctl.phase = Phase.CHANGING_LEFT
        ctl.target_id = lead.id
        ctl.start_frame = frame
        ctl.lc_duration = lane_change_duration(round(ego.speed_kmh, 2), params)
        ctl.origin_lane = lane
        ctl.from_y = ego.y_base
        ctl.to_y = lane_center(lane + 1)
        world.ov_events.append(frame)
        return 1
    if ctl.phase is Phase.CHANGING_LEFT:
        if elapsed >= ctl.lc_duration:
            ctl.phase = Phase.PASSING
        return 0
    if ctl.phase is Phase.PASSING:
        target = next(v for v in world.vehicles if v.id == ctl.target_id)
        if ego.rear < target.front + params.return_margin:
            return 0
        lo, hi = ego.rear - params.return_margin, ego.front + params.return_margin
        if not _lane_free(world, ctl.origin_lane, lo, hi):
            return 0
        ctl.phase = Phase.CHANGING_RIGHT
        ctl.start_frame = frame
        ctl.lc_duration = lane_change_duration(round(ego.speed_kmh, 2), params)
        ctl.from_y = ego.y_base
        ctl.to_y = lane_center(ctl.origin_lane)
        world.ov_events.append(frame)
        return 1
    if ctl.phase is Phase.CHANGING_RIGHT:
        if elapsed >= ctl.lc_duration:
            ctl.phase = Phase.DONE
        return 0
    return 0


def step(world: WorldState, ctl: EgoControllerState, rng: np.random.Generator,
         params: EngineParams = EngineParams()) -> tuple[WorldState, EgoControllerState]:
    """Integrate one frame in place (semi-implicit Euler) and check ego contact."""
    dt = world.clock.dt
    detect = effective_detection_range(world.preset, params)
    accels = []
    for car in world.vehicles:
        if car.collided:
            a = -params.collision_decel
        elif car.id == world.ego_id:
            lead, gap = _leader(car, world.vehicles, detect)
            a = idm_accel(car.speed, car.target_speed, gap if lead else None, lead.speed if lead else 0.0, params)
        else:
            lead, gap = _leader(car, world.vehicles)
            if lead is None:
                a = min(max((car.target_speed - car.speed) / dt, -params.a_max), params.a_max)
            else:
                a = min(idm_accel(car.speed, car.target_speed, gap, lead.speed, params), params.a_max)
        accels.append(max(a, -params.max_decel))

    world.frame += 1
    frame = world.frame
    keep = math.exp(-dt / params.lane_keep_tau)
    for car, a in zip(world.vehicles, accels):
        new_speed = max(0.0, car.speed + a * dt)
        car.accel = (new_speed - car.speed) / dt
        car.speed = new_speed
        car.x += car.speed * dt
        vy = 0.0
        if car.id == world.ego_id and ctl.phase in (Phase.CHANGING_LEFT, Phase.CHANGING_RIGHT):
            t = (frame - ctl.start_frame) * dt
            car.y_base = lateral_offset(t, ctl.lc_duration, ctl.from_y, ctl.to_y)
            vy = lateral_speed(t, ctl.lc_duration, ctl.from_y, ctl.to_y)
        shove = 0.0
        if car.id == world.ego_id and not car.collided:
            shove = apply_weather_perturbation(car, world.preset, rng, frame, params)
        # lane keeping pulls the offset back, starting the frame after a shove
        car.y_off = car.y_off + shove if shove else car.y_off * keep
        car.y = car.y_base + car.y_off
        norm = math.hypot(car.speed, vy)
        car.heading = (car.speed / norm, vy / norm) if norm > 0 else (1.0, 0.0)

    if world.collision is None:
        ego = world.ego
        for other in world.vehicles:
            if other.id != ego.id and detect_collision(ego.box, other.box):
                world.collision = (frame, other.id)
                ego.collided = other.collided = True
                ctl.phase = Phase.ABORTED
                break
    return world, ctl


def _r2(v: float) -> float:
    r = round(v, 2)
    return 0.0 if r == 0 else r


def record(world: WorldState, sim_id: int, ov: int) -> FrameRecord:
    ego = world.ego
    # lanes follow the logged (rounded) coordinate so the log is self-consistent
    ego_lane = lane_of(_r2(ego.y))
    rt, lt = line_types(ego_lane)
    lwr, lwl = neighbour_widths(ego_lane)
    cars = sorted(world.vehicles, key=lambda c: c.id)
    p = world.preset
    collided_now = world.collision is not None and world.collision[0] == world.frame
    return FrameRecord(
        S=sim_id,
        F=world.frame,
        TS=world.clock.timestamp(world.frame),
        IDego=world.ego_id,
        Dim=tuple((c.id, _r2(c.dims.length), _r2(c.dims.width), _r2(c.dims.height)) for c in cars),
        L=tuple((c.id, _r2(c.x), _r2(c.y), lane_of(_r2(c.y))) for c in cars),
        V=tuple((c.id, _r2(c.speed_kmh)) for c in cars),
        D=tuple((c.id, _r2(c.heading[0]), _r2(c.heading[1])) for c in cars),
        A=tuple((c.id, _r2(c.accel)) for c in cars),
        MV=world.mv_limit,
        RT=rt.value,
        LT=lt.value,
        LW=GEOMETRY.lane_width,
        LWR=lwr,
        LWL=lwl,
        C=world.collision[1] if collided_now else None,
        Prec=p.precipitation,
        Fog=p.fog,
        Wind=p.wind,
        DN="Night" if p.is_night else "Day",
        HL="Yes" if p.horizon_line else "No",
        OV=ov,
    )


def run(spec: ScenarioSpec, params: EngineParams = EngineParams()) -> SimulationLog:
    """Simulate ``spec`` for its full duration and return the frame log."""
    _, rng = streams(spec.seed)
    world = initial_world(spec)
    ctl = EgoControllerState()
    infos = tuple(VehicleInfo(i + 1, v.kind, v.colour) for i, v in enumerate(spec.vehicles))
    log = SimulationLog(spec.sim_id, world.ego_id, spec.dt, spec.duration, spec.preset.name, infos, seed=spec.seed)
    n_frames = world.clock.n_frames
    log.frames.append(record(world, spec.sim_id, decide(world, ctl, params)))
    for _ in range(n_frames - 1):
        step(world, ctl, rng, params)
        ov = decide(world, ctl, params)
        log.frames.append(record(world, spec.sim_id, ov))
    return log
