"""Post-hoc reading of a frame log: overtake stages, class label, rule checks."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

from .config import EngineParams
from .domain import ClassLabel
from .errors import MalformedLog
from .simengine import SimulationLog, box_gap, lane_change_duration

G_SAFE = 2.0


class Stage(str, enum.Enum):
    NONE = "NONE"
    STAGE2 = "STAGE2"
    STAGE3 = "STAGE3"


class Rule(str, enum.Enum):
    SOLID_LINE_CROSS = "SOLID_LINE_CROSS"
    SPEEDING = "SPEEDING"
    UNSAFE_GAP = "UNSAFE_GAP"


@dataclass(frozen=True)
class RuleViolation:
    rule: Rule
    frame: int
    detail: str


@dataclass(frozen=True)
class ManeuverTrace:
    t_a: Optional[float]
    t_b: Optional[float]
    t_collision: Optional[float]
    stages_reached: Stage
    violations: tuple[RuleViolation, ...] = field(default_factory=tuple)
    frame_a: Optional[int] = None
    frame_b: Optional[int] = None
    collision_id: Optional[int] = None


def check_log(log: SimulationLog) -> None:
    """Raise :class:`MalformedLog` unless frames are contiguous over a fixed vehicle set."""
    if not log.frames:
        raise MalformedLog("log has no frames")
    ids = None
    for i, fr in enumerate(log.frames):
        if fr.F != i:
            raise MalformedLog(f"frame {i} has F={fr.F}")
        if fr.IDego != log.ego_id:
            raise MalformedLog(f"frame {i}: IDego {fr.IDego} != {log.ego_id}")
        if fr.OV not in (0, 1):
            raise MalformedLog(f"frame {i}: OV={fr.OV!r}")
        current = [v[0] for v in fr.L]
        if ids is None:
            ids = current
        elif current != ids:
            raise MalformedLog(f"frame {i}: vehicle set changed")
        if [v[0] for v in fr.V] != ids or [v[0] for v in fr.Dim] != ids:
            raise MalformedLog(f"frame {i}: per-vehicle cells disagree on ids")
        if log.ego_id not in ids:
            raise MalformedLog(f"frame {i}: ego {log.ego_id} absent")
    if sum(fr.OV for fr in log.frames) > 2:
        raise MalformedLog("more than two OV events")


def _ego_lane(log: SimulationLog, frame: int) -> int:
    return log.frames[frame].position(log.ego_id)[2]


def manoeuvre_end(log: SimulationLog, trace: ManeuverTrace, params: EngineParams = EngineParams()) -> float:
    """Time the manoeuvre ends: contact, completion of the return change, or run end."""
    if trace.t_a is None:
        raise ValueError("no manoeuvre in this log")
    if trace.t_collision is not None and trace.t_collision >= trace.t_a:
        return trace.t_collision
    if trace.stages_reached is Stage.STAGE3:
        speed = log.frames[trace.frame_b].speed(log.ego_id)
        return trace.t_b + lane_change_duration(speed, params)
    return log.frames[-1].TS


def stage_trace(log: SimulationLog, params: EngineParams = EngineParams()) -> ManeuverTrace:
    check_log(log)
    ov = [fr.F for fr in log.frames if fr.OV == 1]
    hit = next((fr for fr in log.frames if fr.C is not None), None)
    t_col = hit.TS if hit else None
    col_id = hit.C if hit else None
    if not ov:
        return ManeuverTrace(None, None, t_col, Stage.NONE, collision_id=col_id)
    frame_a = ov[0]
    frame_b = ov[1] if len(ov) > 1 else None
    stage = Stage.STAGE2
    if frame_b is not None and _ego_lane(log, len(log.frames) - 1) == _ego_lane(log, 0):
        stage = Stage.STAGE3
    trace = ManeuverTrace(
        t_a=log.frames[frame_a].TS,
        t_b=log.frames[frame_b].TS if frame_b is not None else None,
        t_collision=t_col,
        stages_reached=stage,
        frame_a=frame_a,
        frame_b=frame_b,
        collision_id=col_id,
    )
    return ManeuverTrace(**{**trace.__dict__, "violations": tuple(legality_check(log, trace, params))})


def legality_check(log: SimulationLog, trace: ManeuverTrace, params: EngineParams = EngineParams(),
                   g_safe: float = G_SAFE) -> list[RuleViolation]:
    """Traffic-rule violations of the ego between manoeuvre start and end."""
    if trace.frame_a is None:
        raise ValueError("legality_check needs a manoeuvre start")
    dt = log.dt
    end = manoeuvre_end(log, trace, params)
    last = min(len(log.frames) - 1, int(math.ceil(end / dt - 1e-9)))
    first = trace.frame_a
    ego = log.ego_id
    out: list[RuleViolation] = []

    for f in range(max(first, 1), last + 1):
        before, after = log.frames[f - 1], log.frames[f]
        lane0, lane1 = before.position(ego)[2], after.position(ego)[2]
        if lane1 == lane0:
            continue
        line = before.LT if lane1 > lane0 else before.RT
        if line == "Solid":
            out.append(RuleViolation(Rule.SOLID_LINE_CROSS, f, f"lane {lane0}->{lane1} across solid line"))
            break

    for f in range(first, last + 1):
        fr = log.frames[f]
        v = fr.speed(ego)
        if v > fr.MV:
            out.append(RuleViolation(Rule.SPEEDING, f, f"{v:g} km/h over limit {fr.MV:g}"))
            break

    for f in range(first, last + 1):
        fr = log.frames[f]
        ex, ey, _ = fr.position(ego)
        el, ew, _ = fr.dims(ego)
        closest = None
        for vid, x, y, _lane in fr.L:
            if vid == ego:
                continue
            length, width, _ = fr.dims(vid)
            gap = box_gap((ex, ey, el, ew), (x, y, length, width))
            if gap < g_safe and (closest is None or gap < closest[1]):
                closest = (vid, gap)
        if closest is not None:
            out.append(RuleViolation(Rule.UNSAFE_GAP, f, f"{closest[1]:.2f} m to vehicle {closest[0]}"))
            break
    return out


def classify(log: SimulationLog, trace: ManeuverTrace) -> ClassLabel:
    if trace.stages_reached is Stage.NONE:
        return ClassLabel.NO_ATTEMPT
    if trace.t_collision is not None:
        return ClassLabel.UNSUCCESS_COL
    if trace.stages_reached is Stage.STAGE2:
        return ClassLabel.UNSUCCESS_NCOL
    return ClassLabel.SUCCESS_I if trace.violations else ClassLabel.SUCCESS_L


def verdict(log: SimulationLog, params: EngineParams = EngineParams()) -> dict:
    """JSON-ready per-run record of the trace, violations and label."""
    trace = stage_trace(log, params)
    label = classify(log, trace)
    return {
        "sim_id": log.sim_id,
        "label": label.value,
        "stage": trace.stages_reached.value,
        "t_a": trace.t_a,
        "t_b": trace.t_b,
        "t_collision": trace.t_collision,
        "collision_id": trace.collision_id,
        "violations": [{"rule": v.rule.value, "frame": v.frame, "detail": v.detail} for v in trace.violations],
    }
