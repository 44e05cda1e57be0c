"""Per-simulation feature rows (static + dynamic) derived purely from a frame log."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Optional

from .config import EngineParams
from .domain import GEOMETRY, ClassLabel, VehicleKind
from .detector import ManeuverTrace, manoeuvre_end
from .errors import BadInstant
from .simengine import FrameRecord, SimulationLog

FEATURE_COLUMNS = ("DN", "HL", "TE", "TP", "WT", "OT", "NV", "SE", "SP", "DSEP", "D", "OLR",
                   "PREC", "WIND", "FOG", "CLASS")
CATEGORICAL_FEATURES = ("DN", "HL", "TE", "TP")
NUMERIC_FEATURES = ("WT", "OT", "NV", "SE", "SP", "DSEP", "D", "OLR", "PREC", "WIND", "FOG")
DIGITS = 4


@dataclass(frozen=True)
class FeatureRow:
    DN: str
    HL: str
    TE: VehicleKind
    TP: VehicleKind
    WT: float
    OT: float
    NV: int
    SE: float
    SP: float
    DSEP: float
    D: float
    OLR: float
    PREC: float
    WIND: float
    FOG: float
    CLASS: ClassLabel

    def as_dict(self) -> dict:
        return asdict(self)


def _r(v: float) -> float:
    r = round(v, DIGITS)
    return 0.0 if r == 0 else r


def preceding_vehicle(frame: FrameRecord, ego_id: int) -> Optional[int]:
    """Id of the nearest vehicle ahead of the ego in the ego's lane, if any."""
    ex, _, lane = frame.position(ego_id)
    best = None
    for vid, x, _y, vlane in frame.L:
        if vid != ego_id and vlane == lane and x > ex and (best is None or x < best[1]):
            best = (vid, x)
    return best[0] if best else None


def occupancy_rate(frame: FrameRecord, lane: int, geometry=GEOMETRY) -> float:
    """Percent of the observation window's length covered by vehicles in ``lane``."""
    covered = 0.0
    for vid, x, _y, vlane in frame.L:
        if vlane == lane and geometry.x_min <= x <= geometry.x_max:
            covered += frame.dims(vid)[0]
    return 100.0 * covered / geometry.window_length


def _left_occupancy(frame: FrameRecord, ego_id: int) -> float:
    lane = frame.position(ego_id)[2] + 1
    if not 1 <= lane <= GEOMETRY.n_lanes:
        return 0.0
    return occupancy_rate(frame, lane)


def _frame_at(log: SimulationLog, t: float) -> FrameRecord:
    k = t / log.dt
    idx = int(round(k))
    if abs(k - idx) > 1e-6 or not 0 <= idx < len(log.frames):
        raise BadInstant(f"t={t} is not on the {log.dt} s frame grid of this log")
    return log.frames[idx]


def extract_static(log: SimulationLog, trace: ManeuverTrace, label: ClassLabel,
                   params: EngineParams = EngineParams()) -> dict:
    first = log.frames[0]
    target = preceding_vehicle(first, log.ego_id)
    duration = log.frames[-1].TS
    if label is ClassLabel.NO_ATTEMPT:
        wt, ot = duration, 0.0
    else:
        wt = trace.t_a
        ot = manoeuvre_end(log, trace, params) - trace.t_a
    return {
        "DN": first.DN,
        "HL": first.HL,
        "TE": log.kind_of(log.ego_id),
        "TP": log.kind_of(target) if target is not None else log.kind_of(log.ego_id),
        "WT": _r(wt),
        "OT": _r(ot),
        "NV": len(first.L),
    }


def extract_dynamic_at(log: SimulationLog, t: float, target_id: Optional[int]) -> dict:
    fr = _frame_at(log, t)
    ego = log.ego_id
    se = fr.speed(ego)
    if target_id is None:
        sp, dist = se, 0.0
    else:
        sp = fr.speed(target_id)
        ex, ey, _ = fr.position(ego)
        tx, ty, _ = fr.position(target_id)
        dist = math.hypot(tx - ex, ty - ey)
    return {
        "SE": _r(se),
        "SP": _r(sp),
        "DSEP": _r(_r(se) - _r(sp)),
        "D": _r(dist),
        "OLR": _r(_left_occupancy(fr, ego)),
        "PREC": fr.Prec,
        "WIND": fr.Wind,
        "FOG": fr.Fog,
    }


def _averaged_dynamic(log: SimulationLog) -> dict:
    ego = log.ego_id
    se, olr, sp, dist = [], [], [], []
    for fr in log.frames:
        se.append(fr.speed(ego))
        olr.append(_left_occupancy(fr, ego))
        target = preceding_vehicle(fr, ego)
        if target is not None:
            sp.append(fr.speed(target))
            ex, ey, _ = fr.position(ego)
            tx, ty, _ = fr.position(target)
            dist.append(math.hypot(tx - ex, ty - ey))
    mean = lambda xs: math.fsum(xs) / len(xs)  # noqa: E731
    se_m = _r(mean(se))
    # frames without anyone ahead carry no target measurement
    sp_m = _r(mean(sp)) if sp else se_m
    last = log.frames[-1]
    return {
        "SE": se_m,
        "SP": sp_m,
        "DSEP": _r(se_m - sp_m),
        "D": _r(mean(dist)) if dist else 0.0,
        "OLR": _r(mean(olr)),
        "PREC": last.Prec,
        "WIND": last.Wind,
        "FOG": last.Fog,
    }


def feature_row(log: SimulationLog, trace: ManeuverTrace, label: ClassLabel,
                params: EngineParams = EngineParams()) -> FeatureRow:
    static = extract_static(log, trace, label, params)
    if label is ClassLabel.NO_ATTEMPT:
        dynamic = _averaged_dynamic(log)
    else:
        target = preceding_vehicle(log.frames[0], log.ego_id)
        dynamic = extract_dynamic_at(log, trace.t_a, target)
    return FeatureRow(**static, **dynamic, CLASS=label)


def impute_missing(rows: Iterable[Mapping[str, object]], fill: float = 0) -> tuple[list[dict], list[tuple[int, str]]]:
    """Replace absent values (``None`` or empty string) with ``fill``.

    Returns the imputed rows and a report of ``(row index, column)`` pairs
    that were filled.
    """
    out, report = [], []
    for i, row in enumerate(rows):
        fixed = dict(row)
        for key, value in row.items():
            if value is None or value == "":
                fixed[key] = fill
                report.append((i, key))
        out.append(fixed)
    return out, report
