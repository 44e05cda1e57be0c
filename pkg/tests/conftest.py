from __future__ import annotations

from pathlib import Path

import pytest

from overtake_synth.domain import (
    DEFAULT_DIMENSIONS,
    GEOMETRY,
    PRESETS_BY_NAME,
    SimClock,
    VehicleKind,
    lane_of,
    line_types,
    neighbour_widths,
)
from overtake_synth.sampler import ScenarioSpec, VehicleSpawn
from overtake_synth.simengine import FrameRecord, SimulationLog, VehicleInfo

FIXTURES = Path(__file__).parent / "fixtures"

# (criterion number, PASS/FAIL, detail) appended by test_acceptance.py
ACCEPTANCE: list[tuple[int, str, str]] = []


def spawn(kind="M", x=340.0, lane=2, speed=80.0, colour="red"):
    kind = VehicleKind(kind)
    return VehicleSpawn(kind, colour, x, lane, speed, DEFAULT_DIMENSIONS[kind])


def make_spec(*vehicles, preset="ClearNoon", mv_limit=120.0, duration=20.0, seed=1, sim_id=1):
    return ScenarioSpec(sim_id=sim_id, seed=seed, vehicles=tuple(vehicles), ego_index=0,
                        preset=PRESETS_BY_NAME[preset], duration=duration, dt=0.05, mv_limit=mv_limit)


def hand_log(frames, kinds=("M", "M"), mv=120.0, preset="ClearNoon", line_override=None, sim_id=1):
    """Build a log from per-frame dicts.

    Each frame dict has ``pos``: {vid: (x, y, speed_kmh)}, optional ``ov`` and ``c``.
    Vehicle 1 is the ego.
    """
    p = PRESETS_BY_NAME[preset]
    clock = SimClock(0.05, (len(frames) - 1) * 0.05)
    dims = {i + 1: DEFAULT_DIMENSIONS[VehicleKind(k)] for i, k in enumerate(kinds)}
    records = []
    for f, spec in enumerate(frames):
        pos = spec["pos"]
        ego_lane = lane_of(pos[1][1])
        rt, lt = line_types(ego_lane)
        rt, lt = rt.value, lt.value
        if line_override and f in line_override:
            rt, lt = line_override[f]
        lwr, lwl = neighbour_widths(ego_lane)
        ids = sorted(pos)
        records.append(FrameRecord(
            S=sim_id, F=f, TS=clock.timestamp(f), IDego=1,
            Dim=tuple((i, dims[i].length, dims[i].width, dims[i].height) for i in ids),
            L=tuple((i, pos[i][0], pos[i][1], lane_of(pos[i][1])) for i in ids),
            V=tuple((i, pos[i][2]) for i in ids),
            D=tuple((i, 1.0, 0.0) for i in ids),
            A=tuple((i, 0.0) for i in ids),
            MV=mv, RT=rt, LT=lt, LW=GEOMETRY.lane_width, LWR=lwr, LWL=lwl,
            C=spec.get("c"), Prec=p.precipitation, Fog=p.fog, Wind=p.wind,
            DN="Night" if p.is_night else "Day", HL="Yes" if p.horizon_line else "No",
            OV=spec.get("ov", 0),
        ))
    vehicles = tuple(VehicleInfo(i + 1, VehicleKind(k), "red") for i, k in enumerate(kinds))
    return SimulationLog(sim_id, 1, 0.05, clock.duration, preset, vehicles, records, seed=0)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, status, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{status} criterion {n:2d}: {detail}")
