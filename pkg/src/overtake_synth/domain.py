"""Core value types shared by every stage of the pipeline.

The road is a straight one-way segment with five lanes stacked along the
y axis.  Lane 1 is the rightmost lane; "left" means increasing lane index.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from decimal import Decimal
from typing import Mapping

from .errors import BadLane, OutOfRoad, UnknownCategory


@dataclass(frozen=True)
class LaneGeometry:
    x_min: float = 320.0
    x_max: float = 450.0
    lane_band_width: float = 4.0
    first_band_y: float = 238.0
    n_lanes: int = 5
    lane_width: float = 3.5
    shoulder_width: float = 0.5

    @property
    def window_length(self) -> float:
        return self.x_max - self.x_min

    @property
    def y_max(self) -> float:
        return self.first_band_y + self.n_lanes * self.lane_band_width


GEOMETRY = LaneGeometry()


def lane_of(y: float, geometry: LaneGeometry = GEOMETRY) -> int:
    """Return the 1-based lane whose half-open band ``[lo, hi)`` contains ``y``."""
    if not geometry.first_band_y <= y < geometry.y_max:
        raise OutOfRoad(f"y={y} outside [{geometry.first_band_y}, {geometry.y_max})")
    lane = int((y - geometry.first_band_y) // geometry.lane_band_width) + 1
    # guard against float floor landing one band high right below y_max
    return min(lane, geometry.n_lanes)


def lane_center(lane: int, geometry: LaneGeometry = GEOMETRY) -> float:
    if not isinstance(lane, int) or not 1 <= lane <= geometry.n_lanes:
        raise BadLane(f"lane {lane!r} outside 1..{geometry.n_lanes}")
    return geometry.first_band_y + geometry.lane_band_width * (lane - 1) + geometry.lane_band_width / 2


class LineType(str, enum.Enum):
    SOLID = "Solid"
    BROKEN = "Broken"


def line_types(lane: int, geometry: LaneGeometry = GEOMETRY) -> tuple[LineType, LineType]:
    """(right, left) marking types bounding ``lane``; only the road edges are solid."""
    if not 1 <= lane <= geometry.n_lanes:
        raise BadLane(f"lane {lane!r} outside 1..{geometry.n_lanes}")
    right = LineType.SOLID if lane == 1 else LineType.BROKEN
    left = LineType.SOLID if lane == geometry.n_lanes else LineType.BROKEN
    return right, left


def neighbour_widths(lane: int, geometry: LaneGeometry = GEOMETRY) -> tuple[float, float]:
    """(right, left) width of the strip next to ``lane``: a shoulder at the edges."""
    right = geometry.shoulder_width if lane == 1 else geometry.lane_width
    left = geometry.shoulder_width if lane == geometry.n_lanes else geometry.lane_width
    return right, left


class VehicleKind(str, enum.Enum):
    S = "S"
    M = "M"
    L = "L"
    V = "V"
    T = "T"
    MC = "MC"
    B = "B"


EGO_KINDS = (VehicleKind.S, VehicleKind.M, VehicleKind.L, VehicleKind.V, VehicleKind.T)

COLOURS = ("yellow", "blue", "red", "green", "orange", "grey", "white", "brown")


@dataclass(frozen=True)
class Dimensions:
    length: float
    width: float
    height: float


DEFAULT_DIMENSIONS: Mapping[VehicleKind, Dimensions] = {
    VehicleKind.S: Dimensions(4.0, 1.8, 1.5),
    VehicleKind.M: Dimensions(4.6, 1.9, 1.6),
    VehicleKind.L: Dimensions(5.0, 2.0, 1.8),
    VehicleKind.V: Dimensions(5.4, 2.0, 2.2),
    VehicleKind.T: Dimensions(7.5, 2.5, 3.5),
    VehicleKind.MC: Dimensions(2.2, 0.8, 1.4),
    VehicleKind.B: Dimensions(1.8, 0.6, 1.2),
}


@dataclass(frozen=True)
class WeatherPreset:
    name: str
    is_night: bool
    horizon_line: bool
    cloudiness: float
    precipitation: float
    wind: float
    fog: float


# name, night, horizon line, cloudiness, precipitation, wind, fog
_PRESET_TABLE = (
    ("ClearNoon", False, False, 5, 0, 10, 2),
    ("ClearSunset", False, True, 5, 0, 10, 2),
    ("SoftRainNoon", False, False, 40, 30, 30, 10),
    ("HardRainNoon", False, False, 90, 100, 100, 20),
    ("ClearNight", True, False, 5, 0, 10, 2),
    ("CloudyNight", True, False, 90, 0, 10, 90),
    ("SoftRainNight", True, False, 40, 30, 30, 30),
    ("MidRainNight", True, False, 70, 60, 60, 60),
    ("HardRainNight", True, False, 90, 100, 100, 100),
)

PRESETS: tuple[WeatherPreset, ...] = tuple(
    WeatherPreset(n, night, hl, float(c), float(p), float(w), float(f))
    for n, night, hl, c, p, w, f in _PRESET_TABLE
)
PRESETS_BY_NAME: Mapping[str, WeatherPreset] = {p.name: p for p in PRESETS}


@dataclass(frozen=True)
class SimClock:
    dt: float = 0.05
    duration: float = 20.0

    @property
    def n_frames(self) -> int:
        """Frame count including frame 0, e.g. 401 for 20 s at 0.05 s."""
        return int(round(self.duration / self.dt)) + 1

    def timestamp(self, frame: int) -> float:
        # decimal product keeps 70 * 0.05 == 3.5 instead of 3.5000000000000004
        return float(Decimal(repr(self.dt)) * frame)


class ClassLabel(str, enum.Enum):
    SUCCESS_L = "Success_L"
    SUCCESS_I = "Success_I"
    UNSUCCESS_COL = "Unsuccess_col"
    UNSUCCESS_NCOL = "Unsuccess_ncol"
    NO_ATTEMPT = "No_attempt"


CATEGORY_CODES: Mapping[str, Mapping[str, int]] = {
    "DN": {"Day": 0, "Night": 1},
    "HL": {"No": 0, "Yes": 1},
    "TE": {k.value: i for i, k in enumerate(VehicleKind)},
    "TP": {k.value: i for i, k in enumerate(VehicleKind)},
}
_CATEGORY_DECODE = {field: {v: k for k, v in codes.items()} for field, codes in CATEGORY_CODES.items()}


def encode_categorical(row: Mapping[str, object]) -> dict[str, object]:
    """Return a copy of ``row`` with DN, HL, TE and TP mapped to integer codes."""
    out = dict(row)
    for field, codes in CATEGORY_CODES.items():
        if field not in out:
            raise UnknownCategory(f"missing categorical field {field}")
        value = out[field]
        if isinstance(value, enum.Enum):
            value = value.value
        try:
            out[field] = codes[value]
        except (KeyError, TypeError):
            raise UnknownCategory(f"{field}={value!r} not in {sorted(codes)}") from None
    return out


def decode_categorical(row: Mapping[str, object]) -> dict[str, object]:
    out = dict(row)
    for field, codes in _CATEGORY_DECODE.items():
        if field not in out:
            raise UnknownCategory(f"missing categorical field {field}")
        try:
            out[field] = codes[int(out[field])]
        except (KeyError, TypeError, ValueError):
            raise UnknownCategory(f"{field} code {out[field]!r} not in {sorted(codes)}") from None
    return out
