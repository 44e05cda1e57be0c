import pytest
from hypothesis import given
from hypothesis import strategies as st

from overtake_synth.domain import (
    CATEGORY_CODES,
    GEOMETRY,
    PRESETS,
    SimClock,
    decode_categorical,
    encode_categorical,
    lane_center,
    lane_of,
)
from overtake_synth.errors import BadLane, OutOfRoad, UnknownCategory


@pytest.mark.parametrize("y, lane", [(240, 1), (238, 1), (257.9, 5), (241.999, 1), (242, 2), (251.58, 4)])
def test_lane_of(y, lane):
    assert lane_of(y) == lane


@pytest.mark.parametrize("y", [237.99, 258, 300, -1])
def test_lane_of_off_road(y):
    with pytest.raises(OutOfRoad):
        lane_of(y)


@pytest.mark.parametrize("lane, y", [(1, 240), (3, 248), (5, 256)])
def test_lane_center(lane, y):
    assert lane_center(lane) == y


@pytest.mark.parametrize("lane", [0, 6, -7])
def test_lane_center_bad_lane(lane):
    with pytest.raises(BadLane):
        lane_center(lane)


def test_geometry_window():
    assert GEOMETRY.x_max - GEOMETRY.x_min == 130


@given(st.floats(min_value=238, max_value=258, exclude_max=True))
def test_lane_of_center_roundtrip(y):
    lane = lane_of(y)
    assert lane_of(lane_center(lane)) == lane
    lo = 238 + 4 * (lane - 1)
    assert lo <= y < lo + 4


def test_encode_examples():
    row = encode_categorical({"DN": "Night", "HL": "No", "TE": "S", "TP": "B", "WT": 1.0})
    assert row == {"DN": 1, "HL": 0, "TE": 0, "TP": 6, "WT": 1.0}


@pytest.mark.parametrize("field, bad", [("DN", "Dusk"), ("HL", "Maybe"), ("TE", "X"), ("TP", None)])
def test_encode_unknown(field, bad):
    row = {"DN": "Day", "HL": "No", "TE": "S", "TP": "S"}
    row[field] = bad
    with pytest.raises(UnknownCategory):
        encode_categorical(row)


def test_encode_is_bijective():
    for field, codes in CATEGORY_CODES.items():
        assert sorted(codes.values()) == list(range(len(codes)))
    for dn in ("Day", "Night"):
        for hl in ("Yes", "No"):
            for te in CATEGORY_CODES["TE"]:
                row = {"DN": dn, "HL": hl, "TE": te, "TP": te}
                assert decode_categorical(encode_categorical(row)) == row


def test_preset_table_invariants():
    assert len(PRESETS) == 9
    assert sum(p.is_night for p in PRESETS) == 5
    assert [p.name for p in PRESETS if p.horizon_line] == ["ClearSunset"]
    for p in PRESETS:
        assert p.wind == max(10, p.precipitation)
        assert p.fog >= 2 and p.wind >= 10 and 0 <= p.precipitation <= 100


def test_clock_exact_timestamps():
    clock = SimClock()
    assert clock.n_frames == 401
    assert clock.timestamp(70) == 3.5
    for f in range(clock.n_frames):
        assert abs(clock.timestamp(f) - 0.05 * f) < 1e-12
        if f % 20 == 0:
            assert clock.timestamp(f) == f // 20
