"""Readers and writers for every file the pipeline emits.

Frame logs are CSV with one row per frame and the 22 columns of
``FRAME_COLUMNS``.  Per-vehicle cells hold ``;``-separated tuples such as
``(1,351.35,251.58,4);(2,355.82,251.68,4)``.  Vehicle kinds and colours
are not part of the frame schema; they live in a ``.meta.json`` sidecar.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import re
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .domain import CATEGORY_CODES, ClassLabel, VehicleKind, decode_categorical, encode_categorical
from .errors import ParseError, ReferentialError, SchemaMismatch
from .features import FEATURE_COLUMNS, FeatureRow
from .simengine import FrameRecord, SimulationLog, VehicleInfo

FRAME_COLUMNS = ("S", "F", "TS", "IDego", "Dim", "L", "V", "D", "A", "MV", "RT", "LT", "LW", "LWR", "LWL",
                 "C", "Prec", "Fog", "Wind", "DN", "HL", "OV")
# per-vehicle cell layouts: converters after the leading vehicle id
_TUPLE_LAYOUT = {
    "Dim": (float, float, float),
    "L": (float, float, int),
    "V": (float,),
    "D": (float, float),
    "A": (float,),
}
_TUPLE_RE = re.compile(r"\(([^()]*)\)")
_SEPARATOR_RE = re.compile(r"[\s;]*")


def fmt_num(v: float) -> str:
    """Shortest text that parses back to the same float; integral values drop ``.0``."""
    v = float(v)
    if v == 0:
        return "0"
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _fmt2(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _fmt_tuples(cells: Sequence[tuple], column: str) -> str:
    layout = _TUPLE_LAYOUT[column]
    parts = []
    for cell in cells:
        fields = [str(int(cell[0]))]
        for conv, value in zip(layout, cell[1:]):
            fields.append(str(int(value)) if conv is int else _fmt2(value))
        parts.append("(" + ",".join(fields) + ")")
    return ";".join(parts)


def _parse_tuples(text: str, column: str, row: int) -> tuple:
    layout = _TUPLE_LAYOUT[column]
    if _SEPARATOR_RE.fullmatch(_TUPLE_RE.sub("", text)) is None:
        raise ParseError(f"unexpected text outside tuples: {text!r}", row, column)
    out = []
    for body in _TUPLE_RE.findall(text):
        parts = [p.strip() for p in body.split(",")]
        if len(parts) != len(layout) + 1:
            raise ParseError(f"tuple ({body}) needs {len(layout) + 1} fields", row, column)
        try:
            out.append((int(parts[0]), *(conv(p) for conv, p in zip(layout, parts[1:]))))
        except ValueError:
            raise ParseError(f"bad number in ({body})", row, column) from None
    return tuple(out)


def frame_row(fr: FrameRecord) -> list[str]:
    return [
        str(fr.S), str(fr.F), fmt_num(fr.TS), str(fr.IDego),
        _fmt_tuples(fr.Dim, "Dim"), _fmt_tuples(fr.L, "L"), _fmt_tuples(fr.V, "V"), _fmt_tuples(fr.D, "D"), _fmt_tuples(fr.A, "A"),
        fmt_num(fr.MV), fr.RT, fr.LT, fmt_num(fr.LW), fmt_num(fr.LWR), fmt_num(fr.LWL),
        "" if fr.C is None else str(fr.C),
        fmt_num(fr.Prec), fmt_num(fr.Fog), fmt_num(fr.Wind), fr.DN, fr.HL, str(fr.OV),
    ]


def parse_frame_row(cells: Sequence[str], row: int = 1) -> FrameRecord:
    """Parse one data row of a frame log; ``row`` is used in error messages."""
    if len(cells) != len(FRAME_COLUMNS):
        raise ParseError(f"expected {len(FRAME_COLUMNS)} cells, got {len(cells)}", row)
    values: dict[str, object] = {}
    for column, text in zip(FRAME_COLUMNS, cells):
        text = text.strip()
        try:
            if column in ("S", "F", "IDego", "OV"):
                values[column] = int(text)
            elif column == "C":
                values[column] = int(text) if text else None
            elif column in _TUPLE_LAYOUT:
                values[column] = _parse_tuples(text, column, row)
            elif column in ("RT", "LT", "DN", "HL"):
                if not text:
                    raise ValueError
                values[column] = text
            else:
                values[column] = float(text)
        except ValueError:
            raise ParseError(f"cannot parse {text!r}", row, column) from None
    if values["OV"] not in (0, 1):
        raise ParseError(f"OV must be 0 or 1, got {values['OV']}", row, "OV")
    if values["DN"] not in ("Day", "Night"):
        raise ParseError(f"DN must be Day or Night, got {values['DN']!r}", row, "DN")
    if values["HL"] not in ("Yes", "No"):
        raise ParseError(f"HL must be Yes or No, got {values['HL']!r}", row, "HL")
    return FrameRecord(**values)


def meta_path(path: Path) -> Path:
    return path.with_name(path.stem + ".meta.json")


def _meta(log: SimulationLog) -> dict:
    return {
        "sim_id": log.sim_id,
        "seed": log.seed,
        "ego_id": log.ego_id,
        "dt": log.dt,
        "duration": log.duration,
        "preset": log.preset,
        "vehicles": [{"id": v.id, "kind": v.kind.value, "colour": v.colour} for v in log.vehicles],
    }


def dumps_frame_log(log: SimulationLog) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FRAME_COLUMNS)
    for fr in log.frames:
        w.writerow(frame_row(fr))
    return buf.getvalue()


def write_frame_log(log: SimulationLog, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_frame_log(log), encoding="utf-8", newline="")
    meta_path(path).write_text(json.dumps(_meta(log), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def loads_frames(text: str) -> list[FrameRecord]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != FRAME_COLUMNS:
        raise SchemaMismatch(f"frame log header {header!r} != {list(FRAME_COLUMNS)}")
    return [parse_frame_row(cells, i) for i, cells in enumerate(reader, 1) if cells]


def read_frame_log(path: str | Path) -> SimulationLog:
    """Read a frame log and its sidecar; without a sidecar, kinds are unknown."""
    path = Path(path)
    frames = loads_frames(path.read_text(encoding="utf-8"))
    mp = meta_path(path)
    if mp.exists():
        meta = json.loads(mp.read_text(encoding="utf-8"))
        vehicles = tuple(VehicleInfo(v["id"], VehicleKind(v["kind"]), v["colour"]) for v in meta["vehicles"])
        return SimulationLog(meta["sim_id"], meta["ego_id"], meta["dt"], meta["duration"], meta["preset"],
                             vehicles, frames, seed=meta["seed"])
    first = frames[0] if frames else None
    dt = next((fr.TS / fr.F for fr in frames if fr.F > 0), 0.05)
    return SimulationLog(
        sim_id=first.S if first else 0,
        ego_id=first.IDego if first else 0,
        dt=dt,
        duration=frames[-1].TS if frames else 0.0,
        preset="",
        vehicles=tuple(VehicleInfo(v[0], None, "") for v in first.L) if first else (),
        frames=frames,
    )


# ---------------------------------------------------------------------------
# features

def _feature_cells(row: FeatureRow) -> list[str]:
    enc = encode_categorical(row.as_dict())
    cells = []
    for c in FEATURE_COLUMNS:
        v = enc[c]
        if c == "CLASS":
            cells.append(ClassLabel(v).value)
        elif c in CATEGORY_CODES or c == "NV":
            cells.append(str(int(v)))
        else:
            cells.append(fmt_num(v))
    return cells


def dumps_features(rows: Iterable[FeatureRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FEATURE_COLUMNS)
    for row in rows:
        w.writerow(_feature_cells(row))
    return buf.getvalue()


def write_features(rows: Iterable[FeatureRow], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_features(rows), encoding="utf-8", newline="")
    return path


def loads_features(text: str) -> list[FeatureRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != FEATURE_COLUMNS:
        raise SchemaMismatch(f"features header {header!r} != {list(FEATURE_COLUMNS)}")
    labels = {lab.value for lab in ClassLabel}
    rows = []
    for i, cells in enumerate(reader, 1):
        if not cells:
            continue
        if len(cells) != len(FEATURE_COLUMNS):
            raise ParseError(f"expected {len(FEATURE_COLUMNS)} cells, got {len(cells)}", i)
        raw: dict[str, object] = {}
        for c, text in zip(FEATURE_COLUMNS, cells):
            text = text.strip()
            try:
                if c == "CLASS":
                    if text not in labels:
                        raise ParseError(f"unknown class {text!r}", i, c)
                    raw[c] = ClassLabel(text)
                elif c in CATEGORY_CODES or c == "NV":
                    raw[c] = int(text)
                else:
                    raw[c] = float(text)
            except ValueError as exc:
                if isinstance(exc, ParseError):
                    raise
                raise ParseError(f"cannot parse {text!r}", i, c) from None
        try:
            dec = decode_categorical(raw)
        except ValueError as exc:
            raise ParseError(str(exc), i) from None
        dec["TE"], dec["TP"] = VehicleKind(dec["TE"]), VehicleKind(dec["TP"])
        rows.append(FeatureRow(**dec))
    return rows


def read_features(path: str | Path) -> list[FeatureRow]:
    return loads_features(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# generic CSV tables

def write_table(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt_num(v) if isinstance(v, float) else ("" if v is None else v) for v in r])
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")
    return path


def read_table(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, [])
        return header, [r for r in reader if r]


# ---------------------------------------------------------------------------
# relational export

RELATIONAL_TABLES = {
    "simulations": ("sim_id", "seed", "weather_id", "ego_vehicle_key", "n_vehicles", "duration", "dt", "label"),
    "weather": ("weather_id", "name", "DN", "HL", "Prec", "Fog", "Wind"),
    "frames": ("frame_key", "sim_id", "F", "TS", "MV", "Dim", "L", "V", "D", "A"),
    "vehicles": ("vehicle_key", "sim_id", "vehicle_id", "kind", "colour", "length", "width", "height"),
    "ego_vehicle": ("sim_id", "vehicle_key", "RT", "LT", "LW", "LWR", "LWL", "C", "OV"),
}


def _series(values: Iterable) -> str:
    return ";".join("" if v is None else (fmt_num(v) if isinstance(v, float) else str(v)) for v in values)


def relational_tables(logs: Sequence[SimulationLog], labels: Optional[dict[int, str]] = None) -> dict[str, list[list]]:
    """Normalise frame logs into the five entity tables.

    ``ego_vehicle`` holds one row per simulation; its ego-only columns are
    ``;``-joined per-frame series aligned with that simulation's frames.
    """
    labels = labels or {}
    tables: dict[str, list[list]] = {name: [] for name in RELATIONAL_TABLES}
    weather_ids: dict[tuple, int] = {}
    for log in logs:
        if not log.frames:
            raise ReferentialError(f"simulation {log.sim_id} has no frames")
        first = log.frames[0]
        wkey = (log.preset, first.DN, first.HL, first.Prec, first.Fog, first.Wind)
        if wkey not in weather_ids:
            weather_ids[wkey] = len(weather_ids) + 1
            tables["weather"].append([weather_ids[wkey], *wkey])
        known = {v.id for v in log.vehicles}
        vkeys = {}
        for vid, length, width, height in first.Dim:
            if vid not in known:
                raise ReferentialError(f"simulation {log.sim_id}: vehicle {vid} not declared")
            info = next(v for v in log.vehicles if v.id == vid)
            vkeys[vid] = f"{log.sim_id}:{vid}"
            tables["vehicles"].append([vkeys[vid], log.sim_id, vid, info.kind.value if info.kind else "",
                                       info.colour, length, width, height])
        if log.ego_id not in vkeys:
            raise ReferentialError(f"simulation {log.sim_id}: ego {log.ego_id} not among vehicles")
        for fr in log.frames:
            if fr.S != log.sim_id:
                raise ReferentialError(f"frame {fr.F} belongs to simulation {fr.S}, not {log.sim_id}")
            stray = {c[0] for c in fr.L} - set(vkeys)
            if stray:
                raise ReferentialError(f"simulation {log.sim_id} frame {fr.F}: unknown vehicles {sorted(stray)}")
            tables["frames"].append([f"{log.sim_id}:{fr.F}", log.sim_id, fr.F, fr.TS, fr.MV,
                                     _fmt_tuples(fr.Dim, "Dim"), _fmt_tuples(fr.L, "L"), _fmt_tuples(fr.V, "V"),
                                     _fmt_tuples(fr.D, "D"), _fmt_tuples(fr.A, "A")])
        fs = log.frames
        tables["ego_vehicle"].append([
            log.sim_id, vkeys[log.ego_id],
            _series(f.RT for f in fs), _series(f.LT for f in fs), _series(f.LW for f in fs),
            _series(f.LWR for f in fs), _series(f.LWL for f in fs), _series(f.C for f in fs),
            _series(f.OV for f in fs),
        ])
        tables["simulations"].append([log.sim_id, log.seed, weather_ids[wkey], vkeys[log.ego_id],
                                      len(first.L), log.duration, log.dt, labels.get(log.sim_id, "")])
    check_relational(tables)
    return tables


def check_relational(tables: dict[str, list[list]]) -> None:
    """Raise :class:`ReferentialError` on any dangling foreign key."""
    cols = {name: {c: i for i, c in enumerate(h)} for name, h in RELATIONAL_TABLES.items()}

    def keys(table: str, column: str) -> set:
        return {str(r[cols[table][column]]) for r in tables[table]}

    sims = keys("simulations", "sim_id")
    vehicles = keys("vehicles", "vehicle_key")
    checks = [
        ("frames", "sim_id", sims),
        ("vehicles", "sim_id", sims),
        ("ego_vehicle", "sim_id", sims),
        ("ego_vehicle", "vehicle_key", vehicles),
        ("simulations", "ego_vehicle_key", vehicles),
        ("simulations", "weather_id", keys("weather", "weather_id")),
    ]
    for table, column, valid in checks:
        for r in tables[table]:
            if str(r[cols[table][column]]) not in valid:
                raise ReferentialError(f"{table}.{column}={r[cols[table][column]]} has no parent row")
    frame_keys = [str(r[0]) for r in tables["frames"]]
    if len(frame_keys) != len(set(frame_keys)):
        raise ReferentialError("duplicate frame key")


def export_relational(logs: Sequence[SimulationLog], out_dir: str | Path,
                      labels: Optional[dict[int, str]] = None) -> list[Path]:
    tables = relational_tables(logs, labels)
    out_dir = Path(out_dir)
    return [write_table(out_dir / f"{name}.csv", RELATIONAL_TABLES[name], tables[name]) for name in RELATIONAL_TABLES]


def read_relational(out_dir: str | Path) -> dict[str, list[list[str]]]:
    tables = {}
    for name, header in RELATIONAL_TABLES.items():
        h, rows = read_table(Path(out_dir) / f"{name}.csv")
        if tuple(h) != header:
            raise SchemaMismatch(f"{name}.csv header {h} != {list(header)}")
        tables[name] = rows
    check_relational(tables)
    return tables


# ---------------------------------------------------------------------------
# replay trace and manifest

def replay_lines(log: SimulationLog) -> Iterable[str]:
    for fr in log.frames:
        speeds = dict(fr.V)
        yield json.dumps({
            "frame": fr.F,
            "ts": fr.TS,
            "vehicles": [{"id": vid, "x": x, "y": y, "lane": lane, "speed": speeds[vid]} for vid, x, y, lane in fr.L],
        }, separators=(",", ":"))


def write_replay_trace(log: SimulationLog, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(line + "\n" for line in replay_lines(log)), encoding="utf-8")
    return path


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


MANIFEST = "manifest.json"


def load_manifest(out_dir: str | Path) -> dict:
    path = Path(out_dir) / MANIFEST
    if not path.exists():
        return {"artifacts": {}}
    return json.loads(path.read_text(encoding="utf-8"))


def update_manifest(out_dir: str | Path, paths: Iterable[Path], **fields) -> dict:
    """Record the content hash of ``paths`` (relative to ``out_dir``) in the manifest."""
    out_dir = Path(out_dir)
    manifest = load_manifest(out_dir)
    manifest.update(fields)
    artifacts = manifest.setdefault("artifacts", {})
    for p in paths:
        artifacts[Path(p).relative_to(out_dir).as_posix()] = sha256_file(p)
    manifest["artifacts"] = dict(sorted(artifacts.items()))
    (out_dir / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def verify_manifest(out_dir: str | Path) -> list[str]:
    """Problems found when re-hashing every artifact listed in the manifest."""
    out_dir = Path(out_dir)
    problems = []
    for rel, digest in load_manifest(out_dir).get("artifacts", {}).items():
        p = out_dir / rel
        if not p.exists():
            problems.append(f"missing {rel}")
        elif sha256_file(p) != digest:
            problems.append(f"hash mismatch {rel}")
    return problems
