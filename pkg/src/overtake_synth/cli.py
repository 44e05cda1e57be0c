"""Command-line pipeline: generate -> label -> features -> stats / correlate / sbs.

Every stage reads the previous stage's files from ``--out DIR`` and records
what it wrote, with content hashes, in ``DIR/manifest.json``.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import __version__
from .analytics import associations, boxplot_stats, class_stats, histogram, minmax_scale, numeric_table, sbs_rank
from .config import GeneratorConfig, load_config
from .detector import classify, stage_trace, verdict
from .domain import ClassLabel
from .errors import OvertakeSynthError
from .features import FEATURE_COLUMNS, NUMERIC_FEATURES, feature_row
from .persist import (
    export_relational,
    read_features,
    read_frame_log,
    read_relational,
    update_manifest,
    verify_manifest,
    write_features,
    write_frame_log,
    write_replay_trace,
    write_table,
)
from .sampler import sample_scenario, sim_seed, validate_scenario
from .simengine import SimulationLog, run

log = logging.getLogger("overtake_synth")

CONFIG_COPY = "config.txt"


class StageError(OvertakeSynthError):
    pass


def _config(out: Path) -> GeneratorConfig:
    path = out / CONFIG_COPY
    return load_config(path if path.exists() else None)


def _frame_paths(out: Path) -> list[Path]:
    paths = sorted((out / "frames").glob("sim_*.csv"))
    if not paths:
        raise StageError(f"no frame logs under {out / 'frames'}; run 'generate' first")
    return paths


def _logs(out: Path) -> list[SimulationLog]:
    return [read_frame_log(p) for p in _frame_paths(out)]


def simulate_one(args: tuple[int, int, GeneratorConfig]) -> SimulationLog:
    master_seed, sim_id, cfg = args
    spec = sample_scenario(sim_seed(master_seed, sim_id), cfg, sim_id=sim_id)
    problems = validate_scenario(spec)
    if problems:
        raise StageError(f"simulation {sim_id}: invalid scenario: {'; '.join(problems)}")
    return run(spec, cfg.engine)


def cmd_generate(ns: argparse.Namespace) -> int:
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = load_config(ns.config)
    written = []
    if ns.config:
        shutil.copyfile(ns.config, out / CONFIG_COPY)
        written.append(out / CONFIG_COPY)
    jobs = [(ns.seed, i, cfg) for i in range(1, ns.sims + 1)]
    if ns.jobs > 1:
        with ProcessPoolExecutor(max_workers=ns.jobs) as pool:
            # map() yields in submission order, so files are written in sim_id order
            logs = pool.map(simulate_one, jobs, chunksize=max(1, len(jobs) // (4 * ns.jobs)))
            for sim in logs:
                written.append(write_frame_log(sim, out / "frames" / f"sim_{sim.sim_id:05d}.csv"))
    else:
        for job in jobs:
            sim = simulate_one(job)
            written.append(write_frame_log(sim, out / "frames" / f"sim_{sim.sim_id:05d}.csv"))
    metas = [p.with_name(p.stem + ".meta.json") for p in written if p.suffix == ".csv"]
    update_manifest(out, written + metas, version=__version__, seed=ns.seed, sims=ns.sims)
    print(f"generated {ns.sims} simulations in {out / 'frames'}")
    return 0


def cmd_label(ns: argparse.Namespace) -> int:
    out = Path(ns.out)
    params = _config(out).engine
    verdicts = [verdict(sim, params) for sim in _logs(out)]
    jsonl = out / "labels.jsonl"
    jsonl.write_text("".join(json.dumps(v, sort_keys=True) + "\n" for v in verdicts), encoding="utf-8")
    csv_path = write_table(out / "labels.csv", ("sim_id", "label"), [(v["sim_id"], v["label"]) for v in verdicts])
    update_manifest(out, [jsonl, csv_path])
    counts = {lab.value: sum(v["label"] == lab.value for v in verdicts) for lab in ClassLabel}
    print(" ".join(f"{k}={n}" for k, n in counts.items()))
    return 0


def cmd_features(ns: argparse.Namespace) -> int:
    out = Path(ns.out)
    params = _config(out).engine
    rows = []
    for sim in _logs(out):
        trace = stage_trace(sim, params)
        rows.append(feature_row(sim, trace, classify(sim, trace), params))
    path = write_features(rows, out / "features.csv")
    update_manifest(out, [path])
    print(f"wrote {len(rows)} feature rows to {path}")
    return 0


def _features(out: Path):
    path = out / "features.csv"
    if not path.exists():
        raise StageError(f"{path} missing; run 'features' first")
    return read_features(path)


def cmd_stats(ns: argparse.Namespace) -> int:
    out = Path(ns.out)
    rows = _features(out)
    table = numeric_table(rows)
    written = [write_table(out / "stats.csv", ("feature", "class", "min", "mean", "max", "sigma"),
                           [(s.feature, s.label.value, s.min, s.mean, s.max, s.sigma) for s in class_stats(rows)])]
    columns = [c for c in FEATURE_COLUMNS if c != "CLASS"]
    hist_rows, box_rows, scaled = [], [], {}
    for c in columns:
        values = [float(r[c]) for r in table]
        edges, counts = histogram(values, ns.bins)
        hist_rows += [(c, edges[i], edges[i + 1], counts[i]) for i in range(len(counts))]
        scaled[c] = minmax_scale(values)
        b = boxplot_stats(scaled[c])
        box_rows.append((c, b.q1, b.median, b.q3, b.whisker_lo, b.whisker_hi, len(b.outliers),
                         ";".join(repr(v) for v in b.outliers)))
    written.append(write_table(out / "hist.csv", ("feature", "bin_lo", "bin_hi", "count"), hist_rows))
    written.append(write_table(out / "box.csv", ("feature", "q1", "median", "q3", "whisker_lo", "whisker_hi",
                                                 "n_outliers", "outliers"), box_rows))
    written.append(write_table(out / "scaled.csv", (*columns, "CLASS"),
                               [(*(scaled[c][i] for c in columns), table[i]["CLASS"].value)
                                for i in range(len(table))]))
    update_manifest(out, written)
    print(f"wrote {', '.join(p.name for p in written)}")
    return 0


def cmd_correlate(ns: argparse.Namespace) -> int:
    out = Path(ns.out)
    m = associations(_features(out), cluster=ns.cluster)
    header = ("", *m.columns)
    written = [
        write_table(out / "assoc.csv", header, [(c, *row) for c, row in zip(m.columns, m.entries)]),
        write_table(out / "pvalues.csv", header, [(c, *row) for c, row in zip(m.columns, m.p_values)]),
    ]
    update_manifest(out, written)
    print(f"wrote {written[0].name}, {written[1].name}")
    return 0


def cmd_sbs(ns: argparse.Namespace) -> int:
    out = Path(ns.out)
    result = sbs_rank(_features(out))
    accuracy = dict(result.removals)
    last_acc = result.removals[-1][1]
    rows = [(rank, f, accuracy.get(f, last_acc)) for rank, f in enumerate(result.ranking, 1)]
    path = write_table(out / "sbs.csv", ("rank", "feature", "accuracy"), rows)
    update_manifest(out, [path])
    print(f"most important: {', '.join(result.ranking[:3])}")
    return 0


def cmd_validate(ns: argparse.Namespace) -> int:
    out = Path(ns.out)
    problems = verify_manifest(out)
    for p in sorted((out / "frames").glob("sim_*.csv")):
        try:
            read_frame_log(p)
        except OvertakeSynthError as exc:
            problems.append(f"{p.name}: {exc}")
    if (out / "features.csv").exists():
        try:
            read_features(out / "features.csv")
        except OvertakeSynthError as exc:
            problems.append(f"features.csv: {exc}")
    if (out / "relational").exists():
        try:
            read_relational(out / "relational")
        except OvertakeSynthError as exc:
            problems.append(f"relational: {exc}")
    for p in problems:
        print(p, file=sys.stderr)
    print("ok" if not problems else f"{len(problems)} problem(s)")
    return 1 if problems else 0


def cmd_replay(ns: argparse.Namespace) -> int:
    out = Path(ns.out)
    paths = _frame_paths(out)
    if ns.sim:
        wanted = {f"sim_{i:05d}.csv" for i in ns.sim}
        paths = [p for p in paths if p.name in wanted]
        if len(paths) != len(wanted):
            raise StageError(f"unknown simulation id among {ns.sim}")
    written = [write_replay_trace(read_frame_log(p), out / "replay" / (p.stem + ".jsonl")) for p in paths]
    update_manifest(out, written)
    print(f"wrote {len(written)} replay trace(s)")
    return 0


def _carla_lanes(sim: SimulationLog) -> SimulationLog:
    frames = [replace(fr, L=tuple((i, x, y, -(lane + 2)) for i, x, y, lane in fr.L)) for fr in sim.frames]
    return replace(sim, frames=frames)


def cmd_export(ns: argparse.Namespace) -> int:
    out = Path(ns.out)
    logs = _logs(out)
    labels = {}
    if (out / "labels.jsonl").exists():
        for line in (out / "labels.jsonl").read_text(encoding="utf-8").splitlines():
            v = json.loads(line)
            labels[v["sim_id"]] = v["label"]
    if ns.carla_lane_ids:
        logs = [_carla_lanes(sim) for sim in logs]
    written = export_relational(logs, out / "relational", labels)
    update_manifest(out, written)
    print(f"wrote {len(written)} relational tables")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="overtake-synth", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--out", required=True, metavar="DIR", help="pipeline output directory")
        p.set_defaults(func=func)
        return p

    g = add("generate", cmd_generate, "simulate randomized scenarios and write frame logs")
    g.add_argument("--sims", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--config", metavar="PATH")
    g.add_argument("--jobs", type=int, default=1, help="worker processes (output is identical for any value)")
    add("label", cmd_label, "classify every simulation and write verdicts")
    add("features", cmd_features, "extract the per-simulation feature table")
    s = add("stats", cmd_stats, "per-class statistics, histograms and box-plot data")
    s.add_argument("--bins", type=int, default=10)
    c = add("correlate", cmd_correlate, "association matrix and p-values")
    c.add_argument("--cluster", action="store_true", help="order columns by similarity")
    add("sbs", cmd_sbs, "sequential backward selection feature ranking")
    add("validate", cmd_validate, "re-hash and re-parse every artifact")
    r = add("replay-trace", cmd_replay, "per-frame JSON Lines trace for visualizers")
    r.add_argument("--sim", type=int, nargs="*", help="simulation ids (default: all)")
    e = add("export", cmd_export, "write the relational (entity) tables")
    e.add_argument("--carla-lane-ids", action="store_true", help="emit lanes 1..5 as -3..-7")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(ns, "sims", 1) < 1 or getattr(ns, "jobs", 1) < 1 or getattr(ns, "bins", 1) < 1:
        parser.error("--sims, --jobs and --bins must be positive")
    try:
        return ns.func(ns)
    except OvertakeSynthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
