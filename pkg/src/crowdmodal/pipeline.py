"""Pipeline stages: simulate, transform, aggregate, identify.

Every stage reads and writes files under one output directory and records
input/output digests in ``manifest.json``. Per-scan work is seeded from
``(scan_plan.seed, scan index)`` only, so results do not depend on the number
of worker processes.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .aggregation import AggregateMap, GridMismatchError, merge_all, normalize_scan_map, remove_noise_bed, to_space_frequency
from .beam import random_impulse_train, reference_shape
from .config import (build_grid, build_model, build_params, build_profile, build_spec, config_hash)
from .cwt import cwt
from .io import (DataError, read_aggregate, read_json, read_map, read_scan, sha256_file, write_aggregate,
                 write_csv, write_json, write_map, write_scan, format_table)
from .modal import (ModeEstimate, aggregate_confidence, assemble_3d, extract_mode_shape, find_modal_peaks,
                    mac, match_reference, shape_mse)
from .scans import SPEED_PRESETS, make_trajectory, resample_uniform, synthesize_scan
from .studies import decontaminate_stack, row_stack, shape_from_stack
from .vehicle import PRESETS, assign_presets, build_state_space, filter_scan

log = logging.getLogger(__name__)

SCAN_DIR, MAP_DIR, AGG_DIR, TABLE_DIR, FIG_DIR = "scans", "maps", "aggregate", "tables", "figures"


@dataclass(frozen=True)
class PlannedScan:
    index: int
    scan_id: str
    speed: float
    speed_label: str
    lane: float
    direction: str
    vehicle: str | None


def plan_scans(cfg):
    """Expand the scan plan: lanes outermost, then groups, then repetitions."""
    sp = cfg["scan_plan"]
    entries = []
    for lane in sp["lanes"]:
        for group in sp["groups"]:
            speed = group["speed"]
            label = speed if isinstance(speed, str) else f"{float(speed):g}"
            v = SPEED_PRESETS[speed] if isinstance(speed, str) else float(speed)
            for k in range(group["count"]):
                if sp["directions"] == "alternate":
                    direction = "forward" if k % 2 == 0 else "reverse"
                else:
                    direction = sp["directions"]
                entries.append((v, label, float(lane), direction))
    vehicles = [None] * len(entries)
    if cfg["vehicle"]["enabled"]:
        vehicles = assign_presets(len(entries), cfg["vehicle"]["pool"], cfg["vehicle"]["seed"])
    return [PlannedScan(i, f"scan{i:05d}", v, label, lane, d, veh)
            for i, ((v, label, lane, d), veh) in enumerate(zip(entries, vehicles))]


class Lab:
    """Objects built once from a resolved config."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.spec = build_spec(cfg)
        self.model = build_model(cfg)
        self.profile = build_profile(cfg)
        self.params = build_params(cfg)
        self.grid = build_grid(cfg, self.params)
        self.systems = {name: build_state_space(qc) for name, qc in PRESETS.items()}


_LAB_CACHE = {}


def _lab(cfg):
    key = config_hash(cfg)
    if key not in _LAB_CACHE:
        _LAB_CACHE.clear()
        _LAB_CACHE[key] = Lab(cfg)
    return _LAB_CACHE[key]


def simulate_scan(cfg, planned):
    """Synthesize one planned scan; deterministic in ``(scan_plan.seed, planned.index)``."""
    lab = _lab(cfg)
    sp, ex = cfg["scan_plan"], cfg["excitation"]
    rng = np.random.default_rng([sp["seed"], planned.index])
    traj = make_trajectory(planned.speed, lab.spec.span_length, planned.lane, sp["sampling_rate"],
                           planned.direction, start_time=ex["warmup"])
    train = random_impulse_train(lab.spec, ex["rate"], tuple(ex["magnitude_range"]), ex["warmup"] + traj.duration,
                                 rng)
    noise_seed = int(rng.integers(2 ** 31))
    return synthesize_scan(lab.model, lab.spec, train, traj, lab.profile, cfg["noise"]["std"], noise_seed,
                           sp["jitter"], planned.scan_id, planned.vehicle or "rigid")


def transform_scan(cfg, scan):
    """Resample, optionally filter through the scan's quarter car, CWT, regrid and normalize."""
    lab = _lab(cfg)
    fs = cfg["cwt"]["resample_fs"]
    if scan.t.size < 32:
        raise DataError(f"scan {scan.scan_id} has {scan.t.size} samples; need at least 32")
    if not (scan.is_uniform() and scan.sampling_rate == fs):
        scan = resample_uniform(scan, fs)
    a = scan.a
    veh = cfg["vehicle"]
    if veh["enabled"]:
        if scan.vehicle_id not in lab.systems:
            raise DataError(f"scan {scan.scan_id}: unknown vehicle preset {scan.vehicle_id!r}")
        a = filter_scan(lab.systems[scan.vehicle_id], a, fs, input_mode=veh["input_mode"], hold=veh["hold"])
    try:
        tf = cwt(a, fs, lab.params, t0=scan.t[0], scan_id=scan.scan_id)
        m = to_space_frequency(tf, scan.trajectory, lab.grid, power=cfg["grid"]["power"])
        return normalize_scan_map(m)
    except ValueError as e:
        raise DataError(f"scan {scan.scan_id}: {e}") from None


def simulate_maps(cfg, jobs=1):
    """In-memory corpus: ``[(planned, map)]`` for every planned scan (used by studies)."""
    plan = plan_scans(cfg)
    return list(zip(plan, _parallel(_simulate_and_transform, [(cfg, p) for p in plan], jobs)))


def _simulate_and_transform(args):
    cfg, planned = args
    return transform_scan(cfg, simulate_scan(cfg, planned))


def _simulate_to_file(args):
    cfg, planned, path = args
    write_scan(path, simulate_scan(cfg, planned))
    return str(path)


def _transform_file(args):
    cfg, src, dst = args
    try:
        m = transform_scan(cfg, read_scan(src))
    except DataError as e:
        return str(e)
    write_map(dst, m)
    return None


def _parallel(fn, items, jobs):
    items = list(items)
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


# ---------------------------------------------------------------- manifest

def _rel(out, paths):
    out = Path(out)
    return {str(Path(p).resolve().relative_to(out.resolve())) if Path(p).resolve().is_relative_to(out.resolve())
            else str(p): sha256_file(p) for p in sorted(paths, key=str)}


def _record(out, cfg, stage, inputs, outputs, started, **extra):
    out = Path(out)
    path = out / "manifest.json"
    manifest = read_json(path) if path.exists() else {}
    if manifest.get("config_hash") != config_hash(cfg):
        manifest = {"config_hash": config_hash(cfg), "version": __version__, "stages": {}}
    manifest["stages"][stage] = {"inputs": _rel(out, inputs), "outputs": _rel(out, outputs),
                                 "wall_clock_s": round(time.perf_counter() - started, 3), **extra}
    write_json(path, manifest)
    return manifest


def _prepare(cfg, out):
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        # the directory is where the file lives; leaving it out keeps runs relocatable
        saved = {**cfg, "output": {k: v for k, v in cfg["output"].items() if k != "dir"}}
        write_json(out / "config.json", saved)
    except OSError as e:
        raise DataError(f"cannot write to output directory {out}: {e}") from None
    return out


# ---------------------------------------------------------------- stages

def run_simulate(cfg, out, jobs=1):
    started = time.perf_counter()
    out = _prepare(cfg, out)
    plan = plan_scans(cfg)
    paths = [out / SCAN_DIR / f"{p.scan_id}.csv" for p in plan]
    _parallel(_simulate_to_file, [(cfg, p, path) for p, path in zip(plan, paths)], jobs)
    log.info("simulated %d scans into %s", len(paths), out / SCAN_DIR)
    return _record(out, cfg, "simulate", [out / "config.json"], paths, started, n_scans=len(paths))


def _scan_files(directory, suffix):
    files = sorted(Path(directory).glob(f"*{suffix}"))
    if not files:
        raise DataError(f"no {suffix} files in {directory}")
    return files


def run_transform(cfg, out, jobs=1, scan_dir=None):
    started = time.perf_counter()
    out = _prepare(cfg, out)
    src = _scan_files(scan_dir or out / SCAN_DIR, ".csv")
    dst = [out / MAP_DIR / (s.stem + ".sfm") for s in src]
    errors = _parallel(_transform_file, [(cfg, s, d) for s, d in zip(src, dst)], jobs)
    skipped = [e for e in errors if e]
    for msg in skipped:
        log.warning("skipped: %s", msg)
    written = [d for d, e in zip(dst, errors) if not e]
    return _record(out, cfg, "transform", src, written, started, skipped=skipped)


def lane_tag(y):
    return f"lane{y:+.4f}"


def run_aggregate(cfg, out, map_dir=None, resume=None):
    """Aggregate per lane; ``resume`` names a prior aggregate file or directory to merge into."""
    started = time.perf_counter()
    out = _prepare(cfg, out)
    files = _scan_files(map_dir or out / MAP_DIR, ".sfm")
    parts = {}
    for f in files:
        m = read_map(f)
        if m.lane not in parts:
            parts[m.lane] = AggregateMap.empty(m.grid, m.lane, m.normalization)
        try:
            parts[m.lane].add(m)
        except GridMismatchError as e:
            raise DataError(f"{f}: {e}") from None
    inputs = list(files)
    if resume is not None:
        resume = Path(resume)
        prior_files = sorted(resume.glob("*.agg")) if resume.is_dir() else [resume]
        if not prior_files:
            raise DataError(f"no aggregate files to resume from in {resume}")
        for pf in prior_files:
            prior = read_aggregate(pf)
            try:
                parts[prior.lane] = merge_all([prior, parts[prior.lane]]) if prior.lane in parts else prior
            except GridMismatchError as e:
                raise DataError(f"{pf}: {e}") from None
            inputs.append(pf)
    outputs = []
    for lane in sorted(parts):
        path = out / AGG_DIR / f"{lane_tag(lane)}.agg"
        write_aggregate(path, parts[lane])
        outputs.append(path)
    return _record(out, cfg, "aggregate", inputs, outputs, started,
                   scan_counts={lane_tag(k): v.scan_count for k, v in parts.items()})


def load_aggregates(agg_dir):
    aggs = {}
    for f in _scan_files(agg_dir, ".agg"):
        a = read_aggregate(f)
        aggs[a.lane] = a
    return aggs


def identify(cfg, aggs, map_dir=None):
    """Mode estimates and accuracy rows from per-lane aggregates.

    Returns ``(report, estimates, extras)``; ``extras`` carries arrays for tables and figures.
    """
    idc = cfg["identify"]
    lab = _lab(cfg)
    lanes = [y for y in cfg["scan_plan"]["lanes"] if y in aggs] or sorted(aggs)
    primary = aggs[lanes[0]]
    band = tuple(idc["band"]) if idc["band"] is not None else None
    q, hb = idc["noise_quantile"], idc["halfband"]
    peaks = find_modal_peaks(primary, idc["max_modes"], idc["min_prominence_ratio"], q, band)
    if not peaks:
        log.warning("no peak cleared the prominence threshold; the report lists zero modes")
    marg_max = max((p.height for p in peaks), default=0.0)
    stacks = _decontamination_stacks(cfg, map_dir, lanes, peaks, hb) if idc["decontaminate"] else {}
    x = primary.grid.positions
    estimates, rows = [], []
    for k, p in enumerate(peaks, 1):
        shapes, cis = {}, {}
        for y in lanes:
            try:
                shapes[y] = extract_mode_shape(aggs[y], p.frequency, hb, q)
                cis[y] = aggregate_confidence(aggs[y], p.frequency, hb, q)
            except ValueError:
                continue
        est = ModeEstimate(p.frequency, shapes, cis, p.prominence, primary.scan_count)
        estimates.append(est)
        row = {"mode": k, "frequency": p.frequency, "prominence": p.prominence,
               "prominence_ratio": p.prominence / marg_max if marg_max > 0 else 0.0,
               "scan_count": primary.scan_count, "lanes": {}}
        ref = match_reference(p.frequency, lab.model.frequencies) if idc["reference"] else None
        if ref is not None:
            f_ref = lab.model.frequencies[ref]
            row["reference"] = {"index": ref + 1, "kind": lab.model.kinds[ref], "frequency": f_ref,
                                "error_pct": abs(p.frequency - f_ref) / f_ref * 100}
        for y, s in shapes.items():
            lane_row = {"shape": s, "ci_halfwidth": cis[y], "ci_mean": float(np.mean(cis[y]))}
            sd = stacks.get((k, y))
            if sd is not None:
                lane_row["shape_decontaminated"] = sd
            if ref is not None:
                r = reference_shape(lab.model, lab.spec, ref, x, y)
                if r.max() > 0:
                    lane_row.update(mac=mac(s, r), mse=shape_mse(s, r), bias=s - r)
                    if sd is not None:
                        lane_row.update(mac_decontaminated=mac(sd, r), mse_decontaminated=shape_mse(sd, r))
            row["lanes"][lane_tag(y)] = lane_row
        rows.append(row)
    found = {r["reference"]["index"] for r in rows if "reference" in r}
    report = {"scenario": cfg["name"], "config_hash": config_hash(cfg), "version": __version__,
              "primary_lane": lanes[0], "lanes": lanes,
              "scan_counts": {lane_tag(y): aggs[y].scan_count for y in lanes},
              "n_modes": len(rows), "modes": rows}
    if idc["reference"]:
        report["reference_frequencies"] = list(lab.model.frequencies)
        report["missing_reference_modes"] = [i + 1 for i in range(lab.model.n_modes) if i + 1 not in found]
    extras = {"peaks": peaks, "positions": x, "lanes": lanes, "aggs": aggs}
    return report, estimates, extras


def _decontamination_stacks(cfg, map_dir, lanes, peaks, halfband):
    """Decontaminated shapes keyed by ``(mode number, lane)``; per-scan maps are required."""
    if map_dir is None or not Path(map_dir).is_dir():
        raise DataError("decontamination needs the per-scan map directory")
    q = cfg["identify"]["noise_quantile"]
    by_lane = {y: [] for y in lanes}
    for f in _scan_files(map_dir, ".sfm"):
        m = read_map(f)
        if m.lane in by_lane:
            by_lane[m.lane].append(m)
    out = {}
    for k, p in enumerate(peaks, 1):
        for y, maps in by_lane.items():
            if len(maps) < 10:
                continue
            filtered, _ = decontaminate_stack(row_stack(maps, p.frequency, halfband))
            out[(k, y)] = shape_from_stack(filtered, q)
    return out


def _report_text(report):
    lanes = report["lanes"]
    header = ["mode", "f_est [Hz]", "f_ref [Hz]", "err [%]", "prom"] + [f"MAC {lane_tag(y)}" for y in lanes]
    rows = []
    for r in report["modes"]:
        ref = r.get("reference")
        rows.append([r["mode"], round(r["frequency"], 3), ref["frequency"] if ref else None,
                     round(ref["error_pct"], 3) if ref else None, round(r["prominence_ratio"], 3)]
                    + [round(r["lanes"].get(lane_tag(y), {}).get("mac", float("nan")), 2)
                       if "mac" in r["lanes"].get(lane_tag(y), {}) else None for y in lanes])
    text = f"scenario {report['scenario']}  scans {report['scan_counts']}\n" + format_table(header, rows)
    if report.get("missing_reference_modes"):
        text += f"reference modes not identified: {report['missing_reference_modes']}\n"
    return text


def write_identify_outputs(cfg, out, report, estimates, extras):
    """Report JSON/text, CSV plot tables and (optionally) PNG figures; returns written paths."""
    out = Path(out)
    x, lanes, aggs = extras["positions"], extras["lanes"], extras["aggs"]
    lab = _lab(cfg)
    q = cfg["identify"]["noise_quantile"]
    paths = []
    rpt = out / "report.json"
    write_json(rpt, report)
    (out / "report.txt").write_text(_report_text(report))
    paths += [rpt, out / "report.txt"]
    tables = out / TABLE_DIR
    freqs = aggs[lanes[0]].grid.frequencies
    margs = {y: remove_noise_bed(aggs[y], q).marginal() for y in lanes}
    p = tables / "marginal.csv"
    write_csv(p, ["frequency"] + [lane_tag(y) for y in lanes],
              [[f] + [float(margs[y][i]) for y in lanes] for i, f in enumerate(freqs)])
    paths.append(p)
    surfaces = {}
    for r, est in zip(report["modes"], estimates):
        k = r["mode"]
        ref = r.get("reference")
        cols, data = ["x"], [x]
        for y in lanes:
            if y in est.shapes:
                cols += [f"shape {lane_tag(y)}", f"ci {lane_tag(y)}"]
                data += [est.shapes[y], est.ci_halfwidth[y]]
                if ref is not None:
                    cols.append(f"reference {lane_tag(y)}")
                    data.append(reference_shape(lab.model, lab.spec, ref["index"] - 1, x, y))
        p = tables / f"mode{k}_shapes.csv"
        write_csv(p, cols, np.column_stack(data).tolist())
        paths.append(p)
        if len(est.shapes) >= 2:
            ys = [y for y in lanes if y in est.shapes]
            yy, surf = assemble_3d([est.shapes[y] for y in ys], ys)
            surfaces[k] = (yy, surf)
            p = tables / f"mode{k}_surface.csv"
            write_csv(p, ["y", "x", "value"], [[float(a), float(b), float(surf[i, j])]
                                               for i, a in enumerate(yy) for j, b in enumerate(x)])
            paths.append(p)
    if cfg["output"]["figures"]:
        from . import plotting
        paths += plotting.render_report_figures(out / FIG_DIR, report, estimates, extras, margs, surfaces,
                                                lab, q)
    return paths


def run_identify(cfg, out, agg_dir=None, map_dir=None):
    started = time.perf_counter()
    out = _prepare(cfg, out)
    agg_dir = Path(agg_dir or out / AGG_DIR)
    aggs = load_aggregates(agg_dir)
    map_dir = Path(map_dir) if map_dir else out / MAP_DIR
    report, estimates, extras = identify(cfg, aggs, map_dir if cfg["identify"]["decontaminate"] else None)
    paths = write_identify_outputs(cfg, out, report, estimates, extras)
    _record(out, cfg, "identify", sorted(agg_dir.glob("*.agg")), paths, started, n_modes=report["n_modes"])
    return report


def run_pipeline(cfg, out, jobs=1):
    run_simulate(cfg, out, jobs)
    run_transform(cfg, out, jobs)
    run_aggregate(cfg, out)
    return run_identify(cfg, out)
