"""File formats: scan CSV, binary map/aggregate files, reports, plot tables, manifests."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .aggregation import AggregateMap, GlobalGrid, SpaceFrequencyMap
from .scans import ScanRecord, Trajectory

MAP_MAGIC = "crowdmodal-map"
FORMAT_VERSION = 1


class DataError(ValueError):
    """A data file is missing, malformed or inconsistent."""


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_bytes(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


# ---------------------------------------------------------------- scans

_SCAN_KEYS = ("scan_id", "vehicle_id", "lane_offset", "speed", "span_length", "direction",
              "fs", "start_time", "seed")


def format_scan(scan):
    tr = scan.trajectory
    header = {"scan_id": scan.scan_id, "vehicle_id": scan.vehicle_id, "lane_offset": repr(tr.lane_offset),
              "speed": repr(tr.speed), "span_length": repr(tr.span_length), "direction": tr.direction,
              "fs": repr(tr.sampling_rate), "start_time": repr(tr.start_time),
              "seed": "" if scan.seed is None else str(scan.seed)}
    lines = [f"# {k}: {header[k]}" for k in _SCAN_KEYS]
    lines.append("t,a")
    lines.extend(f"{t!r},{a!r}" for t, a in zip(scan.t.tolist(), scan.a.tolist()))
    return "\n".join(lines) + "\n"


def write_scan(path, scan):
    _write_bytes(path, format_scan(scan).encode())


def read_scan(path):
    """Parse a scan CSV written by :func:`write_scan`."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise DataError(f"cannot read scan file {path}: {e}") from None
    header, rows, seen_columns = {}, [], False
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            if not sep:
                raise DataError(f"{path}:{n}: malformed header line")
            header[key.strip()] = value.strip()
        elif not seen_columns:
            if line.replace(" ", "") != "t,a":
                raise DataError(f"{path}:{n}: expected column line 't,a'")
            seen_columns = True
        else:
            rows.append(line)
    missing = [k for k in _SCAN_KEYS if k not in header]
    if missing:
        raise DataError(f"{path}: missing header fields {missing}")
    try:
        data = np.array([[float(v) for v in r.split(",")] for r in rows], dtype=float).reshape(-1, 2)
        traj = Trajectory(float(header["lane_offset"]), float(header["speed"]), float(header["span_length"]),
                          float(header["fs"]), float(header["start_time"]), header["direction"])
        seed = int(header["seed"]) if header["seed"] else None
        return ScanRecord(header["scan_id"], header["vehicle_id"], traj, data[:, 0], data[:, 1], seed)
    except ValueError as e:
        raise DataError(f"{path}: {e}") from None


# ---------------------------------------------------------------- maps and aggregates

def _pack(path, header, arrays):
    payload = b"".join(np.ascontiguousarray(a, dtype=a.dtype.newbyteorder("<")).tobytes() for a in arrays)
    header = dict(header, magic=MAP_MAGIC, version=FORMAT_VERSION,
                  arrays=[{"dtype": a.dtype.newbyteorder("<").str, "shape": list(a.shape)} for a in arrays],
                  payload_sha256=hashlib.sha256(payload).hexdigest())
    line = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    _write_bytes(path, line + b"\n" + payload)


def _unpack(path):
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"cannot read map file {path}: {e}") from None
    nl = blob.find(b"\n")
    try:
        header = json.loads(blob[:nl])
    except (ValueError, UnicodeDecodeError):
        raise DataError(f"{path}: not a map file (bad header)") from None
    if not isinstance(header, dict) or header.get("magic") != MAP_MAGIC:
        raise DataError(f"{path}: not a map file")
    payload = blob[nl + 1:]
    if hashlib.sha256(payload).hexdigest() != header.get("payload_sha256"):
        raise DataError(f"{path}: payload digest mismatch (corrupt file)")
    arrays, offset = [], 0
    for spec in header["arrays"]:
        dt = np.dtype(spec["dtype"])
        n = int(np.prod(spec["shape"])) * dt.itemsize
        if offset + n > len(payload):
            raise DataError(f"{path}: truncated payload")
        arrays.append(np.frombuffer(payload[offset:offset + n], dtype=dt).reshape(spec["shape"]).astype(dt.newbyteorder("=")))
        offset += n
    return header, arrays


def _grid_header(grid):
    return {"positions": grid.positions.tolist(), "frequencies": grid.frequencies.tolist()}


def write_map(path, m):
    meta = {k: v for k, v in m.meta.items() if isinstance(v, (str, int, float, bool)) or v is None}
    _pack(path, {"kind": "map", **_grid_header(m.grid), "lane": m.lane, "scan_count": m.scan_count,
                 "normalization": m.normalization, "meta": meta}, [np.asarray(m.values, dtype=float)])


def write_aggregate(path, agg):
    _pack(path, {"kind": "aggregate", **_grid_header(agg.grid), "lane": agg.lane, "scan_count": agg.scan_count,
                 "normalization": agg.normalization},
          [agg.count.astype(np.int64), agg.total, agg.total_c, agg.sumsq, agg.sumsq_c])


def read_map(path):
    header, arrays = _unpack(path)
    if header.get("kind") != "map":
        raise DataError(f"{path}: expected a per-scan map, found {header.get('kind')!r}")
    grid = GlobalGrid(np.array(header["positions"]), np.array(header["frequencies"]))
    return SpaceFrequencyMap(arrays[0], grid, header["lane"], header["scan_count"], header["normalization"],
                             header["meta"])


def read_aggregate(path):
    header, arrays = _unpack(path)
    if header.get("kind") != "aggregate":
        raise DataError(f"{path}: expected an aggregate, found {header.get('kind')!r}")
    grid = GlobalGrid(np.array(header["positions"]), np.array(header["frequencies"]))
    count, total, total_c, sumsq, sumsq_c = arrays
    return AggregateMap(grid, float(header["lane"]), count, total, total_c, sumsq, sumsq_c,
                        int(header["scan_count"]), header["normalization"])


# ---------------------------------------------------------------- reports and tables

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, obj):
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False)
    _write_bytes(path, (text + "\n").encode())


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, ValueError) as e:
        raise DataError(f"cannot read {path}: {e}") from None


def format_table(header, rows):
    """Right-aligned plain-text table."""
    cells = [[str(h) for h in header]] + [["" if v is None else (f"{v:.4g}" if isinstance(v, float) else str(v))
                                           for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
