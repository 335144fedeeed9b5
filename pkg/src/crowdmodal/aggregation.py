"""Space-frequency maps on a shared grid and their mergeable per-cell accumulator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class GlobalGrid:
    positions: np.ndarray
    frequencies: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).ravel()
        freqs = np.asarray(self.frequencies, dtype=float).ravel()
        if pos.size < 50:
            raise ValueError("global grid needs at least 50 positions")
        if np.any(np.diff(pos) <= 0) or np.any(np.diff(freqs) <= 0):
            raise ValueError("grid axes must be strictly increasing")
        for a in (pos, freqs):
            a.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "frequencies", freqs)

    @classmethod
    def uniform(cls, span_length, frequencies, n_x=200):
        return cls(np.linspace(0.0, span_length, n_x), frequencies)

    @property
    def shape(self):
        return (self.frequencies.size, self.positions.size)

    def __eq__(self, other):
        if not isinstance(other, GlobalGrid):
            return NotImplemented
        return (np.array_equal(self.positions, other.positions)
                and np.array_equal(self.frequencies, other.frequencies))

    __hash__ = None

    def describe(self):
        return (f"{self.positions.size} positions [{self.positions[0]:g}, {self.positions[-1]:g}] m x "
                f"{self.frequencies.size} frequencies [{self.frequencies[0]:g}, {self.frequencies[-1]:g}] Hz")


@dataclass
class SpaceFrequencyMap:
    """Nonnegative magnitudes ``values[f, x]``; NaN marks cells the scan did not cover."""

    values: np.ndarray
    grid: GlobalGrid
    lane: float
    scan_count: int = 1
    normalization: str = "none"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")
        finite = self.values[np.isfinite(self.values)]
        if np.any(finite < 0):
            raise ValueError("space-frequency magnitudes must be nonnegative")
        if np.any(np.isinf(self.values)):
            raise ValueError("space-frequency magnitudes must be finite")
        if self.scan_count < 1:
            raise ValueError("scan_count must be >= 1")

    @property
    def covered(self):
        return np.isfinite(self.values)

    def marginal(self):
        """Mean over covered positions for each frequency."""
        return np.nanmean(np.where(self.covered, self.values, np.nan), axis=1)


def interpolation_weights(source, target):
    """Bracketing indices and weights for linear interpolation of ``source`` at ``target``.

    Returns ``(lo, hi, w, inside)``; ``f(target) ~= (1 - w) f[lo] + w f[hi]`` where
    ``inside`` is true.
    """
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    tol = 1e-9 * max(abs(source[-1] - source[0]), 1.0)
    inside = (target >= source[0] - tol) & (target <= source[-1] + tol)
    q = np.clip(target, source[0], source[-1])
    hi = np.clip(np.searchsorted(source, q, side="right"), 1, source.size - 1)
    lo = hi - 1
    w = (q - source[lo]) / (source[hi] - source[lo])
    return lo, hi, w, inside


def _interp_axis(values, source, target, axis):
    lo, hi, w, inside = interpolation_weights(source, target)
    shape = [1, 1]
    shape[axis] = -1
    w = w.reshape(shape)
    a = np.take(values, lo, axis=axis)
    out = a + w * (np.take(values, hi, axis=axis) - a)   # exact on constants
    if axis == 0:
        out[~inside, :] = np.nan
    else:
        out[:, ~inside] = np.nan
    return out


def to_space_frequency(tf_map, traj, grid, power=False):
    """Bilinearly regrid a per-scan magnitude onto ``(frequency, position)`` cells.

    Cells outside the scan's coverage are NaN.
    """
    x = traj.position(tf_map.times)
    mag = np.abs(tf_map.coefficients)
    if power:
        mag = mag ** 2
    if x[0] > x[-1]:
        x = x[::-1]
        mag = mag[:, ::-1]
    lo, hi = max(x[0], grid.positions[0]), min(x[-1], grid.positions[-1])
    if hi <= lo:
        raise ValueError(f"scan {tf_map.scan_id!r} does not cover the grid")
    if not np.array_equal(tf_map.frequencies, grid.frequencies):
        mag = _interp_axis(mag, tf_map.frequencies, grid.frequencies, 0)
    out = _interp_axis(mag, x, grid.positions, 1)
    return SpaceFrequencyMap(np.maximum(out, 0.0), grid, traj.lane_offset, 1, "none",
                             {"scan_id": tf_map.scan_id, "speed": traj.speed, "direction": traj.direction})


def normalize_scan_map(m):
    """Divide by the root-mean-square of the covered entries."""
    vals = m.values[m.covered]
    rms = np.sqrt(np.mean(vals ** 2)) if vals.size else 0.0
    if rms == 0:
        raise ValueError("cannot normalize an all-zero map")
    return SpaceFrequencyMap(m.values / rms, m.grid, m.lane, m.scan_count, "rms", dict(m.meta))


def _neumaier_add(total, comp, x):
    """Element-wise compensated addition of ``x`` into ``(total, comp)`` in place."""
    t = total + x
    big = np.abs(total) >= np.abs(x)
    comp += np.where(big, (total - t) + x, (x - t) + total)
    total[...] = t


@dataclass
class AggregateMap:
    """Per-cell count, compensated sum and compensated sum of squares."""

    grid: GlobalGrid
    lane: float
    count: np.ndarray
    total: np.ndarray
    total_c: np.ndarray
    sumsq: np.ndarray
    sumsq_c: np.ndarray
    scan_count: int = 0
    normalization: str = "rms"

    @classmethod
    def empty(cls, grid, lane, normalization="rms"):
        z = lambda: np.zeros(grid.shape)  # noqa: E731
        return cls(grid, float(lane), np.zeros(grid.shape, dtype=np.int64), z(), z(), z(), z(), 0, normalization)

    def _check(self, grid, lane):
        if grid != self.grid:
            raise GridMismatchError(f"grid mismatch: {self.grid.describe()} vs {grid.describe()}")
        if float(lane) != self.lane:
            raise GridMismatchError(f"lane mismatch: {self.lane} vs {lane}")

    def add(self, m):
        self._check(m.grid, m.lane)
        if self.scan_count == 0:
            self.normalization = m.normalization
        cov = m.covered
        v = np.where(cov, m.values, 0.0)
        self.count += cov
        _neumaier_add(self.total, self.total_c, v)
        _neumaier_add(self.sumsq, self.sumsq_c, v * v)
        self.scan_count += m.scan_count
        return self

    def merge(self, other):
        """Count-weighted merge of another partial aggregate (in place)."""
        self._check(other.grid, other.lane)
        if self.scan_count == 0:
            self.normalization = other.normalization
        self.count += other.count
        _neumaier_add(self.total, self.total_c, other.total)
        self.total_c += other.total_c
        _neumaier_add(self.sumsq, self.sumsq_c, other.sumsq)
        self.sumsq_c += other.sumsq_c
        self.scan_count += other.scan_count
        return self

    def copy(self):
        return AggregateMap(self.grid, self.lane, self.count.copy(), self.total.copy(), self.total_c.copy(),
                            self.sumsq.copy(), self.sumsq_c.copy(), self.scan_count, self.normalization)

    @property
    def mean(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.count > 0, (self.total + self.total_c) / self.count, np.nan)

    @property
    def variance(self):
        """Unbiased per-cell sample variance (NaN where fewer than two scans)."""
        n = self.count
        s = self.total + self.total_c
        q = self.sumsq + self.sumsq_c
        with np.errstate(invalid="ignore", divide="ignore"):
            var = (q - s * s / n) / (n - 1)
        return np.where(n > 1, np.maximum(var, 0.0), np.nan)

    def as_map(self):
        if self.scan_count < 1:
            raise ValueError("aggregate is empty")
        return SpaceFrequencyMap(self.mean, self.grid, self.lane, self.scan_count, self.normalization)


def aggregate(maps, prior=None):
    """Fold maps (an iterable, consumed once) into an :class:`AggregateMap`."""
    agg = prior.copy() if prior is not None else None
    for m in maps:
        if agg is None:
            agg = AggregateMap.empty(m.grid, m.lane, m.normalization)
        agg.add(m)
    if agg is None:
        raise ValueError("no maps to aggregate")
    return agg


def merge_all(parts):
    parts = list(parts)
    if not parts:
        raise ValueError("no aggregates to merge")
    out = parts[0].copy()
    for p in parts[1:]:
        out.merge(p)
    return out


def remove_noise_bed(m, quantile=0.02):
    """Subtract, per frequency row, a spatial quantile of the row; clamp at zero.

    Accepts an :class:`AggregateMap` or a :class:`SpaceFrequencyMap` and returns a
    :class:`SpaceFrequencyMap` tagged ``denoised``.
    """
    if isinstance(m, AggregateMap):
        m = m.as_map()
    vals = m.values
    with np.errstate(all="ignore"):
        bed = np.nanquantile(np.where(m.covered, vals, np.nan), quantile, axis=1)
    bed = np.nan_to_num(bed)
    out = np.maximum(vals - bed[:, None], 0.0)
    meta = dict(m.meta, noise_bed=bed)
    return SpaceFrequencyMap(out, m.grid, m.lane, m.scan_count, "denoised", meta)
