"""Peak picking, section cuts, MAC, confidence intervals and multi-lane surfaces."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .aggregation import AggregateMap, SpaceFrequencyMap, remove_noise_bed

Z95 = 1.96


@dataclass(frozen=True)
class Peak:
    frequency: float
    index: int
    height: float
    prominence: float


def _denoised(m, quantile):
    if isinstance(m, AggregateMap) or m.normalization != "denoised":
        return remove_noise_bed(m, quantile)
    return m


def find_modal_peaks(m, max_modes=10, min_prominence_ratio=0.1, noise_quantile=0.02, band=None):
    """Prominent local maxima of the denoised frequency marginal, ascending in frequency.

    ``band=(f_lo, f_hi)`` restricts the search (and the reference maximum of the
    relative threshold) to that frequency range. Each peak frequency is refined by a
    three-point parabola fitted on the grid index.
    """
    if max_modes < 1:
        raise ValueError("max_modes must be >= 1")
    if min_prominence_ratio < 0:
        raise ValueError("min_prominence_ratio must be nonnegative")
    d = _denoised(m, noise_quantile)
    freqs = d.grid.frequencies
    marg = np.nan_to_num(d.marginal())
    start, stop = 0, marg.size
    if band is not None:
        start, stop = np.searchsorted(freqs, band[0]), np.searchsorted(freqs, band[1], side="right")
        if stop - start < 3:
            raise ValueError(f"band {band} covers fewer than three grid frequencies")
    sub = marg[start:stop]
    top = sub.max()
    if top <= 0:
        return []
    idx, props = find_peaks(sub, prominence=min_prominence_ratio * top)
    idx = idx + start
    if idx.size > max_modes:
        keep = np.sort(np.argsort(props["prominences"])[::-1][:max_modes])
        idx = idx[keep]
        props = {k: v[keep] for k, v in props.items()}
    peaks = []
    for i, prom in zip(idx, props["prominences"]):
        y0, y1, y2 = marg[i - 1], marg[i], marg[i + 1]
        den = y0 - 2 * y1 + y2
        delta = 0.5 * (y0 - y2) / den if den < 0 else 0.0
        delta = float(np.clip(delta, -0.5, 0.5))
        f = float(np.interp(i + delta, np.arange(freqs.size), freqs))
        peaks.append(Peak(f, int(i), float(y1), float(prom)))
    return peaks


def pick_peaks(m, max_modes=10, min_prominence_ratio=0.1, noise_quantile=0.02, band=None):
    return [p.frequency for p in find_modal_peaks(m, max_modes, min_prominence_ratio, noise_quantile, band)]


def nearest_row(grid, f):
    freqs = grid.frequencies
    if not freqs[0] <= f <= freqs[-1]:
        raise ValueError(f"frequency {f} Hz outside grid [{freqs[0]}, {freqs[-1]}]")
    return int(np.argmin(np.abs(freqs - f)))


def section_cut(values, grid, f, halfband=1):
    """Mean of the rows within ``halfband`` grid rows of the row nearest ``f``."""
    i = nearest_row(grid, f)
    lo, hi = max(i - halfband, 0), min(i + halfband + 1, grid.frequencies.size)
    return np.nanmean(values[lo:hi], axis=0)


def extract_mode_shape(m, f, halfband=1, noise_quantile=0.02):
    """Absolute mode shape at ``f``: the denoised section cut divided by its maximum."""
    d = _denoised(m, noise_quantile)
    row = np.nan_to_num(section_cut(d.values, d.grid, f, halfband))
    peak = row.max()
    if peak <= 0:
        raise ValueError(f"section cut at {f} Hz is identically zero")
    return row / peak


def mac(shape_a, shape_b, positions_a=None, positions_b=None):
    """Modal assurance criterion in percent.

    When position vectors are given, ``shape_b`` is linearly resampled onto the
    positions of ``shape_a`` first.
    """
    a = np.asarray(shape_a, dtype=float)
    b = np.asarray(shape_b, dtype=float)
    if positions_a is not None and positions_b is not None:
        b = np.interp(positions_a, positions_b, b)
    if a.shape != b.shape or a.size < 2:
        raise ValueError("shapes must have equal length >= 2")
    na, nb = np.dot(a, a), np.dot(b, b)
    if na == 0 or nb == 0:
        raise ValueError("MAC undefined for a zero-norm shape")
    return float(min(100.0 * np.dot(a, b) ** 2 / (na * nb), 100.0))


def confidence_interval(shapes):
    """Per-position mean and 95% half-width ``1.96 s / sqrt(N)`` across scans."""
    s = np.asarray(shapes, dtype=float)
    if s.ndim != 2 or s.shape[0] < 2:
        raise ValueError("need at least two shapes for a confidence interval")
    n = s.shape[0]
    dev = s - s[0]   # shift-invariant, so identical shapes give exactly zero spread
    return s.mean(axis=0), Z95 * dev.std(axis=0, ddof=1) / np.sqrt(n)


def aggregate_confidence(agg, f, halfband=1, noise_quantile=0.02):
    """95% half-width of the section cut at ``f`` from the aggregate's second moments.

    Scaled by the same factor that max-normalizes the denoised shape.
    """
    d = remove_noise_bed(agg, noise_quantile)
    row = np.nan_to_num(section_cut(d.values, d.grid, f, halfband))
    peak = row.max()
    if peak <= 0:
        raise ValueError(f"section cut at {f} Hz is identically zero")
    var = section_cut(agg.variance, agg.grid, f, halfband)
    n = section_cut(agg.count.astype(float), agg.grid, f, halfband)
    with np.errstate(invalid="ignore", divide="ignore"):
        half = Z95 * np.sqrt(var / n)
    return np.nan_to_num(half) / peak


def assemble_3d(lane_shapes, lane_offsets, n_y=21):
    """Lane cuts placed at their transverse offsets and linearly interpolated across y.

    Returns ``(y, surface)`` with ``surface[y, x]`` max-normalized.
    """
    shapes = np.asarray(lane_shapes, dtype=float)
    offsets = np.asarray(lane_offsets, dtype=float)
    if shapes.ndim != 2 or shapes.shape[0] < 2 or offsets.size != shapes.shape[0]:
        raise ValueError("need shapes for at least two lanes with matching offsets")
    order = np.argsort(offsets, kind="stable")
    offsets, shapes = offsets[order], shapes[order]
    y = np.linspace(offsets[0], offsets[-1], n_y)
    if offsets[-1] == offsets[0]:
        raise ValueError("lane offsets must span a nonzero width")
    surface = np.empty((n_y, shapes.shape[1]))
    for j in range(shapes.shape[1]):
        surface[:, j] = np.interp(y, offsets, shapes[:, j])
    peak = surface.max()
    if peak > 0:
        surface /= peak
    return y, surface


@dataclass
class ModeEstimate:
    frequency: float
    shapes: dict                              # lane offset -> shape vector
    ci_halfwidth: dict = field(default_factory=dict)
    prominence: float = 0.0
    scan_count: int = 0


def match_reference(frequency, ref_frequencies, rtol=0.05):
    """Index of the nearest reference frequency within ``rtol``, else ``None``."""
    ref = np.asarray(ref_frequencies, dtype=float)
    i = int(np.argmin(np.abs(ref - frequency) / ref))
    return i if abs(ref[i] - frequency) / ref[i] <= rtol else None


def shape_mse(estimate, reference):
    return float(np.mean((np.asarray(estimate) - np.asarray(reference)) ** 2))
