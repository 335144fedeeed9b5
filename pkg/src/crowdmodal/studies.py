"""Sample-size studies on a pool of per-scan maps: accuracy, CI narrowing, bump bias.

All functions work on *row stacks*: the per-scan normalized map values of the
grid rows around one frequency, shaped ``(n_scans, n_rows, n_positions)``.
Reducing a stack gives exactly what :func:`extract_mode_shape` would return on
the aggregate of those scans.
"""

from __future__ import annotations

import warnings

import numpy as np

from .aggregation import remove_noise_bed
from .decontamination import decontaminate
from .modal import Z95, mac, nearest_row, shape_mse

DEFAULT_SIZES = (20, 50, 100, 240, 480)


def row_stack(maps, f, halfband=1):
    """Rows within ``halfband`` of the grid row nearest ``f``, one block per map."""
    maps = list(maps)
    if not maps:
        raise ValueError("no maps")
    grid = maps[0].grid
    i = nearest_row(grid, f)
    lo, hi = max(i - halfband, 0), min(i + halfband + 1, grid.frequencies.size)
    return np.stack([m.values[lo:hi] for m in maps])


def shape_from_stack(stack, quantile=0.02):
    """Denoised, max-normalized section cut of the mean of ``stack``."""
    mean = np.nanmean(stack, axis=0)
    with np.errstate(all="ignore"):
        bed = np.nan_to_num(np.nanquantile(mean, quantile, axis=1))
    row = np.nan_to_num(np.nanmean(np.maximum(mean - bed[:, None], 0.0), axis=0))
    peak = row.max()
    if peak <= 0:
        raise ValueError("section cut is identically zero")
    return row / peak


def _scale(stack, quantile):
    mean = np.nanmean(stack, axis=0)
    with np.errstate(all="ignore"):
        bed = np.nan_to_num(np.nanquantile(mean, quantile, axis=1))
    return np.nan_to_num(np.nanmean(np.maximum(mean - bed[:, None], 0.0), axis=0)).max()


def per_scan_cuts(stack):
    """Each scan's own section cut: its rows averaged, shape ``(n_scans, n_positions)``.

    Positions a scan does not cover stay NaN.
    """
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.nanmean(stack, axis=1)


def scan_confidence(stack, quantile=0.02):
    """95% half-width ``1.96 s / sqrt(N)`` of the per-scan cuts.

    Expressed in units of the max-normalized shape of the pooled scans so it can be
    drawn around :func:`shape_from_stack`.
    """
    cuts = per_scan_cuts(stack)
    n = cuts.shape[0]
    if n < 2:
        raise ValueError("need at least two scans for a confidence interval")
    half = Z95 * np.nanstd(cuts, axis=0, ddof=1) / np.sqrt(n)
    return half / _scale(stack, quantile)


def ci_curve(stack, sizes=DEFAULT_SIZES, quantile=0.02):
    """Mean and median CI half-width for nested pools made of the first ``N`` scans."""
    out = {}
    for n in sizes:
        if n > stack.shape[0]:
            raise ValueError(f"pool has {stack.shape[0]} scans, cannot take {n}")
        half = scan_confidence(stack[:n], quantile)
        out[int(n)] = {"mean": float(np.mean(half)), "median": float(np.median(half))}
    return out


def subset_indices(n_pool, size, n_subsets, seed):
    """Deterministic random subsets; subset ``k`` of a size uses seed ``[seed, size, k]``.

    A subset as large as the pool is the pool itself (and only drawn once).
    """
    if size > n_pool:
        raise ValueError(f"pool has {n_pool} scans, cannot draw {size}")
    if size == n_pool:
        return [np.arange(n_pool)]
    return [np.sort(np.random.default_rng([seed, size, k]).choice(n_pool, size, replace=False))
            for k in range(n_subsets)]


def subset_accuracy(stack, reference, sizes, n_subsets=100, seed=0, quantile=0.02):
    """MAC [%] and MSE of the pooled shape against ``reference`` over random subsets.

    Returns ``{size: {"mac": array, "mse": array}}``.
    """
    out = {}
    for n in sizes:
        macs, mses = [], []
        for idx in subset_indices(stack.shape[0], n, n_subsets, seed):
            s = shape_from_stack(stack[idx], quantile)
            macs.append(mac(s, reference))
            mses.append(shape_mse(s, reference))
        out[int(n)] = {"mac": np.array(macs), "mse": np.array(mses)}
    return out


def bump_bias(stack, reference, positions, bump_positions, sizes=(20, 480), n_subsets=100, seed=0,
              quantile=0.02):
    """Shape error at the grid positions nearest each bump, over random subsets.

    For every pool size returns the per-bump signed mean error, the mean absolute
    error and the mean squared error (averaged over subsets and bumps).
    """
    positions = np.asarray(positions, dtype=float)
    cols = np.array([int(np.argmin(np.abs(positions - b))) for b in bump_positions])
    out = {}
    for n in sizes:
        errs = np.array([(shape_from_stack(stack[idx], quantile) - reference)[cols]
                         for idx in subset_indices(stack.shape[0], n, n_subsets, seed)])
        out[int(n)] = {"signed": errs.mean(axis=0), "abs": float(np.mean(np.abs(errs))),
                       "squared": float(np.mean(errs ** 2))}
    return out


def decontaminate_stack(stack, **kwargs):
    """Apply :func:`decontaminate` to every row of a stack; returns the filtered stack and
    the number of components removed per row."""
    out = np.empty_like(stack)
    removed = []
    for r in range(stack.shape[1]):
        res = decontaminate(stack[:, r, :], **kwargs)
        out[:, r, :] = res.traces
        removed.append(res.removed)
    return out, removed


def decontamination_effect(stack, reference, quantile=0.02, **kwargs):
    """Shape MSE against ``reference`` before and after decontamination."""
    before = shape_from_stack(stack, quantile)
    filtered, removed = decontaminate_stack(stack, **kwargs)
    after = shape_from_stack(filtered, quantile)
    return {"mse_before": shape_mse(before, reference), "mse_after": shape_mse(after, reference),
            "mac_before": mac(before, reference), "mac_after": mac(after, reference),
            "removed": removed, "shape_before": before, "shape_after": after}


def peak_to_bed_ratio(m, f, quantile=0.02):
    """Denoised frequency-marginal value at ``f`` over the median of the denoised marginal."""
    d = remove_noise_bed(m, quantile)
    marg = np.nan_to_num(d.marginal())
    ref = np.median(marg)
    val = marg[nearest_row(d.grid, f)]
    if ref <= 0:
        return np.inf if val > 0 else 0.0
    return float(val / ref)
