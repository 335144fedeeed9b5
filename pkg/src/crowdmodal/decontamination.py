"""Removal of position-locked contamination (bumps, joints) shared by many scans.

Per-scan position traces at one frequency row are high-passed with a wide
running median so that smooth modal content drops out. Consecutive scans are
averaged in small groups, which keeps content common to every scan and shrinks
scan-specific fluctuations. The dominant spatial components of the group means,
from the eigendecomposition of their cross-group second-moment matrix, are the
candidate contaminants. Each one that looks like the bump template is removed by
subtracting every scan's projection onto it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import median_filter

MIN_SCANS = 10


@dataclass
class DecontaminationResult:
    traces: np.ndarray          # filtered traces, same shape as the input
    removed: int                # number of components removed
    correlations: np.ndarray    # |corr| with the template of each inspected component
    components: np.ndarray      # inspected spatial components, unit norm, one per row
    template: np.ndarray


def _window(n_positions, window_fraction):
    return max(3, int(round(window_fraction * n_positions)) | 1)


def detect_bump_template(traces, window_fraction=0.15):
    """Localized spikes of the mean trace: the mean minus a wide running median, clipped at zero."""
    mean = np.nan_to_num(np.nanmean(np.asarray(traces, dtype=float), axis=0))
    spikes = mean - median_filter(mean, size=_window(mean.size, window_fraction), mode="nearest")
    return np.maximum(spikes, 0.0)


def localized_part(traces, window_fraction=0.15):
    """Each trace minus its own wide running median."""
    X = np.nan_to_num(np.asarray(traces, dtype=float))
    return X - median_filter(X, size=(1, _window(X.shape[1], window_fraction)), mode="nearest")


def common_components(traces, n_components=3, window_fraction=0.15, group_size=10):
    """Leading spatial components of the group-averaged localized part, strongest first.

    Eigenvectors of the cross-group second-moment matrix ``G G^T`` map back to
    unit-norm spatial signatures ``G^T e / ||G^T e||`` (a thin SVD). Returns the
    components, their singular values and the per-scan localized part.
    """
    H = localized_part(traces, window_fraction)
    n_groups = max(H.shape[0] // group_size, 1)
    G = np.stack([g.mean(axis=0) for g in np.array_split(H, n_groups)])
    _, s, vt = np.linalg.svd(G, full_matrices=False)
    k = int(min(n_components, vt.shape[0]))
    return vt[:k], s[:k], H


def decontaminate(traces, n_components=3, template=None, threshold=0.8, window_fraction=0.15,
                  group_size=10):
    """Remove those of the ``n_components`` leading common components that match the bump template.

    ``traces`` is ``(n_scans, n_positions)`` at one frequency row; NaN (uncovered)
    entries are treated as zero and restored afterwards. A component is removed when
    its absolute correlation with the template exceeds ``threshold``.
    """
    X = np.asarray(traces, dtype=float)
    if X.ndim != 2:
        raise ValueError("traces must be a 2-D (scans x positions) array")
    if X.shape[0] < MIN_SCANS:
        raise ValueError(f"decontamination needs at least {MIN_SCANS} scans, got {X.shape[0]}")
    if n_components < 1:
        raise ValueError("n_components must be >= 1")
    nan = np.isnan(X)
    if template is None:
        template = detect_bump_template(X, window_fraction)
    template = np.asarray(template, dtype=float)
    if template.shape != (X.shape[1],):
        raise ValueError("template length must match the number of positions")
    comps, _, H = common_components(X, n_components, window_fraction, group_size)
    corr = np.array([_abs_corr(c, template) for c in comps])
    out = np.nan_to_num(X).copy()
    removed = 0
    for c, r in zip(comps, corr):
        if r <= threshold:
            continue
        out -= np.outer(H @ c, c)
        removed += 1
    out[nan] = np.nan
    return DecontaminationResult(out, removed, corr, comps, template)


def _abs_corr(a, b):
    if np.std(a) == 0 or np.std(b) == 0:
        return 0.0
    return float(abs(np.corrcoef(a, b)[0, 1]))
