"""PNG figures for the identify report (headless Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .aggregation import remove_noise_bed  # noqa: E402
from .beam import reference_shape  # noqa: E402


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # No software/date metadata, so reruns produce identical bytes.
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def _lane_label(y):
    return f"lane y={y:+.3f} m"


def plot_map(m, peaks, path, title=""):
    """Space-frequency magnitude with picked frequencies marked."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    g = m.grid
    mesh = ax.pcolormesh(g.positions, g.frequencies, np.nan_to_num(m.values), shading="auto", cmap="viridis")
    for p in peaks:
        ax.axhline(p.frequency, color="w", lw=0.6, ls="--")
    ax.set_yscale("log")
    ax.set_xlabel("position along span [m]")
    ax.set_ylabel("frequency [Hz]")
    ax.set_title(title)
    fig.colorbar(mesh, ax=ax, label="mean |W| (denoised)")
    fig.tight_layout()
    return _save(fig, path)


def plot_marginal(freqs, marginals, peaks, path):
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for y, marg in marginals.items():
        ax.plot(freqs, marg, lw=1.2, label=_lane_label(y))
    for p in peaks:
        ax.axvline(p.frequency, color="k", lw=0.6, ls=":")
    ax.set_xscale("log")
    ax.set_xlabel("frequency [Hz]")
    ax.set_ylabel("mean over positions")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_mode(x, shapes, cis, references, path, title=""):
    """Absolute mode shape per lane with its 95% band and, if given, the reference."""
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for i, (y, s) in enumerate(shapes.items()):
        color = f"C{i}"
        ax.plot(x, s, color=color, lw=1.5, label=_lane_label(y))
        if y in cis:
            ax.fill_between(x, s - cis[y], s + cis[y], color=color, alpha=0.25, lw=0)
        if y in references:
            ax.plot(x, references[y], color=color, lw=1, ls="--")
    ax.set_xlabel("position along span [m]")
    ax.set_ylabel("normalized amplitude")
    ax.set_ylim(bottom=0)
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_surface(y, x, surface, path, title=""):
    fig, ax = plt.subplots(figsize=(7, 3))
    cs = ax.contourf(x, y, surface, levels=20, cmap="magma")
    ax.set_xlabel("position along span [m]")
    ax.set_ylabel("transverse offset [m]")
    ax.set_title(title)
    fig.colorbar(cs, ax=ax, label="normalized amplitude")
    fig.tight_layout()
    return _save(fig, path)


def render_report_figures(fig_dir, report, estimates, extras, marginals, surfaces, lab, quantile):
    fig_dir = Path(fig_dir)
    x, lanes, aggs, peaks = extras["positions"], extras["lanes"], extras["aggs"], extras["peaks"]
    paths = []
    for y in lanes:
        d = remove_noise_bed(aggs[y], quantile)
        paths.append(plot_map(d, peaks, fig_dir / f"map_lane{y:+.4f}.png",
                              f"{report['scenario']}: {_lane_label(y)}, {aggs[y].scan_count} scans"))
    paths.append(plot_marginal(aggs[lanes[0]].grid.frequencies, marginals, peaks, fig_dir / "marginal.png"))
    for r, est in zip(report["modes"], estimates):
        ref = r.get("reference")
        refs = {}
        if ref is not None:
            refs = {y: reference_shape(lab.model, lab.spec, ref["index"] - 1, x, y) for y in est.shapes}
        title = f"mode {r['mode']}: {r['frequency']:.3f} Hz"
        if ref is not None:
            title += f" (reference {ref['kind']} {ref['frequency']:g} Hz)"
        paths.append(plot_mode(x, est.shapes, est.ci_halfwidth, refs, fig_dir / f"mode{r['mode']}.png", title))
        if r["mode"] in surfaces:
            yy, surf = surfaces[r["mode"]]
            paths.append(plot_surface(yy, x, surf, fig_dir / f"mode{r['mode']}_surface.png", title))
    return paths
