"""Figure rendering for the CLI report paths.

Each function writes one PNG next to the delimited output it visualizes
and returns the path. Rendering is headless (Agg).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import matplotlib.tri as mtri
import numpy as np

from .geometry import NodeSet, closed_form_solution
from .perf import MemoryModel

_DPI = 150


def render_solution(nodes: NodeSet, values, path):
    """Solution surface and per-node absolute error, side by side."""
    x, y = nodes.positions[:, 0], nodes.positions[:, 1]
    err = np.abs(np.asarray(values) - closed_form_solution(nodes.positions))
    tri = mtri.Triangulation(x, y)

    fig, (ax_u, ax_e) = plt.subplots(1, 2, figsize=(9.6, 4.2))
    shading = ax_u.tripcolor(tri, np.asarray(values), cmap="viridis", shading="gouraud")
    fig.colorbar(shading, ax=ax_u, shrink=0.85)
    ax_u.plot(x, y, ".", color="black", markersize=1.0, alpha=0.4)
    ax_u.set_title(f"solution on N={nodes.n_total} nodes")
    ax_u.set_aspect("equal")

    scatter = ax_e.scatter(x, y, c=err, s=6, cmap="magma")
    fig.colorbar(scatter, ax=ax_e, shrink=0.85)
    ax_e.set_title(f"abs error (max {err.max():.2e})")
    ax_e.set_aspect("equal")

    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def render_convergence(spacings, linf, l2, order, path):
    """Log-log error-vs-spacing curves with the fitted order."""
    fig, ax = plt.subplots(figsize=(5.4, 4.2))
    ax.loglog(spacings, linf, "o-", label="max error")
    ax.loglog(spacings, l2, "s--", label="rms error")
    if np.isfinite(order):
        href = np.asarray([min(spacings), max(spacings)])
        anchor = linf[int(np.argmin(spacings))]
        ax.loglog(
            href,
            anchor * (href / min(spacings)) ** order,
            ":",
            color="gray",
            label=f"fitted order {order:.2f}",
        )
    ax.set_xlabel("spacing h")
    ax.set_ylabel("error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def render_benchmark(reports, path):
    """Per-step-per-node time against N, one line per (n, threads)."""
    fig, ax = plt.subplots(figsize=(5.8, 4.2))
    groups = {}
    for r in reports:
        if r.ns_per_step_node is None:
            continue
        groups.setdefault((r.support_size, r.threads), []).append(
            (r.n_total, r.ns_per_step_node)
        )
    for (n, threads), pts in sorted(groups.items()):
        pts.sort()
        ax.loglog(
            [p[0] for p in pts],
            [p[1] for p in pts],
            "o-",
            label=f"n={n}, {threads} thread{'s' if threads != 1 else ''}",
        )
    ax.set_xlabel("nodes N")
    ax.set_ylabel("ns per step per node")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def render_memory_model(models, path):
    """Working-set size against N with the cache line and peak markers."""
    fig, ax = plt.subplots(figsize=(5.8, 4.2))
    peaks = [m.cache_peak_nodes() for m in models]
    n_grid = np.logspace(3, np.log10(max(peaks) * 4), 200)
    for model, peak in zip(models, peaks):
        ax.loglog(
            n_grid,
            [model.footprint_bytes(int(v), int(v)) for v in n_grid],
            label=f"n={model.support_size}",
        )
        ax.axvline(peak, color="gray", linestyle=":", alpha=0.5)
    cache = models[0].cache_bytes if models else MemoryModel(1).cache_bytes
    ax.axhline(cache, color="red", linestyle="--", label=f"cache {cache/1e6:.1f} MB")
    ax.set_xlabel("nodes N (all interior)")
    ax.set_ylabel("working set [bytes]")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path
