"""CSV emission and figure rendering for the command-line reports.

CSV is the single numeric output format; every float is written with its
shortest round-trip representation so identical runs produce identical
bytes.  Each report also renders a matplotlib figure (PNG) next to its CSV
with the same stem; figures are plain files, never interactive windows.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "write_csv",
    "surface_figure",
    "derivcheck_figure",
    "stationarity_figure",
    "ellipsoids_figure",
    "trace_figure",
]


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, fieldnames, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_fmt(row[k]) for k in fieldnames])
    return path


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return path


def surface_figure(samples, path, title="surface"):
    """3D rendering of the sampled chart colored by sqrt(k1^2 + k2^2)."""
    nt, npn = samples.grid.n_theta, samples.grid.n_phi
    xyz = samples.position.reshape(nt, npn, 3)
    g = samples.rms_curvature.reshape(nt, npn)
    # wrap the azimuthal seam
    xyz = np.concatenate([xyz, xyz[:, :1]], axis=1)
    g = np.concatenate([g, g[:, :1]], axis=1)
    fig = plt.figure(figsize=(7, 6))
    ax = fig.add_subplot(111, projection="3d")
    norm = plt.Normalize(g.min(), g.max() if g.max() > g.min() else g.min() + 1)
    colors = plt.cm.viridis(norm(g))
    ax.plot_surface(
        xyz[..., 0], xyz[..., 1], xyz[..., 2],
        facecolors=colors, rstride=1, cstride=1, linewidth=0, antialiased=False,
    )
    mappable = plt.cm.ScalarMappable(norm=norm, cmap="viridis")
    fig.colorbar(mappable, ax=ax, shrink=0.7, label="rms curvature")
    ax.set_title(title)
    ax.set_box_aspect((1, 1, 1))
    lim = np.abs(xyz).max()
    for setter in (ax.set_xlim, ax.set_ylim, ax.set_zlim):
        setter(-lim, lim)
    return _save(fig, path)


def derivcheck_figure(rows, path):
    """Relative error vs step size, one line per checked operation."""
    fig, ax = plt.subplots(figsize=(7, 5))
    ops = sorted({r["operation"] for r in rows})
    for op in ops:
        pts = sorted(
            {(r["eps"], r["rel_err"]) for r in rows if r["operation"] == op and r["rel_err"] > 0}
        )
        if pts:
            eps, err = zip(*pts)
            ax.loglog(eps, err, "o-", label=op, alpha=0.8)
    if rows:
        eps_all = sorted({r["eps"] for r in rows})
        ref = np.asarray(eps_all)
        ax.loglog(ref, 1e2 * ref ** 2, "k--", lw=1, label="O(eps^2)")
    ax.set_xlabel("finite-difference step")
    ax.set_ylabel("relative error vs analytic")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, path)


def stationarity_figure(rows, path):
    """Log-scale residual bars; controls with a wrong multiplier highlighted."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    labels = [f"{r['constraint'][:4]} r={r['radius']} {r['field']}" for r in rows]
    values = [max(r["residual"], 1e-17) for r in rows]
    colors = ["tab:red" if r["control"] else "tab:blue" for r in rows]
    ax.bar(range(len(rows)), values, color=colors)
    ax.set_yscale("log")
    ax.axhline(1e-6, color="k", ls="--", lw=1, label="1e-6")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, rotation=90, fontsize=6)
    ax.set_ylabel("|dL| / (1 + |V|)")
    ax.legend()
    return _save(fig, path)


def ellipsoids_figure(rows, path):
    """TV over the area-normalized aspect sweep, minimum highlighted."""
    fig, ax = plt.subplots(figsize=(6.5, 5))
    p = [r["aspect_p"] for r in rows]
    q = [r["aspect_q"] for r in rows]
    tv = np.array([r["tv"] for r in rows])
    sc = ax.scatter(p, q, c=tv, s=300, cmap="viridis")
    best = int(np.argmin(tv))
    ax.scatter([p[best]], [q[best]], marker="*", s=250, c="tab:red", label="minimum")
    for r in rows:
        ax.annotate(f"{r['tv']:.4f}", (r["aspect_p"], r["aspect_q"]),
                    textcoords="offset points", xytext=(0, 14), ha="center", fontsize=7)
    fig.colorbar(sc, ax=ax, label="TV of normal (area-normalized)")
    ax.set_xlabel("aspect p")
    ax.set_ylabel("aspect q")
    ax.legend()
    return _save(fig, path)


def trace_figure(trace, path):
    """Per-sweep Lagrangian, TV, constraint residual, and area/volume drift."""
    fig, axes = plt.subplots(2, 2, figsize=(10, 7))
    sweeps = [r["sweep"] for r in trace]
    axes[0, 0].plot(sweeps, [r["lagrangian"] for r in trace], "o-")
    axes[0, 0].set_title("augmented Lagrangian")
    axes[0, 1].plot(sweeps, [r["tv"] for r in trace], "o-", color="tab:green")
    axes[0, 1].set_title("TV of normal")
    axes[1, 0].semilogy(sweeps, [max(r["residual"], 1e-17) for r in trace], "o-", color="tab:red")
    axes[1, 0].set_title("constraint residual")
    axes[1, 1].plot(sweeps, [r["area"] for r in trace], "o-", label="area")
    axes[1, 1].plot(sweeps, [r["volume"] for r in trace], "s-", label="volume")
    axes[1, 1].set_title("area / volume")
    axes[1, 1].legend()
    for ax in axes.flat:
        ax.set_xlabel("sweep")
        ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)
