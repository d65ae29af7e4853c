"""SVG heatmaps of spectrum scans."""

from __future__ import annotations

import numpy as np

from .spectrum import TWO_PI, SpectrumReport

LOG_FLOOR = -16.0


def heatmap(report: SpectrumReport, path, title: str | None = None) -> None:
    """Cells coloured by clamped log10 of the normalised sigma_min.

    Needs a scan with exactly two free axes (fix the others with --fix-axis)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fixed = dict(report.fixed)
    free = [i for i in range(report.dimension) if i not in fixed]
    if len(free) != 2:
        raise ValueError("heatmaps need exactly two free axes")
    res = report.resolution
    vals = np.log10(np.clip(report.ratio, 10.0 ** LOG_FLOOR, None)).reshape(res, res)
    plt.rcParams["svg.hashsalt"] = "rumspec"
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    edges = TWO_PI * np.arange(res + 1) / res - np.pi / res
    mesh = ax.pcolormesh(edges, edges, vals.T, cmap="viridis", vmin=LOG_FLOOR, vmax=0.0, shading="flat")
    pts = report.thetas[report.flagged]
    if len(pts):
        ax.plot(pts[:, free[0]], pts[:, free[1]], "r.", ms=3, label=f"flagged (< {report.tol:g})")
        ax.legend(loc="upper right", fontsize=7)
    ax.set_xlabel(f"theta_{free[0] + 1}")
    ax.set_ylabel(f"theta_{free[1] + 1}")
    fig.colorbar(mesh, ax=ax, label="log10 sigma_min / sigma_max")
    label = title or report.framework
    if fixed:
        label += "  " + ", ".join(f"theta_{i + 1}={t:.4f}" for i, t in sorted(fixed.items()))
    if report.moduli is not None:
        label += "  r=(" + ", ".join(f"{r:g}" for r in report.moduli) + ")"
    ax.set_title(label, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
