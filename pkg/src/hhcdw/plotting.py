"""Static SVG figures: the ground-state phase diagram and simple line scans."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .classical import REGIONS  # noqa: E402

golden_mean = (np.sqrt(5) - 1.0) / 2.0
fig_width = 5.0
params = {
    "axes.labelsize": 10,
    "font.family": "serif",
    "font.size": 8,
    "mathtext.fontset": "stix",
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": [fig_width, fig_width * golden_mean],
    "lines.linewidth": 1,
    "lines.markersize": 3,
    "svg.hashsalt": "hhcdw",  # deterministic element ids
}
REGION_TEX = {
    "Sep_plus": r"$S_{\rm ep,+}$",
    "Sep_minus": r"$S_{\rm ep,-}$",
    "Sep_zero": r"$S_{\rm ep,0}$",
    "H0": r"$H_0$",
    "H1": r"$H_1$",
    "H2": r"$H_2$",
}
colors = ["#a8ddb5", "#7bccc4", "#4eb3d3", "#2b8cbe", "#08589e", "#fdae6b"]


def _stamp(fig, meta):
    if meta:
        fig.text(0.99, 0.005, "  ".join(f"{k}={v}" for k, v in meta.items()),
                 ha="right", va="bottom", fontsize=5, color="0.5")


def _save(fig, path, meta):
    _stamp(fig, meta)
    fig.savefig(path, format="svg", metadata={"Date": None, "Description": str(meta or "")})
    plt.close(fig)


def phase_diagram_figure(us, ms, labels, W, path, meta=None):
    """Region map on the (u, m) grid with the guide lines u = W/2, m = +-W."""
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        code = np.full(labels.shape, np.nan)
        for k, r in enumerate(REGIONS):
            code[labels == r] = k
        cmap = matplotlib.colors.ListedColormap(colors)
        ax.pcolormesh(us, ms, code, cmap=cmap, vmin=-0.5, vmax=len(REGIONS) - 0.5, shading="nearest")
        ax.axvline(W / 2, color="k", ls="--", lw=0.6)
        for s in (1, -1):
            ax.plot([us[0], min(0.0, us[-1])], [s * W, s * W], color="k", ls="--", lw=0.6)
        for k, r in enumerate(REGIONS):
            mask = labels == r
            if mask.any():
                jj, ii = np.nonzero(mask)
                ax.text(np.mean(np.asarray(us)[ii]), np.mean(np.asarray(ms)[jj]), REGION_TEX[r],
                        ha="center", va="center", fontsize=9)
        ax.set_xlabel(r"$u = U_{\rm eff}/4d$")
        ax.set_ylabel(r"$m = \mu/2d$")
        ax.set_title(f"ground-state pairs, W = {W:g}")
        _save(fig, path, meta)


def line_figure(series, xlabel, ylabel, path, logy=False, meta=None):
    """``series``: dict label -> (x, y)."""
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        for label, (x, y) in series.items():
            y = np.abs(y) if logy else y
            ax.plot(x, y, "o-", label=label)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if len(series) > 1:
            ax.legend(frameon=False)
        _save(fig, path, meta)
