"""Log-log rate charts rendered to static SVG files next to the CSV output."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .analysis import ErrorTable  # noqa: E402

__all__ = ["render_rate_figure"]

# keep SVG ids reproducible across runs
plt.rcParams["svg.hashsalt"] = "schrofem"


def render_rate_figure(table: ErrorTable, out_path, title: str, predicted_slope=None) -> None:
    """Render per-level errors with the fitted combined-error slope annotated."""
    levels = [row.level for row in table.rows]
    rss = [math.hypot(row.rms_re, row.rms_im) for row in table.rows]
    fit = table.fit_combined

    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.plot(levels, [r.rms_re for r in table.rows], "o-", label="real part")
    ax.plot(levels, [r.rms_im for r in table.rows], "s-", label="imaginary part")
    ax.plot(levels, rss, "d--", color="k", label="combined")
    fitted = [2.0**fit.intercept * lvl**fit.slope for lvl in levels]
    ax.plot(levels, fitted, ":", color="gray",
            label=f"fit: slope {fit.slope:.3f} $\\pm$ {fit.ci:.3f}")
    if predicted_slope is not None:
        anchor = rss[-1] / levels[-1] ** predicted_slope
        ax.plot(levels, [anchor * lvl**predicted_slope for lvl in levels],
                "-.", color="tab:red", alpha=0.6, label=f"slope {predicted_slope:g} guide")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel(table.vary)
    ax.set_ylabel("rms error at T")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
