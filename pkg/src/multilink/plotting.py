"""Percentile-band figures for replicate reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def band_figure(summary: list[dict], metric: str, path) -> Path | None:
    """Median (solid) and 2nd/98th percentiles (dashed) of ``metric`` against error level.

    One colour per (variant, estimate) series.  Returns ``None`` when the
    metric has no data.
    """
    series: dict[tuple[str, str], list[dict]] = {}
    for row in summary:
        series.setdefault((row["variant"], row["estimate"]), []).append(row)
    if not any(r.get(f"{metric}_count") for rows in series.values() for r in rows):
        return None

    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for n, ((variant, kind), rows) in enumerate(sorted(series.items())):
        rows = sorted(rows, key=lambda r: r["errors"])
        x = [r["errors"] for r in rows]
        c = colors[n % len(colors)]
        label = variant if kind == "full" else f"{variant} ({kind})"
        ax.plot(x, [r[f"{metric}_median"] for r in rows], "-o", color=c, ms=3, label=label)
        ax.plot(x, [r[f"{metric}_p02"] for r in rows], "--", color=c, lw=0.8)
        ax.plot(x, [r[f"{metric}_p98"] for r in rows], "--", color=c, lw=0.8)
    ax.set_xlabel("erroneous fields per record")
    ax.set_ylabel(metric)
    if metric != "abstention":
        ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def report_figures(summary: list[dict], directory) -> list[Path]:
    directory = Path(directory)
    out = []
    for metric in ("precision", "recall", "abstention"):
        p = band_figure(summary, metric, directory / f"{metric}.png")
        if p is not None:
            out.append(p)
    return out
