"""Markdown tables and SVG figures for sweep results."""

from __future__ import annotations

from pathlib import Path

from .scenario import CostMatrix, LoadingReport


def cost_matrix_markdown(cm: CostMatrix, scale: float = 1e6) -> str:
    """DLR counts down, VID counts across; cells ``total (change %)`` in units of ``scale``."""
    unit = f"10^{len(str(int(scale))) - 1}" if scale != 1 else "$"
    head = f"| DLR \\ VID ({unit} $) | " + " | ".join(str(v) for v in cm.vid_counts) + " |"
    rule = "|---|" + "---|" * len(cm.vid_counts)
    rows = [head, rule]
    for d in cm.dlr_counts:
        cells = []
        for v in cm.vid_counts:
            c = cm.cells.get((d, v))
            if c is None:
                cells.append("-")
                continue
            mark = "" if c.status == "optimal_within_gap" else "*"
            cells.append(f"{c.objective / scale:.3f} ({cm.change_pct(d, v):.1f}%){mark}")
        rows.append(f"| {d} | " + " | ".join(cells) + " |")
    return "\n".join(rows) + "\n"


def loading_markdown(reports: dict[tuple[int, int], LoadingReport]) -> str:
    rows = ["| DLR | VID | mean baseline | mean treated | mean change |", "|---|---|---|---|---|"]
    for (d, v), r in sorted(reports.items()):
        n = len(r.treated)
        b = sum(r.baseline.values()) / n
        t = sum(r.treated.values()) / n
        rows.append(f"| {d} | {v} | {b:.4f} | {t:.4f} | {r.mean_delta:+.4f} |")
    return "\n".join(rows) + "\n"


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "gridgets"
    return plt


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    return path


def cost_matrix_svg(cm: CostMatrix, path: str | Path) -> Path:
    plt = _figure()
    import numpy as np

    data = np.array([[cm.change_pct(d, v) for v in cm.vid_counts] for d in cm.dlr_counts])
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    im = ax.imshow(data, cmap="viridis_r", origin="upper")
    ax.set_xticks(range(len(cm.vid_counts)), [str(v) for v in cm.vid_counts])
    ax.set_yticks(range(len(cm.dlr_counts)), [str(d) for d in cm.dlr_counts])
    ax.set_xlabel("VID lines")
    ax.set_ylabel("DLR lines")
    for i in range(data.shape[0]):
        for j in range(data.shape[1]):
            ax.text(j, i, f"{data[i, j]:.1f}", ha="center", va="center", fontsize=8, color="w")
    fig.colorbar(im, ax=ax, label="change vs baseline (%)")
    fig.tight_layout()
    out = _save(fig, Path(path))
    plt.close(fig)
    return out


def loading_svg(report: LoadingReport, path: str | Path, title: str = "") -> Path:
    """Baseline vs treated mean loading per line with the 45 degree reference."""
    plt = _figure()
    ids = sorted(report.treated)
    x = [report.baseline[i] for i in ids]
    y = [report.treated[i] for i in ids]
    top = max(x + y + [1.0]) * 1.05
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot([0, top], [0, top], "k--", linewidth=0.8)
    ax.scatter(x, y, s=14)
    ax.set_xlim(0, top)
    ax.set_ylim(0, top)
    ax.set_xlabel("baseline mean loading")
    ax.set_ylabel("treated mean loading")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    out = _save(fig, Path(path))
    plt.close(fig)
    return out
