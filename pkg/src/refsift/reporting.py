"""Renderers for the per-iteration efficiency report: terminal table,
CSV, and a couple of figures for quick inspection."""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .models import IterationReport
from .screening import totals_row

COLUMNS = ("iteration", "retrieved", "rejected_metadata", "rejected_screening", "approved", "efficiency")


def report_rows(reports: list[IterationReport]) -> list[dict]:
    rows = []
    for report in reports:
        rows.append(
            {
                "iteration": str(report.iteration_number),
                "retrieved": report.retrieved,
                "rejected_metadata": report.rejected_metadata,
                "rejected_screening": report.rejected_screening,
                "approved": report.approved,
                "efficiency": f"{report.efficiency:.2f}",
            }
        )
    if reports:
        total = totals_row(reports)
        rows.append(
            {
                "iteration": "total",
                "retrieved": total.retrieved,
                "rejected_metadata": total.rejected_metadata,
                "rejected_screening": total.rejected_screening,
                "approved": total.approved,
                "efficiency": f"{total.efficiency:.2f}",
            }
        )
    return rows


def render_table(reports: list[IterationReport]) -> str:
    rows = report_rows(reports)
    if not rows:
        return "no iterations recorded"
    widths = {c: max(len(c), *(len(str(r[c])) for r in rows)) for c in COLUMNS}
    lines = ["  ".join(c.rjust(widths[c]) for c in COLUMNS)]
    for row in rows:
        lines.append("  ".join(str(row[c]).rjust(widths[c]) for c in COLUMNS))
    return "\n".join(lines)


def write_csv(path: str, reports: list[IterationReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=COLUMNS)
        writer.writeheader()
        for row in report_rows(reports):
            writer.writerow(row)


def render_figures(out_dir: str, reports: list[IterationReport]) -> list[str]:
    """Write counts and efficiency charts next to the CSV; returns the
    file paths."""
    os.makedirs(out_dir, exist_ok=True)
    iterations = [r.iteration_number for r in reports]
    paths = []

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(iterations, [r.retrieved for r in reports], marker="o", label="retrieved")
    ax.plot(iterations, [r.rejected_metadata for r in reports], marker="s", label="rejected (metadata)")
    ax.plot(iterations, [r.rejected_screening for r in reports], marker="^", label="rejected (screening)")
    ax.plot(iterations, [r.approved for r in reports], marker="d", label="approved")
    ax.set_xlabel("iteration")
    ax.set_ylabel("articles")
    ax.set_xticks(iterations)
    ax.legend()
    fig.tight_layout()
    counts_path = os.path.join(out_dir, "iteration_counts.png")
    fig.savefig(counts_path, dpi=120)
    plt.close(fig)
    paths.append(counts_path)

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(iterations, [r.efficiency for r in reports], color="#4878a8")
    if reports:
        total = totals_row(reports)
        ax.axhline(total.efficiency, linestyle="--", color="#a84848", label=f"total {total.efficiency:.2f}")
        ax.legend()
    ax.set_xlabel("iteration")
    ax.set_ylabel("approved / retrieved")
    ax.set_xticks(iterations)
    fig.tight_layout()
    eff_path = os.path.join(out_dir, "iteration_efficiency.png")
    fig.savefig(eff_path, dpi=120)
    plt.close(fig)
    paths.append(eff_path)
    return paths
