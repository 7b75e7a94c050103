"""Render benchmark reports as figures alongside the CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .bench import BenchRecord, FootprintRow, _record_sort_key

_BAR_COLORS = ("#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee")


def _grouped_bars(ax, group_labels, series):
    """series: list of (label, values) with len(values) == len(group_labels)."""
    width = 0.8 / max(1, len(series))
    for idx, (label, values) in enumerate(series):
        positions = [g + idx * width for g in range(len(group_labels))]
        ax.bar(positions, values, width=width, label=label,
               color=_BAR_COLORS[idx % len(_BAR_COLORS)])
    centers = [g + width * (len(series) - 1) / 2 for g in range(len(group_labels))]
    ax.set_xticks(centers)
    ax.set_xticklabels(group_labels, rotation=45, ha="right")
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    ax.legend(frameon=False, fontsize=8)


def _by_config(records: list[BenchRecord]) -> list[str]:
    seen = []
    for r in sorted(records, key=_record_sort_key):
        if r.name not in seen:
            seen.append(r.name)
    return seen


def plot_throughput(records: list[BenchRecord], path: str | Path) -> Path:
    """Grouped bars of effective TFLOPS per benchmark and algorithm."""
    names = _by_config(records)
    algos = []
    for r in records:
        if r.algorithm not in algos:
            algos.append(r.algorithm)
    series = []
    for algo in algos:
        by_name = {r.name: r.tflops for r in records if r.algorithm == algo}
        series.append((algo, [by_name.get(n, 0.0) for n in names]))
    fig, ax = plt.subplots(figsize=(max(6, 0.9 * len(names) * len(algos) * 0.35), 3.2))
    _grouped_bars(ax, names, series)
    ax.set_ylabel("TFLOPS")
    ax.set_title("Convolution throughput (best of repeats)")
    fig.savefig(path, bbox_inches="tight", dpi=150)
    plt.close(fig)
    return Path(path)


def plot_footprint(rows: list[FootprintRow], path: str | Path) -> Path:
    """Grouped bars of materialized elements per layout, log scale."""
    names = [row.name for row in rows]
    series = [
        ("raw", [row.raw_elems for row in rows]),
        ("im2col", [row.im2col_elems for row in rows]),
        ("im2win", [row.im2win_elems for row in rows]),
    ]
    fig, ax = plt.subplots(figsize=(max(6, 0.5 * len(names)), 3.2))
    _grouped_bars(ax, names, series)
    ax.set_yscale("log")
    ax.set_ylabel("elements")
    ax.set_title("Layout footprint per benchmark")
    fig.savefig(path, bbox_inches="tight", dpi=150)
    plt.close(fig)
    return Path(path)


def plot_ablation(records: list[BenchRecord], path: str | Path) -> Path:
    """Grouped bars of TFLOPS per benchmark with one technique removed at a time."""
    names = _by_config(records)
    variants = []
    for r in records:
        if r.variant not in variants:
            variants.append(r.variant)
    series = []
    for variant in variants:
        by_name = {r.name: r.tflops for r in records if r.variant == variant}
        series.append((variant, [by_name.get(n, 0.0) for n in names]))
    fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(names)), 3.2))
    _grouped_bars(ax, names, series)
    ax.set_ylabel("TFLOPS")
    ax.set_title("Tiled kernel ablation")
    fig.savefig(path, bbox_inches="tight", dpi=150)
    plt.close(fig)
    return Path(path)
