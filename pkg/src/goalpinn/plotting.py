"""Deterministic SVG convergence plots built from trace CSV files.

A plot is a pure function of its input CSV files: rendering the same trace
twice yields byte-identical SVG (fixed hash salt, no embedded date).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .adaptive import EVENT_NONE, Trace

_SVG_KWARGS = {"format": "svg", "metadata": {"Date": None}}


def _configure():
    plt.rcParams["svg.hashsalt"] = "goalpinn"


def logged_error_series(trace: Trace) -> tuple[np.ndarray, np.ndarray]:
    """(epochs, |J_error|) restricted to rows where the functional was logged."""
    epochs = trace.column("epoch").astype(float)
    errors = trace.column("J_error")
    mask = np.isfinite(errors)
    return epochs[mask], np.abs(errors[mask])


def windowed_average(epochs: np.ndarray, values: np.ndarray,
                     window: int) -> tuple[np.ndarray, np.ndarray]:
    """Average values over consecutive epoch windows of the given width."""
    if window <= 1 or len(epochs) == 0:
        return epochs, values
    bins = ((epochs - 1) // window).astype(int)
    out_e, out_v = [], []
    for b in np.unique(bins):
        sel = bins == b
        out_e.append(epochs[sel].mean())
        out_v.append(values[sel].mean())
    return np.array(out_e), np.array(out_v)


def _draw_events(ax, event_epochs):
    for e in event_epochs:
        ax.axvline(e, color="red", linestyle="--", linewidth=1.2)


def convergence_plot(trace_path, out_path, avg_window: int | None = None,
                     title: str | None = None) -> None:
    """Single-run |J_error| curve on a log axis with event markers."""
    _configure()
    trace = Trace.from_csv(trace_path)
    epochs, errors = logged_error_series(trace)
    if avg_window:
        epochs, errors = windowed_average(epochs, errors, avg_window)
    fig, ax = plt.subplots(figsize=(8.0, 5.0))
    positive = errors > 0
    ax.semilogy(epochs[positive], errors[positive], color="tab:blue",
                label="functional error")
    _draw_events(ax, trace.event_rows())
    ax.set_xlabel("epoch")
    ax.set_ylabel("|J error|")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.savefig(out_path, **_SVG_KWARGS)
    plt.close(fig)


def _median_series(trace_paths, avg_window):
    per_seed = []
    grid = None
    for path in trace_paths:
        epochs, errors = logged_error_series(Trace.from_csv(path))
        if avg_window:
            epochs, errors = windowed_average(epochs, errors, avg_window)
        if grid is None:
            grid = epochs
        if len(epochs) != len(grid) or not np.array_equal(epochs, grid):
            raise ValueError("traces in one overlay series must share their logging grid")
        per_seed.append(errors)
    return grid, np.median(np.vstack(per_seed), axis=0)


def overlay_plot(series: dict[str, list], out_path, event_epochs=(),
                 avg_window: int | None = None, title: str | None = None) -> None:
    """Overlay of per-strategy median error curves across seeds.

    ``series`` maps a label to the list of trace CSV paths for that
    strategy (one per seed); each label contributes exactly one curve.
    """
    _configure()
    fig, ax = plt.subplots(figsize=(8.0, 5.0))
    colors = ["tab:orange", "tab:blue", "tab:green", "tab:purple"]
    for color, (label, paths) in zip(colors, sorted(series.items())):
        grid, med = _median_series(paths, avg_window)
        positive = med > 0
        ax.semilogy(grid[positive], med[positive], color=color, label=label)
    _draw_events(ax, event_epochs)
    ax.set_xlabel("epoch")
    ax.set_ylabel("|J error|")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.savefig(out_path, **_SVG_KWARGS)
    plt.close(fig)
