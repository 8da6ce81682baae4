"""Delimited output and figure rendering for the command-line runner.

CSV cells carry floats at 17 significant digits, enough to round-trip IEEE
doubles, so repeated runs of a deterministic configuration produce
byte-identical files. Figures render through the Agg backend (no display
needed) to PNG files next to the CSVs.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "format_value",
    "write_csv",
    "figure_bsde",
    "figure_bsvie",
    "figure_risk",
    "figure_diagnostics",
    "figure_sweep",
    "figure_superquad",
]


def format_value(v) -> str:
    if isinstance(v, float) or isinstance(v, np.floating):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path: Path, fieldnames: list, rows: list) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fieldnames)
        for row in rows:
            w.writerow([format_value(row[k]) for k in fieldnames])
    return path


def _finish(fig, path: Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def figure_bsde(path, stats_per_component: dict) -> Path:
    """Mean curve with min/max band per component.

    stats_per_component[i] = dict with arrays 't', 'mean', 'min', 'max'.
    """
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for i, st in sorted(stats_per_component.items()):
        t = np.asarray(st["t"])
        ax.plot(t, st["mean"], label=f"component {i}")
        ax.fill_between(t, st["min"], st["max"], alpha=0.15)
    ax.set_xlabel("t")
    ax.set_ylabel("Y")
    ax.set_title("backward solution: mean and node range")
    ax.legend(loc="best", fontsize=8)
    return _finish(fig, path)


def figure_bsvie(path, times, diagonal_mean: np.ndarray, deltas: list) -> Path:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.2, 4.0))
    for i in range(diagonal_mean.shape[1]):
        ax1.plot(times, diagonal_mean[:, i], label=f"component {i}")
    ax1.set_xlabel("t")
    ax1.set_ylabel("Y(t)")
    ax1.set_title("Volterra diagonal (expected)")
    ax1.legend(loc="best", fontsize=8)
    if deltas:
        ax2.semilogy(np.arange(1, len(deltas) + 1), deltas, marker="o")
    ax2.set_xlabel("outer sweep")
    ax2.set_ylabel("update size")
    ax2.set_title("outer iteration trace")
    return _finish(fig, path)


def figure_risk(path, times, curves: dict) -> Path:
    """curves[label] = mean values per grid time."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label, vals in curves.items():
        ax.plot(times, vals, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("risk level")
    ax.set_title("dynamic risk curve")
    ax.legend(loc="best", fontsize=8)
    return _finish(fig, path)


def figure_diagnostics(path, rows: list) -> Path:
    """Horizontal bar chart of lhs per diagnostic row (capped for legibility)."""
    fig, ax = plt.subplots(figsize=(7.2, 4.6))
    show = rows[:40]
    labels = [f"{r['check_id']}:{r['instance_id']}"[:48] for r in show]
    vals = []
    for r in show:
        try:
            vals.append(float(r["lhs"]))
        except (TypeError, ValueError):
            vals.append(np.nan)
    pos = np.arange(len(show))
    ax.barh(pos, vals)
    ax.set_yticks(pos)
    ax.set_yticklabels(labels, fontsize=6)
    ax.invert_yaxis()
    ax.set_xlabel("lhs")
    ax.set_title("diagnostic check values")
    return _finish(fig, path)


def figure_bound_profile(path, times, lhs: np.ndarray, rhs: np.ndarray, k_hat: float) -> Path:
    """Exponential moment bound: per-time lhs against K_hat * rhs."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for i in range(lhs.shape[1]):
        ax.semilogy(times, lhs[:, i], label=f"lhs comp {i}")
        if np.all(np.isfinite(rhs[:, i])):
            ax.semilogy(times, k_hat * rhs[:, i], linestyle="--", label=f"K rhs comp {i}")
    ax.set_xlabel("t")
    ax.set_title(f"exponential moment bound (K = {k_hat:g})")
    ax.legend(loc="best", fontsize=8)
    return _finish(fig, path)


def figure_sweep(path, hs, errors, order: float) -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    ax.loglog(hs, errors, marker="o", label="gap to closed form")
    if np.all(errors > 0):
        c = errors[0] / hs[0] ** order
        ax.loglog(hs, c * hs**order, linestyle="--", label=f"slope {order:.2f}")
    ax.set_xlabel("h")
    ax.set_ylabel("|root gap|")
    ax.set_title("refinement study")
    ax.legend(loc="best", fontsize=8)
    return _finish(fig, path)


def figure_superquad(path, report) -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    N = np.asarray(report.ladder, dtype=float)
    z = np.array([np.nan if v is None else v for v in report.max_abs_z])
    y = np.array([np.nan if v is None else v for v in report.max_abs_y])
    ax.semilogy(N, np.maximum(z, 1e-300), marker="o", label="max |Z|")
    ax.semilogy(N, np.maximum(y, 1e-300), marker="s", label="max |Y|")
    failed = [n for n, f in zip(N, report.failures) if f is not None]
    for n in failed:
        ax.axvline(n, color="red", alpha=0.4)
    ax.set_xlabel("steps")
    ax.set_title(f"super-quadratic stress run: {report.verdict}")
    ax.legend(loc="best", fontsize=8)
    return _finish(fig, path)
