"""Static SVG renderings of run outputs: learning curves, gain bars, the
achieved-goal-change scatter, and imitated-action maps."""

from __future__ import annotations

import warnings
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .algos import ALGO_KINDS  # noqa: E402
from .envs import GRID  # noqa: E402
from .metrics import CSV_HEADER, MetricsRecord, normalized_gain  # noqa: E402

_PLOT_ORDER = tuple(ALGO_KINDS)


def read_metrics(csv_paths) -> list[MetricsRecord]:
    """Parse metrics CSVs; malformed rows are skipped with a warning."""
    records = []
    for path in csv_paths:
        with open(path, encoding="ascii") as f:
            for lineno, line in enumerate(f, 1):
                line = line.strip()
                if not line or line == CSV_HEADER:
                    continue
                try:
                    records.append(MetricsRecord.from_csv_row(line))
                except ValueError:
                    warnings.warn(f"{path}:{lineno}: skipping malformed row")
    return records


def final_success_by_algo(records) -> dict[str, list[float]]:
    """Per-algo list of final success rates (one entry per seed)."""
    finals: dict[tuple[str, int], MetricsRecord] = {}
    for rec in records:
        key = (rec.algo, rec.seed)
        if key not in finals or rec.env_step > finals[key].env_step:
            finals[key] = rec
    out = defaultdict(list)
    for (algo, _), rec in sorted(finals.items()):
        out[algo].append(rec.success_rate)
    return dict(out)


def plot_learning_curves(csv_paths, out_path) -> Path:
    records = read_metrics(csv_paths)
    if not records:
        raise ValueError("no metrics rows to plot")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    by_algo: dict[str, dict[int, list]] = defaultdict(lambda: defaultdict(list))
    for rec in records:
        by_algo[rec.algo][rec.seed].append(rec)
    for algo in sorted(by_algo, key=lambda k: _PLOT_ORDER.index(k) if k in _PLOT_ORDER else 99):
        seeds = by_algo[algo]
        curves = {}
        for seed, recs in seeds.items():
            recs = sorted(recs, key=lambda r: r.env_step)
            xs = [r.env_step for r in recs]
            ys = [r.success_rate for r in recs]
            ax.plot(xs, ys, alpha=0.25, linewidth=0.8)
            curves[seed] = (xs, ys)
        # Mean over seeds at shared x points.
        step_vals = defaultdict(list)
        for xs, ys in curves.values():
            for x, y in zip(xs, ys):
                step_vals[x].append(y)
        xs = sorted(step_vals)
        ys = [float(np.mean(step_vals[x])) for x in xs]
        ax.plot(xs, ys, marker="o" if len(xs) == 1 else None, label=algo, linewidth=2)
    ax.set_xlabel("environment steps")
    ax.set_ylabel("success rate")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="lower right", fontsize=8)
    ax.set_title("goal-reaching success")
    out_path = Path(out_path)
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path


def plot_gain_bars(csv_paths, out_path) -> Path:
    """Bar chart of headroom-normalized gain over the cloning baseline."""
    finals = final_success_by_algo(read_metrics(csv_paths))
    if "gcsl" not in finals:
        raise ValueError("gain bars need gcsl results as the baseline")
    base = 100.0 * float(np.mean(finals["gcsl"]))
    algos = [k for k in _PLOT_ORDER if k in finals]
    gains = [normalized_gain(100.0 * float(np.mean(finals[k])), base) for k in algos]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(range(len(algos)), gains, color="#4878d0")
    ax.set_xticks(range(len(algos)), algos, rotation=20)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_ylabel("normalized gain over gcsl")
    ax.set_title("fraction of remaining headroom gained")
    out_path = Path(out_path)
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path


def plot_ag_ratio_scatter(ratio: float, successes: dict[str, float], out_path) -> Path:
    """Scatter of success (percent) against the initial achieved-goal change
    ratio, with the ratio-implied ceiling line success = 100 * ratio."""
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    xs = np.linspace(0.0, 1.0, 50)
    ax.plot(xs, 100.0 * xs, "--", color="gray", label="ceiling (100 * ratio)")
    for algo, success in sorted(successes.items()):
        ax.scatter([ratio], [success], label=algo, zorder=3)
    ax.set_xlabel("initial achieved-goal change ratio")
    ax.set_ylabel("success rate (%)")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 102)
    ax.legend(loc="upper left", fontsize=8)
    ax.set_title("success vs. random-policy goal churn")
    out_path = Path(out_path)
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path


def plot_imitated_map(imap, env, out_path) -> Path:
    """Render which (cell, action) pairs pass the imitation gate for one goal.

    Moves are drawn as arrows, "stay" as a dot; the goal cell is circled.
    """
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    grid = np.zeros((GRID, GRID))
    free = {(r, c) for r, c in imap.cells}
    for r in range(GRID):
        for c in range(GRID):
            if (r, c) not in free:
                grid[r, c] = 1.0
    ax.imshow(grid, cmap="gray_r", vmin=0, vmax=1.5)
    deltas = {0: (-0.35, 0.0), 1: (0.35, 0.0), 2: (0.0, -0.35), 3: (0.0, 0.35)}
    for (r, c), row in zip(imap.cells, imap.indicators):
        for a, on in enumerate(row):
            if not on:
                continue
            if a == 4:
                ax.plot(c, r, ".", color="#d65f5f", markersize=4)
            else:
                dr, dc = deltas[a]
                ax.annotate("", xy=(c + dc, r + dr), xytext=(c, r),
                            arrowprops=dict(arrowstyle="->", color="#d65f5f", lw=1.0))
    gr, gc = np.rint(np.asarray(imap.goal) * (GRID - 1)).astype(int)
    ax.plot(gc, gr, "o", markersize=12, markerfacecolor="none", markeredgecolor="green")
    ax.set_xticks([])
    ax.set_yticks([])
    ax.set_title(f"imitated actions, threshold {imap.gamma_hdm}")
    out_path = Path(out_path)
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path
