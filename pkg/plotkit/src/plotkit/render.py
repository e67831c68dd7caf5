"""The four figure types.

Every function takes paths to CSVs produced by the gpbnn CLI, writes image
files, and returns the matplotlib figure(s) so tests can inspect the drawn
artists.  Inputs are never modified; identical inputs yield byte-identical
images (fixed style, no embedded timestamps).
"""

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "PlotDataError",
    "plot_prior_gallery",
    "plot_predictive_bands",
    "plot_learning_curves",
    "plot_q_slice",
]

_STYLE = {
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.25,
    "font.size": 9,
}


class PlotDataError(ValueError):
    """Input CSV missing, malformed, or empty."""


def _read_csv(path, expected_header):
    if not os.path.exists(path):
        raise PlotDataError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != list(expected_header):
        raise PlotDataError(
            f"{path}: expected header {','.join(expected_header)!r}"
        )
    if len(rows) < 2:
        raise PlotDataError(f"{path}: no data rows")
    try:
        data = np.array([[float(v) for v in row] for row in rows[1:]])
    except (ValueError, IndexError):
        raise PlotDataError(f"{path}: malformed data rows")
    if data.shape[1] != len(expected_header):
        raise PlotDataError(f"{path}: wrong column count")
    return data


def _name(path):
    return os.path.splitext(os.path.basename(path))[0]


def _save(fig, path):
    if str(path).endswith(".svg"):
        fig.savefig(path, metadata={"Date": None})
    else:
        fig.savefig(path)


def plot_prior_gallery(prior_csvs, out_path):
    """Grid of prior-draw panels, one per CSV of (draw_id, x, f) rows."""
    if not prior_csvs:
        raise PlotDataError("no prior CSVs given")
    tables = [(_name(p), _read_csv(p, ("draw_id", "x", "f"))) for p in prior_csvs]
    n = len(tables)
    cols = min(n, 4)
    rows = (n + cols - 1) // cols
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(rows, cols, figsize=(3.0 * cols, 2.4 * rows),
                                 squeeze=False)
        for ax in axes.ravel()[n:]:
            ax.set_axis_off()
        for ax, (name, data) in zip(axes.ravel(), tables):
            for draw in np.unique(data[:, 0]):
                sel = data[data[:, 0] == draw]
                order = np.argsort(sel[:, 1])
                ax.plot(sel[order, 1], sel[order, 2], lw=1.2)
            ax.set_title(name)
        fig.tight_layout()
    _save(fig, out_path)
    return fig


def plot_predictive_bands(prediction_csvs, train_csv, out_dir, fmt="png"):
    """One band plot per prediction CSV: mean line, mean +- 3 std shading,
    training points overlaid.  Returns {model name: figure}."""
    if not prediction_csvs:
        raise PlotDataError("no prediction CSVs given")
    train = _read_csv(train_csv, ("x", "y"))
    os.makedirs(out_dir, exist_ok=True)
    figs = {}
    for path in prediction_csvs:
        name = _name(path)
        data = _read_csv(path, ("x", "mean", "std"))
        order = np.argsort(data[:, 0])
        x, mean, std = data[order, 0], data[order, 1], data[order, 2]
        with plt.rc_context(_STYLE):
            fig, ax = plt.subplots(figsize=(5.0, 3.2))
            ax.fill_between(x, mean - 3.0 * std, mean + 3.0 * std,
                            alpha=0.3, linewidth=0, label="+-3 std")
            ax.plot(x, mean, lw=1.4, label="mean")
            ax.plot(train[:, 0], train[:, 1], ".", ms=3, color="black",
                    label="train")
            ax.set_title(name)
            ax.legend(loc="upper left")
            fig.tight_layout()
        _save(fig, os.path.join(out_dir, f"{name}.{fmt}"))
        figs[name] = fig
    return figs


def plot_learning_curves(curve_csvs, out_path):
    """Mean reward per episode across runs with a +-1 standard error ribbon."""
    if not curve_csvs:
        raise PlotDataError("no curve CSVs given")
    tables = [_read_csv(p, ("episode", "cumulative_reward")) for p in curve_csvs]
    episodes = tables[0][:, 0]
    for t in tables[1:]:
        if t.shape != tables[0].shape or not np.array_equal(t[:, 0], episodes):
            raise PlotDataError("curve CSVs disagree on the episode grid")
    rewards = np.stack([t[:, 1] for t in tables])
    mean = rewards.mean(axis=0)
    if rewards.shape[0] > 1:
        sem = rewards.std(axis=0, ddof=1) / np.sqrt(rewards.shape[0])
    else:
        sem = np.zeros_like(mean)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        ax.fill_between(episodes, mean - sem, mean + sem, alpha=0.3, linewidth=0)
        ax.plot(episodes, mean, lw=1.4)
        ax.set_xlabel("episode")
        ax.set_ylabel("cumulative reward")
        fig.tight_layout()
    _save(fig, out_path)
    return fig


def plot_q_slice(slice_csvs, out_path):
    """Overlaid Q(theta) curves from (theta, q) CSVs."""
    if not slice_csvs:
        raise PlotDataError("no slice CSVs given")
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        for path in slice_csvs:
            data = _read_csv(path, ("theta", "q"))
            order = np.argsort(data[:, 0])
            ax.plot(data[order, 0], data[order, 1], lw=1.4, label=_name(path))
        ax.set_xlabel("theta (rad)")
        ax.set_ylabel("Q")
        ax.legend(loc="best")
        fig.tight_layout()
    _save(fig, out_path)
    return fig
