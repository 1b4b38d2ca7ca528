"""Static SVG charts of report data, rendered byte-stably."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {
    "svg.hashsalt": "htnet",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def propensity_chart(tables, path):
    """Grouped bars of ``pi_i(z, e)``, one group per combination, one bar set per method."""
    first = tables[0]
    labels = [f"u{i} ({z},{e})" for i, z, e, _, _ in first.rows()]
    x = np.arange(len(labels))
    width = 0.8 / len(tables)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.35 * len(labels)), 3.0))
        for k, t in enumerate(tables):
            vals = [pi for *_, pi, _ in t.rows()]
            ax.bar(x + (k - (len(tables) - 1) / 2) * width, vals, width, label=t.method)
        ax.set_xticks(x, labels, rotation=90)
        ax.set_ylabel("propensity")
        ax.set_ylim(0.0, 1.0)
        ax.legend(frameon=False)
        return _save(fig, path)


def moments_chart(rows, path):
    """Bias, variance and MSE bars per estimator from moment-report rows."""
    names = [r[1] for r in rows]
    stats = ("bias", "variance", "mse")
    x = np.arange(len(stats))
    width = 0.8 / max(1, len(rows))
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        for k, r in enumerate(rows):
            ax.bar(x + (k - (len(rows) - 1) / 2) * width, r[3:6], width, label=names[k])
        ax.axhline(0.0, color="0.3", lw=0.6)
        ax.set_xticks(x, stats)
        ax.legend(frameon=False)
        return _save(fig, path)


def dominance_chart(table_ids, mse_a, mse_b, name_a, name_b, path):
    """Per-table MSE of two estimators, tables sorted by the second one's MSE."""
    order = np.argsort(mse_b, kind="stable")
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.0))
        ax.plot(np.asarray(mse_b)[order], lw=1.0, label=name_b)
        ax.plot(np.asarray(mse_a)[order], lw=1.0, ls="--", label=name_a)
        ax.set_xlabel(f"table (sorted by {name_b} MSE, {len(table_ids)} tables)")
        ax.set_ylabel("exact MSE")
        ax.set_yscale("symlog", linthresh=1e-6)
        ax.legend(frameon=False)
        return _save(fig, path)
