"""PNG figures written next to the CLI's CSV output.

Uses the non-interactive Agg backend; every function takes the output path
and returns it.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_DPI = 110
# long trajectories are thinned to this many points before plotting
_MAX_POINTS = 20000


def _save(fig, path):
    fig.tight_layout()
    # fixed metadata keeps repeated runs byte-identical
    fig.savefig(path, dpi=_DPI, metadata={"Software": None})
    plt.close(fig)
    return path


def _thin(*arrays):
    n = len(arrays[0])
    step = max(1, n // _MAX_POINTS)
    return [a[::step] for a in arrays]


def plot_trajectory(traj, path, title=None):
    """x1(t) on top, the (w1, w2) phase portrait below."""
    w1, w2 = traj.w()
    t, x1, w1, w2 = _thin(traj.times, traj.x1, w1, w2)
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.4, 6.4))
    ax1.plot(t, x1, lw=0.8)
    ax1.set_xlabel("t [s]")
    ax1.set_ylabel("x1")
    ax1.grid(alpha=0.3)
    if title:
        ax1.set_title(title)
    ax2.plot(w1, w2, lw=0.6)
    ax2.set_xlabel("w1")
    ax2.set_ylabel("w2")
    ax2.grid(alpha=0.3)
    return _save(fig, path)


def plot_sweep(rows, vary, path, fit=None):
    """Simulated w1_max with the two amplitude bounds against the swept parameter."""
    x = np.array([r.param for r in rows])
    sim = np.array([r.report.w1_max if r.converged else np.nan for r in rows])
    p3 = np.array([r.bounds.amplitude_bound for r in rows])
    W1 = np.array([np.nan if r.bounds.W1 is None else r.bounds.W1 for r in rows])
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(x, sim, "o-", label="simulated w1_max")
    ax.plot(x, p3, "s--", label="(k2+L)T^2/8")
    if np.isfinite(W1).any():
        ax.plot(x, W1, "^:", label="W1")
    if vary == "T":
        ax.set_xscale("log")
        ax.set_yscale("log")
    if fit is not None:
        ax.set_title(f"{fit.kind} fit: slope {fit.slope:.4g}, R^2 {fit.r2:.4f}")
    ax.set_xlabel(vary)
    ax.set_ylabel("x1 amplitude")
    ax.grid(alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_table1(rows, path):
    """Simulated |x1| against W1 per table row, log scale."""
    labels = [f"T={r.T:g}\nL={r.L:g}" for r in rows]
    idx = np.arange(len(rows))

    def col(name):
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name)
                         for r in rows], dtype=float)

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    width = 0.2
    series = [("sim_abs_x1", "simulated |x1| (tuned)"), ("W1", "W1 (tuned)"),
              ("published_sim_abs_x1", "simulated |x1| (published gains)"),
              ("published_abs_x1", "published |x1|")]
    for j, (name, label) in enumerate(series):
        ax.bar(idx + (j - 1.5) * width, col(name), width, label=label)
    ax.set_yscale("log")
    ax.set_xticks(idx)
    ax.set_xticklabels(labels)
    ax.set_ylabel("x1 amplitude")
    ax.grid(alpha=0.3, axis="y")
    ax.legend(fontsize=8)
    return _save(fig, path)
