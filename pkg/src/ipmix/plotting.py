"""Figures for the CLI reports, rendered off-screen with reproducible bytes."""
from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .outputs import atomic_write_bytes  # noqa: E402

STYLE = {
    "svg.hashsalt": "ipmix",
    "svg.fonttype": "path",
    "figure.figsize": (5.5, 3.8),
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
}


def new_axes():
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
    return fig, ax


def save(fig, path) -> Path:
    """Save as SVG or PNG (by suffix) without timestamps, so equal inputs give equal bytes."""
    path = Path(path)
    fmt = path.suffix.lstrip(".").lower() or "svg"
    meta = {"Date": None} if fmt == "svg" else {"Software": None}
    buf = io.BytesIO()
    with plt.rc_context(STYLE):
        fig.tight_layout()
        fig.savefig(buf, format=fmt, metadata=meta, dpi=120)
    plt.close(fig)
    return atomic_write_bytes(path, buf.getvalue())


def tv_curve(times, d, path, eps=(), title="", se=None, log_x=True):
    fig, ax = new_axes()
    times = np.asarray(times, dtype=float)
    ax.plot(times, d, color="C0", label="d(t)")
    if se is not None and np.all(np.isfinite(se)):
        ax.fill_between(times, np.asarray(d) - 2 * np.asarray(se), np.asarray(d) + 2 * np.asarray(se),
                        color="C0", alpha=0.2, lw=0)
    for e in eps:
        ax.axhline(e, color="0.5", ls=":", lw=0.8)
    if log_x and times.min() > 0:
        ax.set_xscale("log")
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel("t")
    ax.set_ylabel("TV distance")
    ax.set_title(title)
    return save(fig, path)


def moments(times, mc, se, formula, path, ylabel="E[L]", title=""):
    fig, ax = new_axes()
    ax.errorbar(times, mc, yerr=2 * np.asarray(se), fmt="o", ms=3, color="C1", label="Monte Carlo")
    grid = np.geomspace(max(min(times), 1), max(times), 200)
    ax.plot(grid, [formula(t) for t in grid], color="C0", label="closed form")
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(frameon=False)
    return save(fig, path)


def tail(times, curves: dict, path, title="", bound=None):
    fig, ax = new_axes()
    for i, (label, y) in enumerate(curves.items()):
        y = np.asarray(y, dtype=float)
        ok = y > 0
        ax.plot(np.asarray(times)[ok], y[ok], color=f"C{i}", label=label)
    if bound is not None:
        ok = bound > 0
        ax.plot(np.asarray(times)[ok], bound[ok], color="0.4", ls="--", label="bound")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_title(title)
    ax.legend(frameon=False)
    return save(fig, path)


def histograms(samples: dict, support, pmf, path, title="", xlabel="L"):
    fig, ax = new_axes()
    ax.bar(support, pmf, width=0.9, color="0.8", label="stationary")
    for i, (label, x) in enumerate(samples.items()):
        x = np.asarray(x)
        lo, hi = int(x.min()), int(x.max())
        freq = np.bincount(x - lo, minlength=hi - lo + 1) / len(x)
        ax.step(np.arange(lo, hi + 1), freq, where="mid", color=f"C{i}", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("probability")
    ax.set_title(title)
    ax.legend(frameon=False)
    return save(fig, path)


def bars(labels, values, path, title="", ylabel=""):
    fig, ax = new_axes()
    x = np.arange(len(labels))
    ax.bar(x, values, color="C0")
    ax.set_xticks(x)
    ax.set_xticklabels([str(l) for l in labels], rotation=45 if len(labels) > 8 else 0, fontsize=7)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    return save(fig, path)
