"""Figures written next to the CLI's CSV/JSON output.

Uses the object API of matplotlib (no pyplot state), so figures can be
drawn from worker threads and never open a window.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

RC = {
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
}
# PNG metadata otherwise carries the matplotlib version
_META = {"Software": None}


def _figure(width=6.0, height=3.6):
    import matplotlib as mpl

    with mpl.rc_context(RC):
        fig = Figure(figsize=(width, height), layout="constrained")
        ax = fig.add_subplot()
    return fig, ax


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=120, metadata=_META)
    return path


def _eng(t: np.ndarray):
    """Pick a time unit so tick labels stay short."""
    span = float(np.max(np.abs(t))) if len(t) else 0.0
    for scale, unit in ((1e-12, "ps"), (1e-9, "ns"), (1e-6, "us"), (1e-3, "ms")):
        if span < 1000 * scale:
            return t / scale, unit
    return t, "s"


def waveforms(path, w, signals, title=""):
    """Stacked voltage traces of ``signals`` (names like ``v(A)``)."""
    fig, ax = _figure(6.4, 3.8)
    t, unit = _eng(w.time)
    for name in signals:
        ax.plot(t, w[name], lw=1.0, label=name)
    ax.set_xlabel(f"time ({unit})")
    ax.set_ylabel("voltage (V)")
    ax.set_title(title)
    fig.legend(ncols=min(len(signals), 6), loc="outside lower center")
    return _save(fig, path)


def curves(path, x, ys: dict, xlabel, ylabel, title=""):
    fig, ax = _figure()
    for label, y in ys.items():
        ax.plot(x, y, lw=1.2, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(ys) > 1:
        ax.legend()
    return _save(fig, path)


def butterfly(path, res, title=""):
    """Butterfly curve with the largest square drawn in each lobe."""
    fig, ax = _figure(4.2, 4.2)
    ax.plot(res.curve_fwd.x, res.curve_fwd.y, lw=1.3, label="inverter 1")
    ax.plot(res.curve_mir.x, res.curve_mir.y, lw=1.3, label="inverter 2 (mirrored)")
    for lobe, sq in res.anchors.items():
        xs, ys = zip(*(sq.corners + sq.corners[:1]))
        ax.plot(xs, ys, "k-", lw=0.9)
        ax.annotate(f"{sq.side * 1e3:.0f} mV", (sq.x + sq.side / 2, sq.y + sq.side / 2),
                    ha="center", va="center", fontsize=8)
    ax.set_xlabel("V(B) (V)")
    ax.set_ylabel("V(A) (V)")
    ax.set_aspect("equal")
    ax.set_title(title or f"SNM = {res.snm * 1e3:.1f} mV")
    ax.legend(loc="upper right")
    return _save(fig, path)


def comparison(path, labels, values, ylabel, title=""):
    """Bar chart of one metric across arms (conventional, adiabatic, ...)."""
    fig, ax = _figure(4.0, 3.4)
    bars = ax.bar(labels, values, color=["#4c72b0", "#dd8452", "#55a868", "#c44e52"][:len(values)])
    ax.bar_label(bars, fmt="%.3g", fontsize=8)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(axis="x", visible=False)
    return _save(fig, path)


def sweep(path, x, ys: dict, xlabel, ylabel, title="", loglog=False):
    fig, ax = _figure()
    for label, y in ys.items():
        ax.plot(x, y, "o-", ms=4, lw=1.1, label=label)
    if loglog:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(ys) > 1:
        ax.legend()
    return _save(fig, path)
