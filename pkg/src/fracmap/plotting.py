"""Static figures for CLI reports.

Figures are drawn with the object-oriented API on an Agg canvas (no pyplot
state) and saved without the software/date metadata, so identical data
yields identical PNG bytes.
"""
from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

STYLE = {
    "figsize": (5.0, 3.4),
    "dpi": 110,
}


def _new(ncols: int = 1):
    fig = Figure(figsize=(STYLE["figsize"][0] * ncols, STYLE["figsize"][1]), dpi=STYLE["dpi"])
    FigureCanvasAgg(fig)
    axes = [fig.add_subplot(1, ncols, i + 1) for i in range(ncols)]
    for ax in axes:
        ax.grid(True, lw=0.4, alpha=0.5)
        ax.tick_params(labelsize=8)
    return fig, axes


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})


def _positive(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, x, np.nan)


def descent_figure(path, energies, residuals, title: str = "") -> None:
    """Energy and EL residual against iteration, residual on a log axis."""
    fig, (a, b) = _new(2)
    a.plot(np.arange(len(energies)), energies, lw=1.0, color="C0")
    a.set_xlabel("iteration")
    a.set_ylabel("energy")
    b.semilogy(np.arange(len(residuals)), _positive(residuals), lw=1.0, color="C3")
    b.set_xlabel("iteration")
    b.set_ylabel("EL residual")
    if title:
        fig.suptitle(title, fontsize=9)
    _save(fig, path)


def series_figure(path, x, series: dict, xlabel: str, ylabel: str, logy: bool = False,
                  title: str = "") -> None:
    """Several named series against a common abscissa, with markers."""
    fig, (ax,) = _new()
    for i, (name, y) in enumerate(series.items()):
        y = _positive(y) if logy else np.asarray(y, dtype=float)
        ax.plot(x, y, marker="o", ms=3.5, lw=1.0, color=f"C{i}", label=name)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(series) > 1:
        ax.legend(fontsize=7, frameon=False)
    if title:
        ax.set_title(title, fontsize=9)
    _save(fig, path)


def field_figure(path, angles, values, title: str = "") -> None:
    """Components of an S^1 field against the angle of its node."""
    fig, (ax,) = _new()
    order = np.argsort(angles)
    for k in range(values.shape[1]):
        ax.plot(np.asarray(angles)[order], values[order, k], lw=1.0, color=f"C{k}",
                label=f"u{k + 1}")
    ax.set_xlabel("angle")
    ax.set_ylabel("value")
    ax.legend(fontsize=7, frameon=False)
    if title:
        ax.set_title(title, fontsize=9)
    _save(fig, path)
