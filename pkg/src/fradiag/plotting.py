"""SVG figures with CSV twins: Bode curves, confusion matrices and CC-ED maps.

Every figure is written twice: ``<stem>.svg`` for reading and ``<stem>.csv``
holding exactly the plotted numbers. Output bytes depend only on the inputs.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from .data import FRASweep
from .errors import DomainError
from .metrics import ConfusionMatrix, CurveStats

# fixed salt and no timestamp keep the SVG bytes reproducible
_RC = {
    "svg.hashsalt": "fradiag",
    "svg.fonttype": "none",
    "path.simplify": False,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
}
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _paths(stem: str | Path) -> tuple[Path, Path]:
    stem = Path(stem)
    if stem.suffix.lower() in (".svg", ".csv"):
        stem = stem.with_suffix("")
    stem.parent.mkdir(parents=True, exist_ok=True)
    return stem.with_suffix(".svg"), stem.with_suffix(".csv")


def _save(fig: Figure, svg: Path) -> None:
    fig.savefig(svg, format="svg", metadata={"Date": None})


def bode_plot(sweeps: Sequence[FRASweep], stem: str | Path, names: Sequence[str] | None = None) -> tuple[Path, Path]:
    """Magnitude in dB against log frequency, one curve per sweep.

    Curve ``i`` carries the SVG id ``bode-<i>``.
    """
    if len(sweeps) == 0:
        raise DomainError("nothing to plot: no sweeps given")
    names = list(names) if names is not None else [f"sweep {i}" for i in range(len(sweeps))]
    if len(names) != len(sweeps):
        raise DomainError("need one name per sweep")
    grid = sweeps[0].grid
    if any(s.grid != grid for s in sweeps):
        raise DomainError("sweeps lie on different grids")
    svg, csv = _paths(stem)
    f = grid.points
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(7, 4))
        ax = fig.add_subplot()
        for i, (s, name) in enumerate(zip(sweeps, names)):
            (line,) = ax.plot(f, s.values, lw=0.8, color=_PALETTE[i % len(_PALETTE)], label=name)
            line.set_gid(f"bode-{i}")
        ax.set_xscale("log")
        ax.set_xlabel("frequency (Hz)")
        ax.set_ylabel("magnitude (dB)")
        if len(sweeps) <= 8:
            ax.legend(loc="lower left", fontsize=7)
        fig.tight_layout()
        _save(fig, svg)
    header = "f_hz," + ",".join(n.replace(",", ";") for n in names)
    rows = [f"{fv:.6g}," + ",".join(f"{s.values[j]:.6g}" for s in sweeps) for j, fv in enumerate(f)]
    csv.write_text("\n".join([header, *rows]) + "\n")
    return svg, csv


def confusion_plot(cm: ConfusionMatrix, classes: Sequence[str], stem: str | Path) -> tuple[Path, Path]:
    """Heat map with a count in every cell; cell (r, c) has SVG id ``cell-r-c``."""
    classes = list(classes)
    if cm.C == 0 or cm.total == 0:
        raise DomainError("nothing to plot: empty confusion matrix")
    if len(classes) != cm.C:
        raise DomainError(f"{len(classes)} class names for a {cm.C}-class matrix")
    svg, csv = _paths(stem)
    counts = cm.counts
    side = 1.2 + 0.45 * cm.C
    with matplotlib.rc_context({**_RC, "axes.grid": False}):
        fig = Figure(figsize=(side + 1.0, side))
        ax = fig.add_subplot()
        ax.imshow(counts, cmap="Blues", vmin=0, vmax=max(int(counts.max()), 1), interpolation="nearest")
        threshold = counts.max() / 2
        for r in range(cm.C):
            for c in range(cm.C):
                color = "white" if counts[r, c] > threshold else "black"
                t = ax.text(c, r, str(int(counts[r, c])), ha="center", va="center", fontsize=7, color=color)
                t.set_gid(f"cell-{r}-{c}")
        ax.set_xticks(range(cm.C), classes, rotation=90)
        ax.set_yticks(range(cm.C), classes)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        fig.tight_layout()
        _save(fig, svg)
    csv.write_text(cm.to_csv(classes))
    return svg, csv


def cced_plot(stats: CurveStats, stem: str | Path, key_name: str = "degree") -> tuple[Path, Path]:
    """Scatter of (CC, ED) against the reference curve, coloured by group key."""
    if len(stats) == 0:
        raise DomainError("nothing to plot: no CC-ED points")
    svg, csv = _paths(stem)
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(5, 4))
        ax = fig.add_subplot()
        for i, k in enumerate(np.unique(stats.keys)):
            sel = stats.keys == k
            pts = ax.scatter(stats.cc[sel], stats.ed[sel], s=10, color=_PALETTE[i % len(_PALETTE)], label=f"{key_name} {k}")
            pts.set_gid(f"cced-{k}")
        ax.set_xlabel("correlation coefficient")
        ax.set_ylabel("Euclidean distance (dB)")
        ax.legend(fontsize=7)
        fig.tight_layout()
        _save(fig, svg)
    rows = [f"{key_name},cc,ed"] + [f"{int(k)},{c:.12g},{e:.12g}" for k, c, e in zip(stats.keys, stats.cc, stats.ed)]
    csv.write_text("\n".join(rows) + "\n")
    return svg, csv
