"""Static SVG figures from experiment rows."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from ..exponents import ExponentParams, mu_q

KINDS = ("scaling", "tradeoff", "coarea")


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed ids and no date make the SVG reproducible
    matplotlib.rcParams["svg.hashsalt"] = "sardlab"
    return plt


def _scaling(ax, records):
    rows = [r for r in records if r.experiment == "cube_scaling"]
    if not rows:
        raise ValueError("no cube_scaling rows")
    for key in sorted({(r.map, r.q) for r in rows}, key=str):
        sel = [r for r in rows if (r.map, r.q) == key and r.measured > 0]
        if not sel:
            continue
        x = np.array([-r.depth * math.log(2) for r in sel])  # log of the side relative to the domain
        y = np.log([r.measured for r in sel])
        (line,) = ax.plot(x, y, "o")
        label = f"{key[0]} q={key[1]:g}"
        if len(sel) >= 2:
            slope, icpt = np.polyfit(x, y, 1)
            ax.plot(x, slope * x + icpt, "-", color=line.get_color())
            label += f": slope {slope:.2f} (predicted {sel[0].predicted:.2f})"
        line.set_label(label)
    ax.set_xlabel("log side (relative to domain)")
    ax.set_ylabel("log Phi(Z ∩ Q)")
    ax.legend(fontsize=7)


def _tradeoff(ax, records):
    rows = [r for r in records if r.experiment == "exponent_sweep"]
    if not rows:
        raise ValueError("no exponent_sweep rows")
    for name in sorted({r.map for r in rows}):
        sel = [r for r in rows if r.map == name]
        qs = sorted({r.q for r in sel})
        decay = []
        for q in qs:
            pts = [(r.depth, r.measured) for r in sel if r.q == q and r.measured > 0]
            if len(pts) >= 2:
                d, v = np.array(pts).T
                # content ~ h^e with h = 2^-depth
                decay.append((q, -np.polyfit(d, np.log2(v), 1)[0]))
        if decay:
            qd, ed = np.array(decay).T
            (pts_line,) = ax.plot(qd, ed, "o", label=f"{name}: measured decay exponent")
        r0 = sel[0]
        qq = np.linspace(max(r0.m - 1, min(qs)), max(qs), 50)
        line = [mu_q(ExponentParams(n=r0.n, m=r0.m, d=r0.d, k=r0.k, alpha=r0.alpha, q=float(q))) for q in qq]
        ax.plot(qq, line, "-", color=pts_line.get_color() if decay else None, label=f"{name}: mu_q, slope -{r0.k + r0.alpha:g}")
    ax.axhline(0.0, color="0.6", lw=0.5)
    ax.set_xlabel("image exponent q")
    ax.set_ylabel("preimage exponent")
    ax.legend(fontsize=7)


def _coarea(ax, records):
    rows = [r for r in records if r.experiment == "coarea"]
    if not rows:
        raise ValueError("no coarea rows")
    for name in sorted({r.map for r in rows}):
        sel = sorted((r for r in rows if r.map == name), key=lambda r: r.resolution)
        res = [r.resolution for r in sel]
        ax.loglog(res, [max(r.residual, 1e-16) for r in sel], "o-", label=name)
    ax.set_xlabel("resolution (cells per axis)")
    ax.set_ylabel("|lhs - rhs| / lhs")
    ax.legend(fontsize=7)


def emit_plot(records, kind: str, path) -> Path:
    """Write one SVG for the rows; raises ValueError on an empty record set."""
    if not records:
        raise ValueError("no records to plot")
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4.5))
    try:
        {"scaling": _scaling, "tradeoff": _tradeoff, "coarea": _coarea}[kind](ax, records)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    return path
