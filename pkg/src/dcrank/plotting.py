"""Matplotlib figures written next to the report tables."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

PALETTE = ["#0C5DA5", "#00A08A", "#F2AD00", "#B40F20", "#5BBCD6"]

STYLE = {
    "font.size": 10,
    "axes.titlesize": 11,
    "axes.labelsize": 10,
    "legend.fontsize": 9,
    "axes.linewidth": 0.8,
    "figure.dpi": 110,
    "savefig.dpi": 150,
    # Fixed metadata so repeated renders are byte-stable.
    "svg.hashsalt": "dcrank",
}


def _finish(ax) -> None:
    for side in ("top", "right"):
        ax.spines[side].set_visible(False)
    ax.grid(alpha=0.25, linewidth=0.5, linestyle="--")


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_nd_sweep(bench: dict, path: str | Path) -> Path:
    rows = bench["nd_sweep"]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        nds = [r["nd"] for r in rows]
        ax.plot(nds, [r["cached_speedup"] for r in rows], "o-", color=PALETTE[0], label="cached vs concat")
        ax.plot(nds, [r["fresh_speedup"] for r in rows], "s--", color=PALETTE[1], label="fresh vs concat")
        ax.axhline(1.0, color="0.5", linewidth=0.7)
        ax.set_xlabel("candidate documents per question")
        ax.set_ylabel("counter speedup (x)")
        ax.set_title("Attention-pair speedup vs pool size")
        ax.legend(frameon=False)
        _finish(ax)
        return _save(fig, Path(path))


def plot_k_sweep(bench: dict, path: str | Path) -> Path:
    rows = bench["k_sweep"]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        ks = [r["k"] for r in rows]
        ax.plot(ks, [r["counter_speedup"] for r in rows], "o-", color=PALETTE[0])
        ax.set_xticks(ks)
        ax.set_xlabel("interaction layers K")
        ax.set_ylabel("counter speedup vs concat (x)")
        ax.set_title("Capacity / cost trade-off")
        _finish(ax)
        return _save(fig, Path(path))


def plot_p_at_n(reports: list[dict], path: str | Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for i, rep in enumerate(reports):
            ns = sorted(int(n) for n in rep["P"])
            ax.plot(ns, [rep["P"][str(n)] for n in ns], "o-", color=PALETTE[i % len(PALETTE)],
                    label=rep.get("label") or f"run {i}")
        ax.set_xlabel("N")
        ax.set_ylabel("P@N")
        ax.set_ylim(0, 1.02)
        ax.set_title("Answer recall in the top N")
        ax.legend(frameon=False)
        _finish(ax)
        return _save(fig, Path(path))
