"""Figures drawn from a metrics table (log-log MSE, coverage, CI length)."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

FIGURES = ("mse_vs_n.png", "coverage_vs_n.png", "ci_length_vs_n.png")


def _series(rows, attr):
    by = {}
    for r in rows:
        by.setdefault(r.method, []).append((r.n, getattr(r, attr)))
    return {m: sorted(v) for m, v in by.items()}


def render_figures(rows, out_dir, alpha_level: float = 0.05) -> list:
    """Write the three standard figures into ``out_dir`` and return their paths."""
    paths = []
    specs = (
        ("mse", "MSE", True, FIGURES[0]),
        ("coverage", "coverage", False, FIGURES[1]),
        ("mean_ci_length", "mean CI length", True, FIGURES[2]),
    )
    for attr, label, logy, name in specs:
        fig, ax = plt.subplots(figsize=(5.5, 4))
        for method, pts in _series(rows, attr).items():
            xs = [p[0] for p in pts]
            ys = [p[1] for p in pts]
            if logy and all(y > 0 for y in ys):
                ax.loglog(xs, ys, marker="o", label=method)
            else:
                ax.semilogx(xs, ys, marker="o", label=method)
        if attr == "coverage":
            ax.axhline(1 - alpha_level, color="grey", ls="--", lw=1)
            ax.set_ylim(-0.02, 1.02)
        ax.set_xlabel("n")
        ax.set_ylabel(label)
        ax.legend(fontsize="small")
        fig.tight_layout()
        path = os.path.join(out_dir, name)
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths
