"""Optional figure rendering for sweep and theory CSV rows."""

from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _mean_by(rows, x, y):
    acc = defaultdict(list)
    for r in rows:
        acc[float(r[x])].append(float(r[y]))
    xs = sorted(acc)
    return xs, [sum(acc[k]) / len(acc[k]) for k in xs]


def plot_sweep(rows, path, threshold: float | None = None):
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.4))
    for ax, (col, label) in zip(axes, [("avg_rel_error", "average relative error"),
                                       ("recovery_rate", "recovery rate"),
                                       ("iterations", "recovery iterations")]):
        xs, ys = _mean_by(rows, "fraction", col)
        ax.plot([100 * x for x in xs], ys, marker="o", ms=3)
        if threshold:
            ax.axvline(100 * threshold, ls=":", color="k")
        ax.set_xlabel("compressed size (% of original)")
        ax.set_ylabel(label)
    axes[0].set_yscale("symlog", linthresh=1e-6)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_theory(rows, path):
    fig, ax = plt.subplots(figsize=(5, 3.4))
    by_c = defaultdict(list)
    for r in rows:
        by_c[int(r["C"])].append(r)
    for C, rs in sorted(by_c.items()):
        rs.sort(key=lambda r: float(r["lambda"]))
        lam = [float(r["lambda"]) for r in rs]
        ax.plot(lam, [float(r["ratio"]) for r in rs], marker="o", label=f"C={C}")
    ax.axhline(1.6, ls=":", color="k")
    ax.set_xscale("log")
    ax.set_xlabel("zero-to-nonzero ratio")
    ax.set_ylabel("(S1 + S2) / Smin")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
