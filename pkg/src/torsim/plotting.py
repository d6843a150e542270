"""CDF plots with confidence bands, emitted as image + CSV pairs."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

PLOT_COLUMNS = ("q", "mu", "ci_lo", "ci_hi")


def read_estimate_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ValueError(f"{path}: empty estimate file")
    return rows


def plot_cdf_estimates(
    inputs: list[tuple[str, list[dict]]],
    out_image,
    out_csv,
    tail_log: bool = False,
    xlabel: str = "value",
) -> None:
    """Plot mu(q) per labeled estimate with shaded [ci_lo, ci_hi] bands.

    tail_log flips the cumulative axis to 1-q on a log scale to expose
    the distribution tail. The plotted points are always co-emitted as
    CSV, one block per label.
    """
    fig, ax = plt.subplots(figsize=(6, 4))
    csv_rows = []
    for label, rows in inputs:
        q = np.array([float(r["q"]) for r in rows])
        mu = np.array([float(r["mu"]) for r in rows])
        lo = np.array([float(r["ci_lo"]) for r in rows])
        hi = np.array([float(r["ci_hi"]) for r in rows])
        y = 1.0 - q if tail_log else q
        ax.plot(mu, y, label=label)
        ax.fill_betweenx(y, lo, hi, alpha=0.3)
        for i in range(len(q)):
            csv_rows.append({"label": label, "q": q[i], "mu": mu[i], "ci_lo": lo[i], "ci_hi": hi[i]})
    if tail_log:
        ax.set_yscale("log")
        ax.set_ylabel("1 - q (tail-log)")
    else:
        ax.set_ylabel("q")
    ax.set_xlabel(xlabel)
    if len(inputs) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(out_image, dpi=150, metadata={"Title": f"tail_log={tail_log}"})
    plt.close(fig)

    with open(out_csv, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=("label",) + PLOT_COLUMNS)
        writer.writeheader()
        writer.writerows(csv_rows)


def plot_ci_width(results: list[tuple[int, float, float]], out_image, out_csv) -> None:
    """Median CI width versus network count, one line per quantile."""
    by_q: dict[float, list[tuple[int, float]]] = {}
    for n, q, width in results:
        by_q.setdefault(q, []).append((n, width))
    fig, ax = plt.subplots(figsize=(6, 4))
    for q, pairs in sorted(by_q.items()):
        pairs.sort()
        ax.plot([n for n, _ in pairs], [w for _, w in pairs], label=f"P{int(q * 100)}")
    ax.set_yscale("log")
    ax.set_xlabel("sampled networks n")
    ax.set_ylabel("median CI width")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_image, dpi=150)
    plt.close(fig)

    with open(out_csv, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("n", "q", "width"))
        writer.writerows(results)
