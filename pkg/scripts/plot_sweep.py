"""
Plots a sweep summary: mean metric per risk level with its bootstrap interval, plus the
predicted exposure next to the observed mislabeled fraction.

Usage:
    python -m scripts.plot_sweep results/synthetic_seq/summary.csv [--out figure.png]
"""

import argparse
import logging
import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from utils.csv_writer import read_csv  # noqa: E402

PANELS = ("recall", "ap", "auc")


def load_summary(path: Path) -> dict[str, list[tuple[int, float, float, float]]]:
    series = defaultdict(list)
    for row in read_csv(path):
        lo = float(row["ci_lo"]) if row["ci_lo"] else math.nan
        hi = float(row["ci_hi"]) if row["ci_hi"] else math.nan
        series[row["metric"]].append((int(row["risk_level"]), float(row["mean"]), lo, hi))
    return series


def plot(series: dict, out: Path):
    golden_ratio = (math.sqrt(5) - 1.0) / 2.0
    width = 4.0 * (len(PANELS) + 1)
    fig, axes = plt.subplots(1, len(PANELS) + 1, figsize=(width, width * golden_ratio / 2))

    for ax, metric in zip(axes, PANELS):
        points = sorted(series.get(metric, []))
        if not points:
            continue
        levels, means, los, his = zip(*points)
        ax.plot(levels, means, marker="o", color="k")
        ax.fill_between(levels, los, his, color="0.8")
        ax.set_xlabel("risk level N")
        ax.set_title(metric)

    ax = axes[-1]
    for metric, style in (("mislabeled_fraction", "o-"), ("exposure_estimate", "s--")):
        points = sorted(series.get(metric, []))
        if points:
            ax.plot([p[0] for p in points], [p[1] for p in points], style, label=metric)
    ax.set_xlabel("risk level N")
    ax.set_title("mislabeled positives")
    ax.legend(frameon=False)

    fig.tight_layout()
    fig.savefig(out, dpi=150)
    logging.info(f"Wrote {out}")


def main():
    logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - %(message)s")
    parser = argparse.ArgumentParser(description="Plot a sweep summary.csv.")
    parser.add_argument("summary", type=Path)
    parser.add_argument("--out", type=Path, default=None)
    args = parser.parse_args()
    plot(load_summary(args.summary), args.out or args.summary.with_suffix(".png"))


if __name__ == "__main__":
    main()
