#!/usr/bin/env python3
"""Plot learning curves written by `mtseg learning-curve` (curve.tsv)."""

import argparse
import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def load(path):
    series = defaultdict(list)
    with open(path, newline="") as f:
        for row in csv.DictReader(f, delimiter="\t"):
            series[(row["language"], row["mode"])].append(
                (float(row["fraction"]), float(row["ACC"]), float(row["F1"]))
            )
    return {k: sorted(v) for k, v in series.items()}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("curve", help="curve.tsv")
    ap.add_argument("-o", "--out", default="curve.png")
    args = ap.parse_args()

    series = load(args.curve)
    languages = sorted({lang for lang, _ in series})
    fig, axes = plt.subplots(2, len(languages), figsize=(4 * len(languages), 6), squeeze=False)
    for col, lang in enumerate(languages):
        for row, (metric, idx) in enumerate([("F1", 2), ("ACC", 1)]):
            ax = axes[row][col]
            for (l, mode), pts in sorted(series.items()):
                if l != lang:
                    continue
                ax.plot([p[0] * 100 for p in pts], [p[idx] for p in pts], marker="o", label=mode)
            ax.set_title(f"{lang} {metric}")
            ax.set_xlabel("training data (%)")
            ax.grid(alpha=0.3)
            ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)


if __name__ == "__main__":
    main()
