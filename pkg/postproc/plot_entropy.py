#!/usr/bin/env python3
"""Relative-entropy decay figure from one or more solver CSVs.

Usage: plot_entropy.py <csv...> --labels <...> -o out.png

Semilog plot of the discrete relative entropy against time, one curve
per file. Entropy values are clipped at 1e-300 so a converged plateau
cannot produce log-of-zero.
"""

from __future__ import annotations

import argparse
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from series_csv import (EXTRA_COLORS, STYLE, SeriesError,  # noqa: E402
                        load_series)

ENTROPY_FLOOR = 1e-300


def _style_for(label: str, index: int) -> dict:
    key = label.strip().lower()
    if key in STYLE:
        return STYLE[key]
    return {"color": EXTRA_COLORS[index % len(EXTRA_COLORS)], "marker": "o"}


def make_figure(series_list, labels):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for i, (sf, label) in enumerate(zip(series_list, labels)):
        entropy = np.maximum(sf["entropy"], ENTROPY_FLOOR)
        style = _style_for(label, i)
        ax.semilogy(sf["time"], entropy, marker=style["marker"],
                    color=style["color"], markersize=3, linewidth=1.0,
                    label=label)
    ax.set_xlabel("time")
    ax.set_ylabel("discrete relative entropy")
    ax.legend()
    fig.tight_layout()
    return fig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("csv", nargs="+", help="series files to plot")
    parser.add_argument("--labels", nargs="+",
                        help="one legend label per file (default: file names)")
    parser.add_argument("-o", "--output", required=True)
    args = parser.parse_args(argv)
    labels = args.labels if args.labels else list(args.csv)
    if len(labels) != len(args.csv):
        print(f"expected {len(args.csv)} labels, got {len(labels)}",
              file=sys.stderr)
        return 2
    try:
        series_list = [load_series(path) for path in args.csv]
    except SeriesError as exc:
        print(exc, file=sys.stderr)
        return 1
    fig = make_figure(series_list, labels)
    fig.savefig(args.output, dpi=160)
    plt.close(fig)
    return 0


if __name__ == "__main__":
    sys.exit(main())
