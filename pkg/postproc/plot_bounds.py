#!/usr/bin/env python3
"""Minimal-density / time-step / Newton-cost figure from two solver CSVs.

Usage: plot_bounds.py <ddfv.csv> <hfv.csv> -o out.png

Top panel: log-log evolution of the minimal densities of both schemes.
Bottom panel: time step (log-log, left axis) and Newton iterations per
step (linear, right axis). Rows at time <= 0 cannot appear on the
logarithmic time axis and are skipped.
"""

from __future__ import annotations

import argparse
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from series_csv import STYLE, SeriesError, SeriesFile, load_series  # noqa: E402


def make_figure(ddfv: SeriesFile, hfv: SeriesFile):
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(8, 7))
    series = {"ddfv": ddfv, "hfv": hfv}

    for scheme, sf in series.items():
        pos = sf["time"] > 0.0
        style = STYLE[scheme]
        top.loglog(sf["time"][pos], sf["min_N"][pos], linestyle="none",
                   marker=style["marker"], color=style["color"],
                   label=f"min N ({scheme.upper()})")
        top.loglog(sf["time"][pos], sf["min_P"][pos], linestyle="none",
                   marker=style["marker"], markerfacecolor="none",
                   color=style["color"], label=f"min P ({scheme.upper()})")
    top.set_xlabel("time")
    top.set_ylabel("minimal values")
    top.legend(fontsize=8, ncol=2)

    right = bottom.twinx()
    for scheme, sf in series.items():
        pos = sf["time"] > 0.0
        style = STYLE[scheme]
        bottom.loglog(sf["time"][pos], sf["dt"][pos], marker=style["marker"],
                      color=style["color"], markersize=4, linewidth=0.8,
                      label=f"time step ({scheme.upper()})")
        right.semilogx(sf["time"][pos], sf["newton_iters"][pos],
                       linestyle="none", marker=style["marker"],
                       markerfacecolor="none", color=style["color"],
                       label=f"iterations ({scheme.upper()})")
    bottom.set_xlabel("time")
    bottom.set_ylabel("time step")
    right.set_ylabel("Newton iterations per step")
    right.set_ylim(bottom=0)
    handles1, labels1 = bottom.get_legend_handles_labels()
    handles2, labels2 = right.get_legend_handles_labels()
    bottom.legend(handles1 + handles2, labels1 + labels2, fontsize=8, ncol=2)
    fig.tight_layout()
    return fig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("ddfv_csv")
    parser.add_argument("hfv_csv")
    parser.add_argument("-o", "--output", required=True)
    args = parser.parse_args(argv)
    try:
        ddfv = load_series(args.ddfv_csv)
        hfv = load_series(args.hfv_csv)
    except SeriesError as exc:
        print(exc, file=sys.stderr)
        return 1
    fig = make_figure(ddfv, hfv)
    fig.savefig(args.output, dpi=160)
    plt.close(fig)
    return 0


if __name__ == "__main__":
    sys.exit(main())
