#!/usr/bin/env python3
"""Overlay relative-error histories from delimited run outputs.

Each input is a CSV with a ``time`` column and one or more error columns,
as written next to a run manifest.  One curve is drawn per input file, all
sharing the same time axis.
"""

import argparse
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def read_series(path, column):
    """Return (times, values) for one error file."""
    times = []
    values = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        fields = reader.fieldnames or []
        for name in ("time", column):
            if name not in fields:
                raise ValueError(
                    f"{path}: no {name!r} column (found {fields})"
                )
        for row in reader:
            times.append(float(row["time"]))
            values.append(float(row[column]))
    return times, values


def build_figure(inputs, labels=None, column="l2_percent"):
    """One axes with one error curve per input file."""
    if labels is None:
        labels = [Path(path).stem for path in inputs]
    if len(labels) != len(inputs):
        raise ValueError(
            f"got {len(labels)} labels for {len(inputs)} inputs"
        )
    series = [read_series(path, column) for path in inputs]
    base_times = series[0][0]
    for path, (times, _) in zip(inputs[1:], series[1:]):
        if times != base_times:
            raise ValueError(
                f"time axes differ between {inputs[0]} and {path}"
            )

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for (times, vals), label in zip(series, labels):
        ax.plot(times, vals, marker="o", markersize=3, linewidth=1.2,
                label=label)
    ax.set_xlabel("time")
    ax.set_ylabel(column.replace("_", " "))
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return fig, ax


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("inputs", nargs="+", help="error CSV files")
    parser.add_argument("output", help="PNG file to write")
    parser.add_argument(
        "--labels", nargs="+", default=None,
        help="legend label per input (default: file stems)",
    )
    parser.add_argument(
        "--column", default="l2_percent",
        help="error column to plot (default: l2_percent)",
    )
    args = parser.parse_args(argv)
    if args.labels is not None and len(args.labels) != len(args.inputs):
        parser.error("--labels must match the number of inputs")

    try:
        fig, _ = build_figure(
            args.inputs, labels=args.labels, column=args.column
        )
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    fig.savefig(args.output, dpi=150)
    plt.close(fig)
    print(args.output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
