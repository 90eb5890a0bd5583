#!/usr/bin/env python3
"""Scatter a generated point cloud, colored by implicit/explicit class.

Reads the ``index,x,y,radius,class`` CSV written next to a run manifest.
Nodes classified I (implicit) and E (explicit) get distinct colors; with
--circles the support disk of every node is outlined as well.
"""

import argparse
import csv
import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Circle  # noqa: E402

COLORS = {"I": "tab:orange", "E": "tab:blue"}


def read_cloud(path):
    """Return a list of (x, y, radius, class) tuples."""
    rows = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        fields = reader.fieldnames or []
        needed = ("x", "y", "radius", "class")
        for name in needed:
            if name not in fields:
                raise ValueError(
                    f"{path}: no {name!r} column (found {fields})"
                )
        for row in reader:
            rows.append(
                (
                    float(row["x"]),
                    float(row["y"]),
                    float(row["radius"]),
                    row["class"],
                )
            )
    return rows


def build_figure(rows, circles=False):
    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    for cls in ("I", "E"):
        points = [(x, y) for x, y, _, c in rows if c == cls]
        if points:
            xs, ys = zip(*points)
            ax.scatter(
                xs, ys, s=25, color=COLORS[cls],
                label=f"{cls} ({len(points)})", zorder=3,
            )
    if circles:
        for x, y, radius, cls in rows:
            ax.add_patch(
                Circle(
                    (x, y), radius, fill=False,
                    color=COLORS.get(cls, "gray"),
                    alpha=0.25, linewidth=0.8,
                )
            )
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.grid(True, alpha=0.3)
    if rows:
        ax.legend(loc="upper right")
    fig.tight_layout()
    return fig, ax


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("cloud_csv", help="cloud CSV file")
    parser.add_argument("output", help="PNG file to write")
    parser.add_argument(
        "--circles", action="store_true",
        help="outline every node's support disk",
    )
    args = parser.parse_args(argv)

    try:
        rows = read_cloud(args.cloud_csv)
        fig, _ = build_figure(rows, circles=args.circles)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    fig.savefig(args.output, dpi=150)
    plt.close(fig)
    print(args.output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
