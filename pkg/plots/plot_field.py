#!/usr/bin/env python3
"""Render a nodal scalar field from an ASCII legacy-VTK triangle mesh.

Reads the unstructured-grid layout written by the run pipeline (POINTS,
triangle CELLS, one POINT_DATA scalar array) and draws it as a
Gouraud-shaded triangulation with a colorbar.
"""

import argparse
import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


class VtkFormatError(ValueError):
    """The input is not the expected ASCII triangle-mesh layout."""


class _Scanner:
    """Line scanner keeping byte offsets for error messages."""

    def __init__(self, text):
        self.lines = []
        offset = 0
        for raw in text.splitlines(keepends=True):
            self.lines.append((offset, raw.strip()))
            offset += len(raw)
        self.pos = 0
        self.size = offset

    def next_line(self, what):
        while self.pos < len(self.lines):
            offset, line = self.lines[self.pos]
            self.pos += 1
            if line:
                return offset, line
        raise VtkFormatError(
            f"unexpected end of file while reading {what} "
            f"(byte {self.size})"
        )

    def take_floats(self, count, what):
        out = []
        while len(out) < count:
            offset, line = self.next_line(what)
            for token in line.split():
                try:
                    out.append(float(token))
                except ValueError:
                    raise VtkFormatError(
                        f"bad number {token!r} in {what} at byte {offset}"
                    ) from None
        return np.array(out[:count])


def _header(scanner, keyword, n_fields=None):
    offset, line = scanner.next_line(f"{keyword} header")
    parts = line.split()
    if parts[0] != keyword or (n_fields is not None and len(parts) != n_fields):
        raise VtkFormatError(
            f"expected {keyword} header at byte {offset}, got {line!r}"
        )
    return offset, parts


def _int_field(token, what, offset):
    try:
        return int(token)
    except ValueError:
        raise VtkFormatError(
            f"bad count {token!r} in {what} at byte {offset}"
        ) from None


def parse_vtk(path):
    """Return (xy, triangles, values, name) from a legacy VTK file."""
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    scanner = _Scanner(text)

    offset, magic = scanner.next_line("file header")
    if not magic.startswith("# vtk DataFile"):
        raise VtkFormatError(f"not a legacy VTK file (byte {offset})")
    scanner.next_line("title")
    offset, fmt = scanner.next_line("data format")
    if fmt != "ASCII":
        raise VtkFormatError(
            f"expected ASCII data at byte {offset}, got {fmt!r}"
        )
    offset, dataset = scanner.next_line("dataset type")
    if dataset.split() != ["DATASET", "UNSTRUCTURED_GRID"]:
        raise VtkFormatError(
            f"expected an unstructured grid at byte {offset}, got {dataset!r}"
        )

    offset, parts = _header(scanner, "POINTS", 3)
    n_points = _int_field(parts[1], "POINTS", offset)
    coords = scanner.take_floats(3 * n_points, "point coordinates")
    coords = coords.reshape(n_points, 3)

    offset, parts = _header(scanner, "CELLS", 3)
    n_cells = _int_field(parts[1], "CELLS", offset)
    table = scanner.take_floats(4 * n_cells, "cell connectivity")
    table = table.astype(np.int64).reshape(n_cells, 4)
    if n_cells and not np.all(table[:, 0] == 3):
        raise VtkFormatError(
            f"only triangle cells are supported (byte {offset})"
        )
    triangles = table[:, 1:]

    offset, parts = _header(scanner, "CELL_TYPES", 2)
    types = scanner.take_floats(n_cells, "cell types").astype(np.int64)
    if n_cells and not np.all(types == 5):
        raise VtkFormatError(
            f"non-triangle cell types present (byte {offset})"
        )

    offset, parts = _header(scanner, "POINT_DATA", 2)
    n_data = _int_field(parts[1], "POINT_DATA", offset)
    if n_data != n_points:
        raise VtkFormatError(
            f"POINT_DATA count {n_data} does not match {n_points} points "
            f"(byte {offset})"
        )
    offset, parts = _header(scanner, "SCALARS")
    name = parts[1] if len(parts) > 1 else "value"
    _header(scanner, "LOOKUP_TABLE")
    values = scanner.take_floats(n_points, "scalar values")

    return coords[:, :2], triangles, values, name


def build_figure(xy, triangles, values, title=None, cmap="viridis"):
    fig, ax = plt.subplots(figsize=(6.4, 5.6))
    image = ax.tripcolor(
        xy[:, 0], xy[:, 1], triangles, values,
        shading="gouraud", cmap=cmap,
    )
    fig.colorbar(image, ax=ax, label=title or "value")
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    return fig, ax


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("vtk", help="legacy VTK file with one scalar array")
    parser.add_argument("output", help="PNG file to write")
    parser.add_argument("--title", default=None, help="colorbar label")
    parser.add_argument("--cmap", default="viridis", help="matplotlib colormap")
    args = parser.parse_args(argv)

    try:
        xy, triangles, values, name = parse_vtk(args.vtk)
        fig, _ = build_figure(
            xy, triangles, values,
            title=args.title or name, cmap=args.cmap,
        )
    except (OSError, VtkFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    fig.savefig(args.output, dpi=150)
    plt.close(fig)
    print(args.output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
