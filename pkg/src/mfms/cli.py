"""Command line front end.

Subcommands:
  mesh    build the mesh (with optional fractures) and report its size
  cloud   generate the point cloud only and write cloud.csv
  run     full experiment: schemes, error curves, snapshots, manifest
  sweep   repeat `run` over a list of values for one material parameter
  cfl     report the largest stable explicit step for the coarse system

Every subcommand takes --config (TOML) and --out; omitted options fall
back to built-in defaults, so `mfms run` works from a bare checkout.
"""

import argparse
import copy
import json
import logging
import sys
from pathlib import Path

from . import fem, geometry, harness

logger = logging.getLogger(__name__)


def _load(args):
    if args.config:
        cfg = harness.load_config(args.config)
    else:
        cfg = harness.resolve_config({})
    if getattr(args, "seed", None) is not None:
        cfg["cloud"]["seed"] = args.seed
    if getattr(args, "out", None):
        cfg["run"]["out_dir"] = args.out
    return cfg


def _add_common(parser):
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="point cloud seed override")


def cmd_mesh(args):
    cfg = _load(args)
    mesh = harness.build_geometry(cfg)
    out = Path(cfg["run"]["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    info = {
        "n_vertices": int(mesh.n_vertices),
        "n_triangles": int(mesh.triangles.shape[0]),
        "n_fracture_edges": int(mesh.fracture_edges.shape[0]),
        "fracture_length": geometry.fracture_length(mesh),
        "cell_diameter": mesh.cell_diameter(),
    }
    with open(out / "mesh.json", "w", encoding="utf-8") as handle:
        json.dump(info, handle, indent=2, sort_keys=True)
        handle.write("\n")
    for key, value in sorted(info.items()):
        print(f"{key}: {value}")
    return 0


def cmd_cloud(args):
    cfg = _load(args)
    mesh = harness.build_geometry(cfg)
    mat = harness.material_from_config(cfg)
    system = fem.build_fine_system(mesh, mat)
    prob = harness.build_coarse_problem(cfg, mesh, system)
    cloud = prob.cloud
    out = Path(cfg["run"]["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    harness.export_cloud_csv(cloud, out / "cloud.csv")
    n_imp = int(cloud.implicit.sum())
    print(f"points: {cloud.n_points}")
    print(f"implicit: {n_imp}")
    print(f"explicit: {cloud.n_points - n_imp}")
    print(f"coarse dofs: {prob.space.n_coarse}")
    print(f"wrote {out / 'cloud.csv'}")
    return 0


def cmd_run(args):
    cfg = _load(args)
    report = harness.run_experiment(cfg)
    for key in sorted(report.derived):
        print(f"{key}: {report.derived[key]}")
    for key in sorted(report.files):
        print(f"wrote {report.files[key]}")
    return 0


def cmd_sweep(args):
    cfg = _load(args)
    if args.param not in cfg["material"]:
        print(f"error: sweep: unknown material parameter {args.param!r}",
              file=sys.stderr)
        return 2
    if any(v <= 0 for v in args.values):
        print("error: sweep: values must be positive", file=sys.stderr)
        return 2
    base_out = Path(cfg["run"]["out_dir"])
    summary = []
    for value in args.values:
        sub = copy.deepcopy(cfg)
        sub["material"][args.param] = value
        tag = f"{args.param}_{value:g}"
        sub["run"]["out_dir"] = str(base_out / tag)
        report = harness.run_experiment(sub)
        row = {"value": value, "out_dir": sub["run"]["out_dir"]}
        row.update(report.derived)
        summary.append(row)
        print(f"{tag}: done")
    base_out.mkdir(parents=True, exist_ok=True)
    with open(base_out / "sweep.json", "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")
    print(f"wrote {base_out / 'sweep.json'}")
    return 0


def cmd_cfl(args):
    cfg = _load(args)
    report = harness.stability_report(cfg)
    out = Path(cfg["run"]["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "cfl.json", "w", encoding="utf-8") as handle:
        json.dump(report, handle, indent=2, sort_keys=True)
        handle.write("\n")
    for key in sorted(report):
        print(f"{key}: {report[key]}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mfms",
        description="Multiscale meshfree flow solver for fractured domains",
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="log at INFO level"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_mesh = sub.add_parser("mesh", help="build the mesh and report its size")
    _add_common(p_mesh)
    p_mesh.set_defaults(func=cmd_mesh)

    p_cloud = sub.add_parser("cloud", help="generate the point cloud")
    _add_common(p_cloud)
    p_cloud.set_defaults(func=cmd_cloud)

    p_run = sub.add_parser("run", help="run the configured schemes")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser(
        "sweep", help="run once per value of one material parameter"
    )
    _add_common(p_sweep)
    p_sweep.add_argument("--param", required=True,
                         help="material parameter name, e.g. k_fracture")
    p_sweep.add_argument("--values", required=True, type=float, nargs="+",
                         help="values to sweep over")
    p_sweep.set_defaults(func=cmd_sweep)

    p_cfl = sub.add_parser(
        "cfl", help="estimate the largest stable explicit step"
    )
    _add_common(p_cfl)
    p_cfl.set_defaults(func=cmd_cfl)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except harness.StageError as exc:
        print(f"error: {exc.stage}: {exc}", file=sys.stderr)
        return 1
    except (harness.ConfigError, geometry.FractureFormatError,
            FileNotFoundError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
