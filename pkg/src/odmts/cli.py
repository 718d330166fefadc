"""Command-line interface: generate, solve, evaluate, export-geojson.

Exit codes: 0 on success, 1 for input errors (bad flags, missing or invalid
files), 2 when the solver stops at a resource cap (the best design found is
still written).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import benders, design_io
from .instance import (
    CostParams,
    Instance,
    InstanceParseError,
    InstanceValidationError,
    generate_synthetic,
    instance_digest,
    load_instance,
    save_instance,
    with_max_arcs,
)
from .routing import Router


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odmts",
        description="Design on-demand multimodal transit networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate a synthetic instance")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--stops", type=int, required=True)
    gen.add_argument("--hubs", type=int, required=True)
    gen.add_argument("--rail-lines", type=int, default=0)
    gen.add_argument("--trips", type=int, required=True)
    gen.add_argument("--box", type=float, nargs=4,
                     metavar=("LAT_LO", "LON_LO", "LAT_HI", "LON_HI"),
                     default=None)
    gen.add_argument("--k", type=int, default=3,
                     help="maximum legs per passenger route")
    gen.add_argument("--alpha", type=float, default=0.5)
    gen.add_argument("--frequencies", type=int, nargs="*", default=[12, 24])
    gen.add_argument("-o", "--output", required=True)

    slv = sub.add_parser("solve", help="solve an instance")
    slv.add_argument("instance")
    slv.add_argument("--mode", choices=["exact", "relaxed"], default="exact")
    slv.add_argument("--k", type=int, default=None,
                     help="override the instance leg budget")
    slv.add_argument("--gap", type=float, default=1e-6)
    slv.add_argument("--threads", type=int, default=1)
    slv.add_argument("--node-limit", type=int, default=None)
    slv.add_argument("--root-cap", type=int, default=400)
    slv.add_argument("--report", default=None,
                     help="also write the full solve report JSON here")
    slv.add_argument("--cut-log", default=None)
    slv.add_argument("--bound-log", default=None)
    slv.add_argument("-o", "--output", required=True,
                     help="design file to write")

    ev = sub.add_parser("evaluate", help="re-route passengers over a design")
    ev.add_argument("instance")
    ev.add_argument("design")
    ev.add_argument("--routes-csv", default=None)

    geo = sub.add_parser("export-geojson",
                         help="export a design as GeoJSON for mapping tools")
    geo.add_argument("instance")
    geo.add_argument("design")
    geo.add_argument("-o", "--output", required=True)

    return parser


def _cmd_generate(args) -> int:
    params = CostParams(alpha=args.alpha,
                        bus_frequencies=tuple(sorted(args.frequencies)),
                        max_arcs=args.k)
    box = tuple(args.box) if args.box else None
    kwargs = {} if box is None else {"bounding_box": box}
    inst = generate_synthetic(seed=args.seed, n_stops=args.stops,
                              n_hubs=args.hubs, n_rail_lines=args.rail_lines,
                              n_trips=args.trips, params=params, **kwargs)
    save_instance(inst, args.output)
    print(f"wrote {args.output}: {len(inst.stops)} stops, "
          f"{len(inst.hubs)} hubs, {len(inst.trips)} trips")
    return 0


def _cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    file_digest = instance_digest(inst)
    if args.k is not None:
        inst = with_max_arcs(inst, args.k)
    config = benders.BendersConfig(mode=args.mode, gap=args.gap,
                                   threads=args.threads,
                                   node_limit=args.node_limit,
                                   root_iteration_cap=args.root_cap)
    report = benders._run(inst, config)
    design = design_io.design_from_report(report, args.instance,
                                          inst.params.max_arcs,
                                          instance_sha256=file_digest)
    design_io.save_design(design, args.output)
    if args.report:
        Path(args.report).write_text(report.to_json(), encoding="utf-8")
    if args.cut_log:
        benders.write_cut_log(report, args.cut_log)
    if args.bound_log:
        benders.write_bound_trajectory(report, args.bound_log)
    print(f"{report.mode} solve: objective {report.objective:.6f} "
          f"(design {report.design_cost:.6f} + routing {report.routing_cost:.6f}), "
          f"status {report.status}, wall {report.wall_time:.2f}s",
          file=sys.stderr)
    print(f"wrote {args.output}")
    if report.status != "optimal":
        print("warning: solver stopped at a resource cap; design is the best "
              "found, not proven optimal", file=sys.stderr)
        return 2
    return 0


def _load_pair(instance_path: str, design_path: str):
    inst = load_instance(instance_path)
    design = design_io.load_design(design_path, inst)
    if design.max_arcs and design.max_arcs != inst.params.max_arcs:
        inst = with_max_arcs(inst, design.max_arcs)
    router = Router(inst)
    z = design_io.design_vector(design, router)
    return inst, design, router, z


def _cmd_evaluate(args) -> int:
    inst, design, router, z = _load_pair(args.instance, args.design)
    result = benders.evaluate_design(inst, z, router=router)
    doc = {
        "objective": result.objective,
        "design_cost": result.design_cost,
        "routing_cost": result.routing_cost,
        "trips": len(inst.trips),
    }
    print(json.dumps(doc, sort_keys=True, indent=2))
    if args.routes_csv:
        Path(args.routes_csv).write_text(
            design_io.routes_to_csv(inst, router, result.routes),
            encoding="utf-8")
    return 0


def _cmd_export_geojson(args) -> int:
    inst, design, router, z = _load_pair(args.instance, args.design)
    result = benders.evaluate_design(inst, z, router=router)
    doc = design_io.export_geojson(inst, router, z, result.routes)
    Path(args.output).write_text(
        json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {args.output}: {len(doc['features'])} features")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {
        "generate": _cmd_generate,
        "solve": _cmd_solve,
        "evaluate": _cmd_evaluate,
        "export-geojson": _cmd_export_geojson,
    }
    try:
        return handlers[args.command](args)
    except (InstanceParseError, InstanceValidationError,
            design_io.DesignFileError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
