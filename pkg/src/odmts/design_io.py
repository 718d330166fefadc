"""Design files, GeoJSON export, and route dumps.

A design file records which bus arcs a solve opened, the objective split,
and enough metadata to re-evaluate it: the instance path and a SHA-256 of
the instance content, verified on load so a design is never applied to the
wrong instance. File outputs are deterministic for fixed inputs; wall-clock
measurements stay on the progress log and never enter files.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .benders import SolveReport
from .instance import Instance, instance_digest
from .network import Arc, Mode
from .routing import Router


class DesignFileError(ValueError):
    """Malformed design file or instance/design mismatch."""


@dataclass(frozen=True)
class DesignFile:
    instance_path: str
    instance_sha256: str
    open_arcs: tuple[tuple[str, str, str, int], ...]   # (i, j, mode, frequency)
    objective: float
    design_cost: float
    routing_cost: float
    mode: str
    status: str
    gap: float
    seed: int | None
    max_arcs: int

    def to_json(self) -> str:
        doc = {
            "instance": self.instance_path,
            "instance_sha256": self.instance_sha256,
            "open_arcs": [
                {"i": i, "j": j, "mode": m, "frequency": f}
                for i, j, m, f in self.open_arcs
            ],
            "objective": self.objective,
            "design_cost": self.design_cost,
            "routing_cost": self.routing_cost,
            "solver": {
                "mode": self.mode,
                "status": self.status,
                "gap": self.gap,
                "seed": self.seed,
                "max_arcs": self.max_arcs,
            },
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def design_from_report(report: SolveReport, instance_path: str,
                       max_arcs: int, seed: int | None = None,
                       instance_sha256: str | None = None) -> DesignFile:
    """Wrap a solve report as a design file.

    `instance_sha256` should be the digest of the instance as stored on
    disk; it defaults to the digest of the instance the solver saw, which
    differs when the leg budget was overridden on the command line.
    """
    return DesignFile(
        instance_path=str(instance_path),
        instance_sha256=instance_sha256 or report.instance_sha256,
        open_arcs=tuple((d["i"], d["j"], d["mode"], d["frequency"])
                        for d in report.open_arcs),
        objective=report.objective, design_cost=report.design_cost,
        routing_cost=report.routing_cost, mode=report.mode,
        status=report.status, gap=report.gap, seed=seed, max_arcs=max_arcs)


def save_design(design: DesignFile, path: str | Path) -> None:
    Path(path).write_text(design.to_json(), encoding="utf-8")


def load_design(path: str | Path, inst: Instance) -> DesignFile:
    """Load a design file and verify it belongs to `inst`."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DesignFileError(f"cannot read design file {path}: {exc}") from exc
    for key in ("instance_sha256", "open_arcs", "solver"):
        if key not in doc:
            raise DesignFileError(f"design file missing key {key!r}")
    digest = instance_digest(inst)
    if doc["instance_sha256"] != digest:
        raise DesignFileError(
            "design file was produced from a different instance "
            f"(expected sha256 {digest[:12]}..., file has "
            f"{doc['instance_sha256'][:12]}...)")
    open_arcs = tuple(
        (str(a["i"]), str(a["j"]), str(a["mode"]), int(a["frequency"]))
        for a in doc["open_arcs"])
    solver = doc["solver"]
    return DesignFile(
        instance_path=str(doc.get("instance", "")),
        instance_sha256=doc["instance_sha256"], open_arcs=open_arcs,
        objective=float(doc.get("objective", np.nan)),
        design_cost=float(doc.get("design_cost", np.nan)),
        routing_cost=float(doc.get("routing_cost", np.nan)),
        mode=str(solver.get("mode", "")), status=str(solver.get("status", "")),
        gap=float(solver.get("gap", np.nan)),
        seed=solver.get("seed"), max_arcs=int(solver.get("max_arcs", 0)))


def design_vector(design: DesignFile, router: Router) -> np.ndarray:
    """Rebuild the full z vector of a design against a router's arc set."""
    by_key = {a.key: a.id for a in router.arcs}
    z = np.zeros(router.n_arcs)
    z[router.index.fixed_open] = 1.0
    for i, j, mode, freq in design.open_arcs:
        key = (i, j, mode, freq)
        if key not in by_key:
            raise DesignFileError(f"design opens unknown arc {key}")
        z[by_key[key]] = 1.0
    return z


def export_geojson(inst: Instance, router: Router, z: np.ndarray,
                   routes: list[list[int]]) -> dict:
    """GeoJSON FeatureCollection of a design and its passenger flows.

    Open bus arcs always appear; always-open shuttle and rail arcs appear
    only when at least one route uses them. Properties carry the mode,
    frequency, opening cost, total passenger flow, and rendering hints
    (stroke weight by mode, frequency tier for bus lines).
    """
    flow = np.zeros(router.n_arcs)
    for t, route in enumerate(routes):
        passengers = inst.trips[t].passengers
        for arc_id in route:
            flow[arc_id] += passengers

    freqs = sorted(inst.params.bus_frequencies)
    high_cutoff = freqs[-1] if freqs else 0

    features = []
    for a in router.arcs:
        if a.fixed_open:
            if flow[a.id] <= 0:
                continue
        elif z[a.id] <= 0.5:
            continue
        si, sj = inst.stop(a.i), inst.stop(a.j)
        if a.mode is Mode.RAIL:
            stroke = "thick"
        elif a.mode is Mode.SHUTTLE:
            stroke = "thin"
        else:
            stroke = "medium"
        props = {
            "arc_id": a.id,
            "mode": a.mode.value,
            "frequency": a.frequency,
            "beta": a.fixed_cost,
            "passenger_flow": float(flow[a.id]),
            "stroke_hint": stroke,
        }
        if a.mode is Mode.BUS:
            props["frequency_tier"] = "high" if a.frequency >= high_cutoff else "low"
        features.append({
            "type": "Feature",
            "geometry": {
                "type": "LineString",
                "coordinates": [[si.lon, si.lat], [sj.lon, sj.lat]],
            },
            "properties": props,
        })
    return {"type": "FeatureCollection", "features": features}


def routes_to_csv(inst: Instance, router: Router,
                  routes: list[list[int]]) -> str:
    """CSV route dump: trip id, leg index, arc id, mode, leg cost."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["trip", "leg", "arc_id", "mode", "cost"])
    for t, route in enumerate(routes):
        trip = inst.trips[t]
        gamma = router.trip_gamma(trip)
        for leg, arc_id in enumerate(route):
            writer.writerow([trip.id, leg, arc_id,
                             router.arcs[arc_id].mode.value,
                             f"{gamma[arc_id]:.9g}"])
    return buf.getvalue()
