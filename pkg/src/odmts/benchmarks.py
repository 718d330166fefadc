"""Bundled benchmark instances.

`corridor_trap` is constructed so the leg-budget-relaxed baseline buys a bus
corridor that no passenger can legally ride: with a budget of two legs, the
three-leg shuttle-bus-shuttle itinerary is infeasible, but its fractional
two-thirds version looks attractive to the relaxed subproblem. The exact
model keeps every bus closed, so evaluating the relaxed design is strictly
worse than the exact optimum.

The synthetic entries are fixed-seed generator outputs at sizes where both
modes finish quickly; they are the default set for timing comparisons.
"""

from __future__ import annotations

from .instance import CostParams, Instance, RailLine, Stop, Trip, generate_synthetic


def corridor_trap() -> Instance:
    """Two-leg budget, long corridor: the relaxation overbuilds."""
    stops = (
        Stop("o", 0.0, 0.0),
        Stop("h1", 0.0, 0.02, is_hub=True),
        Stop("h2", 0.0, 0.48, is_hub=True),
        Stop("d", 0.0, 0.5),
    )
    trips = (
        Trip("t0", "o", "d", 5),
        Trip("t1", "o", "d", 5),
    )
    params = CostParams(alpha=0.5, bus_frequencies=(12,), max_arcs=2)
    inst = Instance(stops=stops, rail_lines=(), trips=trips, params=params)
    inst.validate()
    return inst


def benchmark_instances() -> list[tuple[str, Instance]]:
    """The bundled set used for mode timing comparisons."""
    wide = (33.4, -84.9, 34.1, -84.0)
    return [
        ("corridor_trap", corridor_trap()),
        ("mid40", generate_synthetic(
            seed=2024, n_stops=40, n_hubs=4, n_rail_lines=1, n_trips=120,
            bounding_box=wide,
            params=CostParams(bus_frequencies=(12, 24), max_arcs=3))),
        ("mid60", generate_synthetic(
            seed=7, n_stops=60, n_hubs=5, n_rail_lines=1, n_trips=160,
            bounding_box=wide,
            params=CostParams(bus_frequencies=(12, 24), max_arcs=3))),
    ]


def desk_scale_instance() -> Instance:
    """The large reference instance for the performance gate."""
    return generate_synthetic(
        seed=42, n_stops=200, n_hubs=8, n_rail_lines=1, n_trips=500,
        bounding_box=(33.4, -84.9, 34.1, -84.0),
        params=CostParams(bus_frequencies=(12, 24), max_arcs=3))
