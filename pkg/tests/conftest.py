import numpy as np
import pytest

from odmts.instance import CostParams, Instance, RailLine, Stop, Trip
from odmts.network import Arc, Mode


@pytest.fixture
def tiny_instance() -> Instance:
    stops = (
        Stop("a", 33.70, -84.40),
        Stop("b", 33.80, -84.30),
    )
    inst = Instance(stops=stops, rail_lines=(),
                    trips=(Trip("t0", "a", "b", 1),),
                    params=CostParams(bus_frequencies=()))
    inst.validate()
    return inst


def shuttle_arc(aid, i, j, gamma_distance):
    """Arc whose per-passenger cost at alpha=0.5, c_S=5, zero time is known.

    gamma = (0.5 * 5 * d) = 2.5 d, so d = target / 2.5 gives cost `target`
    for a one-passenger trip.
    """
    return Arc(id=aid, i=i, j=j, mode=Mode.SHUTTLE, frequency=0,
               distance=gamma_distance / 2.5, time=0.0, fixed_cost=0.0,
               fixed_open=True)


def complete_shuttle_graph(names):
    arcs = []
    for i in names:
        for j in names:
            if i != j:
                arcs.append(Arc(id=len(arcs), i=i, j=j, mode=Mode.SHUTTLE,
                                frequency=0, distance=1.0, time=2.0,
                                fixed_cost=0.0, fixed_open=True))
    return arcs


def random_digraph(rng, n, density=0.5, mode=Mode.SHUTTLE):
    names = [f"v{i}" for i in range(n)]
    arcs = []
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < density:
                arcs.append(Arc(id=len(arcs), i=names[i], j=names[j],
                                mode=mode, frequency=0, distance=1.0,
                                time=1.0, fixed_cost=0.0, fixed_open=True))
    return names, arcs
