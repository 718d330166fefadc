import math

import numpy as np
import pytest

from odmts.instance import Trip
from odmts.network import Arc, Mode
from odmts.transfer_graph import (
    InfeasibleRouteError,
    build_expanded,
    csp_oracle,
    forward_distances,
    prune_dominated,
    shortest_path,
    to_dot,
)

from conftest import complete_shuttle_graph, random_digraph


def _trip(o="o", d="d"):
    return Trip(id="t", origin_stop=o, destination_stop=d, passengers=1)


def test_complete_five_vertex_counts():
    names = ["o", "a", "b", "c", "d"]
    arcs = complete_shuttle_graph(names)
    g = build_expanded(_trip(), arcs, 3, vertices=names)
    assert g.n_vertices == 8
    assert g.n_arcs == 16
    # origin fan-out 4; middle copies 6 (k=2 only); sink fan-in 6 (k=2,3)
    by_layer = [e - s for s, e in g.layer_slices]
    assert by_layer[0] == 4
    assert by_layer[1] + by_layer[2] == 12
    sink_arcs = int((g.arc_head == g.sink).sum())
    assert sink_arcs == 6 + 1            # rule-3 copies plus the direct arc


def test_k2_has_no_interior_copies():
    names = ["o", "a", "b", "c", "d"]
    arcs = complete_shuttle_graph(names)
    g = build_expanded(_trip(), arcs, 2, vertices=names)
    # fan-out (4) + fan-in from layer 2 (3): interior range 2..K-1 is empty
    assert g.n_arcs == 7


def test_layers_strictly_increase():
    names = ["o", "a", "b", "c", "d"]
    arcs = complete_shuttle_graph(names)
    for k in (2, 3, 4):
        g = build_expanded(_trip(), arcs, k, vertices=names)
        assert np.all(g.arc_head > g.arc_tail)


def test_leg_budget_floor_rejected():
    with pytest.raises(ValueError):
        build_expanded(_trip(), complete_shuttle_graph(["o", "d"]), 1)


def test_pruning_on_complete_graph():
    names = ["o", "a", "b", "c", "d"]
    arcs = complete_shuttle_graph(names)
    gamma = np.ones(len(arcs))
    g = build_expanded(_trip(), arcs, 3, vertices=names)
    pruned = prune_dominated(g, arcs, gamma)
    assert pruned.n_arcs == 13
    # budget <= 3 keeps the layered graph no larger than the original
    assert pruned.n_arcs <= len(arcs)


def test_pruning_skipped_when_destination_bus_served():
    names = ["o", "a", "d"]
    arcs = complete_shuttle_graph(names)
    arcs.append(Arc(id=len(arcs), i="a", j="d", mode=Mode.BUS, frequency=12,
                    distance=1.0, time=1.0, fixed_cost=1.0, fixed_open=False))
    gamma = np.ones(len(arcs))
    g = build_expanded(_trip(), arcs, 3, vertices=names)
    assert prune_dominated(g, arcs, gamma) is g


def test_pruning_preserves_values_on_metric_instances():
    rng = np.random.default_rng(123)
    for _ in range(500):
        n = int(rng.integers(3, 8))
        names = [f"v{i}" for i in range(n)]
        pts = rng.uniform(0, 10, size=(n, 2))
        arcs = []
        for i in range(n):
            for j in range(n):
                if i != j:
                    d = float(np.hypot(*(pts[i] - pts[j])))
                    arcs.append(Arc(id=len(arcs), i=names[i], j=names[j],
                                    mode=Mode.SHUTTLE, frequency=0,
                                    distance=d, time=0.0, fixed_cost=0.0,
                                    fixed_open=True))
        gamma = np.array([a.distance for a in arcs]) + 1e-9
        k = int(rng.integers(2, 5))
        trip = Trip(id="t", origin_stop=names[0], destination_stop=names[-1],
                    passengers=1)
        g = build_expanded(trip, arcs, k, vertices=names)
        pruned = prune_dominated(g, arcs, gamma)
        z = np.ones(len(arcs))
        v_full, _ = shortest_path(g, z, gamma)
        v_pruned, _ = shortest_path(pruned, z, gamma)
        assert v_full == pytest.approx(v_pruned, abs=1e-12)
        # every layer-2 shuttle hop into the sink is dominated under a metric
        removed = g.n_arcs - pruned.n_arcs
        candidates = int(((g.arc_from_layer == 2)
                          & (g.arc_head == g.sink)).sum())
        assert removed == candidates


def _chain_example():
    # o->a=1, a->b=1, b->d=1, o->d=10, o->b=5, a->d=5
    spec = [("o", "a", 1.0), ("a", "b", 1.0), ("b", "d", 1.0),
            ("o", "d", 10.0), ("o", "b", 5.0), ("a", "d", 5.0)]
    arcs = []
    gamma = []
    for i, j, c in spec:
        arcs.append(Arc(id=len(arcs), i=i, j=j, mode=Mode.SHUTTLE, frequency=0,
                        distance=c, time=0.0, fixed_cost=0.0, fixed_open=True))
        gamma.append(c)
    return arcs, np.array(gamma)


def test_shortest_path_respects_budget():
    arcs, gamma = _chain_example()
    names = ["o", "a", "b", "d"]
    z = np.ones(len(arcs))
    g3 = build_expanded(_trip(), arcs, 3, vertices=names)
    value, path = shortest_path(g3, z, gamma)
    assert value == pytest.approx(3.0)
    assert [arcs[a].key[:2] for a in path] == [("o", "a"), ("a", "b"), ("b", "d")]
    g2 = build_expanded(_trip(), arcs, 2, vertices=names)
    value2, path2 = shortest_path(g2, z, gamma)
    assert value2 == pytest.approx(6.0)
    assert len(path2) == 2


def test_shortest_path_single_open_arc():
    arcs, gamma = _chain_example()
    z = np.zeros(len(arcs))
    z[3] = 1.0                   # direct only
    g = build_expanded(_trip(), arcs, 3, vertices=["o", "a", "b", "d"])
    value, path = shortest_path(g, z, gamma)
    assert value == pytest.approx(10.0)
    assert path == [3]


def test_shortest_path_unreachable_raises():
    arcs, gamma = _chain_example()
    z = np.zeros(len(arcs))
    g = build_expanded(_trip(), arcs, 3, vertices=["o", "a", "b", "d"])
    with pytest.raises(InfeasibleRouteError):
        shortest_path(g, z, gamma)


def test_tie_break_prefers_fewer_then_lexicographic():
    # two cost-2 routes: [0,1] (two legs) and [2] (one leg) -> pick [2];
    # then two 2-leg cost-2 routes -> pick lexicographically smaller ids.
    arcs = []
    for aid, (i, j, c) in enumerate([("o", "m", 1.0), ("m", "d", 1.0),
                                     ("o", "d", 2.0)]):
        arcs.append(Arc(id=aid, i=i, j=j, mode=Mode.SHUTTLE, frequency=0,
                        distance=c, time=0.0, fixed_cost=0.0, fixed_open=True))
    gamma = np.array([1.0, 1.0, 2.0])
    g = build_expanded(_trip(), arcs, 3, vertices=["o", "m", "d"])
    _, path = shortest_path(g, np.ones(3), gamma)
    assert path == [2]

    arcs2 = []
    for aid, (i, j) in enumerate([("o", "m1"), ("m1", "d"), ("o", "m2"),
                                  ("m2", "d")]):
        arcs2.append(Arc(id=aid, i=i, j=j, mode=Mode.SHUTTLE, frequency=0,
                         distance=1.0, time=0.0, fixed_cost=0.0,
                         fixed_open=True))
    g2 = build_expanded(_trip(), arcs2, 2, vertices=["o", "m1", "m2", "d"])
    _, path2 = shortest_path(g2, np.ones(4), np.ones(4))
    assert path2 == [0, 1]


def test_oracle_slack_budget_equals_unconstrained():
    rng = np.random.default_rng(3)
    names, arcs = random_digraph(rng, 6, density=0.7)
    gamma = rng.integers(1, 10, size=len(arcs)).astype(float)
    z = np.ones(len(arcs))
    slack = csp_oracle(arcs, z, gamma, names[0], names[-1], k_max=5)
    very_slack = csp_oracle(arcs, z, gamma, names[0], names[-1], k_max=50)
    assert slack == very_slack


def test_oracle_budget_exhausted():
    arcs = []
    chain = ["o", "a", "b", "c", "d"]
    for i in range(4):
        arcs.append(Arc(id=i, i=chain[i], j=chain[i + 1], mode=Mode.SHUTTLE,
                        frequency=0, distance=1.0, time=0.0, fixed_cost=0.0,
                        fixed_open=True))
    value = csp_oracle(arcs, np.ones(4), np.ones(4), "o", "d", k_max=3)
    assert math.isinf(value)


def test_expanded_equals_oracle_random_sweep():
    rng = np.random.default_rng(77)
    for _ in range(250):
        n = int(rng.integers(3, 9))
        names, arcs = random_digraph(rng, n, density=0.5)
        if not arcs:
            continue
        gamma = rng.integers(1, 20, size=len(arcs)).astype(float)
        z = (rng.random(len(arcs)) < 0.8).astype(float)
        k = int(rng.integers(2, 5))
        trip = Trip(id="t", origin_stop=names[0], destination_stop=names[-1],
                    passengers=1)
        g = build_expanded(trip, arcs, k, vertices=names)
        f = forward_distances(g, np.where(z > 0.5, gamma, np.inf))
        expanded = float(f[g.sink])
        oracle = csp_oracle(arcs, z, gamma, names[0], names[-1], k)
        if math.isinf(oracle):
            assert math.isinf(expanded)
        else:
            assert expanded == oracle


def test_to_dot_mentions_every_vertex():
    names = ["o", "a", "d"]
    arcs = complete_shuttle_graph(names)
    g = build_expanded(_trip(), arcs, 2, vertices=names)
    dot = to_dot(g)
    assert dot.startswith("digraph")
    for v in range(g.n_vertices):
        assert f"v{v} " in dot
