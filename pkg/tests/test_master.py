import numpy as np
import pytest

from odmts.instance import CostParams, Instance, RailLine, Stop, Trip, generate_synthetic
from odmts.master import (
    MasterError,
    MasterModel,
    design_satisfies_constraints,
    enumerate_feasible_designs,
)
from odmts.network import build_arcs, make_design
from odmts.routing import BendersCut, Router
from odmts.benders import evaluate_design


def _floor_cut(value):
    return BendersCut(constant=value, arc_ids=np.empty(0, dtype=np.int64),
                      coeffs=np.empty(0), phi_at_generation=value,
                      z_at_generation=np.empty(0), token=0)


def _two_hub_instance(freqs=(12, 24)):
    inst = Instance(
        stops=(Stop("h1", 0, 0, is_hub=True), Stop("h2", 0, 0.3, is_hub=True),
               Stop("a", 0.1, 0.1), Stop("b", 0.1, 0.2)),
        rail_lines=(),
        trips=(Trip("t", "a", "b", 1),),
        params=CostParams(bus_frequencies=freqs))
    inst.validate()
    return inst


def test_one_frequency_rows_per_ordered_hub_pair():
    arcs = build_arcs(_two_hub_instance())
    model = MasterModel(arcs)
    assert sum(1 for r in model.rows if r.sense == "<=") == 2
    assert model.n_dec == 4


def test_fixed_topology_balances_and_empty_design_feasible():
    stops = (Stop("s1", 0, 0, rail_line_ids=("r",)),
             Stop("s2", 0, 0.5, rail_line_ids=("r",)),
             Stop("o", 1, 0), Stop("d", 1, 1))
    inst = Instance(stops=stops, rail_lines=(RailLine("r", ("s1", "s2")),),
                    trips=(Trip("t", "o", "d", 1),),
                    params=CostParams(bus_frequencies=()))
    inst.validate()
    arcs = build_arcs(inst)
    model = MasterModel(arcs)            # must not raise: fixed rows balance
    z, theta, obj, _ = model.solve_relaxation()
    assert theta == pytest.approx(0.0)
    assert obj == pytest.approx(0.0)


def test_balance_forces_return_arc():
    arcs = build_arcs(_two_hub_instance(freqs=(12,)))
    designs = enumerate_feasible_designs(arcs)
    model = MasterModel(arcs)
    forward = next(p for p, a in enumerate(model.decision_ids)
                   if arcs[int(a)].i == "h1" and arcs[int(a)].frequency == 12)
    backward = next(p for p, a in enumerate(model.decision_ids)
                    if arcs[int(a)].i == "h2" and arcs[int(a)].frequency == 12)
    for d in designs:
        assert d[forward] == d[backward]


def test_relaxation_objective_monotone_in_cuts():
    arcs = build_arcs(_two_hub_instance())
    model = MasterModel(arcs)
    objs = []
    for floor in (0.0, 5.0, 9.0):
        model.add_cut(_floor_cut(floor))
        objs.append(model.solve_relaxation()[2])
    assert objs == sorted(objs)
    assert objs[-1] == pytest.approx(9.0)


def test_add_cut_deduplicates_and_validates():
    arcs = build_arcs(_two_hub_instance())
    model = MasterModel(arcs)
    cut = _floor_cut(3.0)
    assert model.add_cut(cut)
    assert not model.add_cut(_floor_cut(3.0))
    assert len(model.cuts) == 1
    with pytest.raises(MasterError, match="positive"):
        model.add_cut(BendersCut(
            constant=0.0, arc_ids=model.decision_ids[:1],
            coeffs=np.array([1.0]), phi_at_generation=0.0,
            z_at_generation=np.array([0.0]), token=0))
    fixed_id = next(a.id for a in arcs if a.fixed_open)
    with pytest.raises(MasterError, match="non-decision"):
        model.add_cut(BendersCut(
            constant=0.0, arc_ids=np.array([fixed_id]),
            coeffs=np.array([-1.0]), phi_at_generation=0.0,
            z_at_generation=np.array([1.0]), token=0))


def test_integral_relaxation_solves_at_root():
    arcs = build_arcs(_two_hub_instance())
    model = MasterModel(arcs)
    model.add_cut(_floor_cut(4.0))       # no incentive to open anything
    result = model.solve_mip(lambda z, theta, obj: None)
    assert result.status == "optimal"
    assert result.nodes == 1
    assert result.objective == pytest.approx(4.0)
    ok, msg = design_satisfies_constraints(arcs, result.z)
    assert ok, msg


def test_mip_equals_enumeration_with_noop_callback():
    rng = np.random.default_rng(5)
    for seed in range(10):
        inst = generate_synthetic(seed=seed, n_stops=7, n_hubs=3,
                                  n_rail_lines=0, n_trips=3,
                                  params=CostParams(bus_frequencies=(12, 24)))
        arcs = build_arcs(inst)
        model = MasterModel(arcs)
        # random cut pile to make theta matter
        router = Router(inst, arcs=arcs)
        bus = router.index.bus_arc_ids
        for _ in range(3):
            z = make_design(arcs, bus[rng.random(len(bus)) < 0.5])
            solves = [router.solve_trip_integer(t, z)
                      for t in range(len(inst.trips))]
            try:
                model.add_cut(router.make_cut(solves, z))
            except MasterError:
                pass
        result = model.solve_mip(lambda z, theta, obj: None)
        designs = enumerate_feasible_designs(arcs)
        best = np.inf
        for d in designs:
            zfull = model.full_design(d)
            theta = max([c.rhs(zfull) for c in model.cuts] + [0.0])
            best = min(best, float(model.beta @ d) + theta)
        assert result.objective == pytest.approx(best, rel=1e-9, abs=1e-7)
        assert result.best_bound <= result.objective + 1e-7


def test_incumbent_satisfies_constraints():
    inst = generate_synthetic(seed=3, n_stops=9, n_hubs=3, n_rail_lines=1,
                              n_trips=4)
    arcs = build_arcs(inst)
    model = MasterModel(arcs)
    model.add_cut(_floor_cut(1.0))
    result = model.solve_mip(lambda z, theta, obj: None)
    ok, msg = design_satisfies_constraints(arcs, result.z)
    assert ok, msg


def test_lazy_cut_rejection_loop():
    """Callback rejects the all-closed design once, forcing a reroute."""
    arcs = build_arcs(_two_hub_instance(freqs=(12,)))
    model = MasterModel(arcs)
    seen = []

    def callback(z, theta, obj):
        seen.append(z[model.decision_ids].sum())
        if theta < 7.0 - 1e-9:
            return _floor_cut(7.0)
        return None

    result = model.solve_mip(callback)
    assert result.status == "optimal"
    assert result.objective == pytest.approx(7.0)
    assert len(seen) >= 2                 # rejected once, accepted after


def test_node_limit_reports_partial():
    arcs = build_arcs(_two_hub_instance())
    model = MasterModel(arcs)
    result = model.solve_mip(lambda z, theta, obj: None, node_limit=0)
    assert result.status == "node_limit"
    assert result.z is None


def test_design_satisfies_constraints_detects_imbalance():
    arcs = build_arcs(_two_hub_instance(freqs=(12,)))
    model = MasterModel(arcs)
    forward = int(model.decision_ids[0])
    z = make_design(arcs, [forward])
    ok, msg = design_satisfies_constraints(arcs, z)
    assert not ok
    assert "imbalance" in msg


def test_evaluate_design_rejects_infeasible():
    inst = _two_hub_instance(freqs=(12,))
    arcs = build_arcs(inst)
    model = MasterModel(arcs)
    z = make_design(arcs, [int(model.decision_ids[0])])
    with pytest.raises(ValueError, match="infeasible design"):
        evaluate_design(inst, z)
