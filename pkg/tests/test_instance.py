import json
import math

import numpy as np
import pytest

from odmts.instance import (
    CostParams,
    Instance,
    InstanceParseError,
    InstanceValidationError,
    RailLine,
    Stop,
    Trip,
    generate_synthetic,
    great_circle_distance,
    instance_from_dict,
    instance_to_json,
    load_instance,
    save_instance,
    travel_time,
    with_max_arcs,
)


def test_smallest_valid_instance(tmp_path):
    doc = {
        "stops": [
            {"id": "a", "lat": 33.7, "lon": -84.4, "is_hub": False, "rail_lines": []},
            {"id": "b", "lat": 33.8, "lon": -84.3, "is_hub": False, "rail_lines": []},
        ],
        "rail_lines": [],
        "trips": [{"id": "t0", "origin": "a", "destination": "b", "passengers": 1}],
        "params": {"bus_frequencies": []},
    }
    path = tmp_path / "inst.json"
    path.write_text(json.dumps(doc))
    inst = load_instance(path)
    assert len(inst.stops) == 2
    assert len(inst.trips) == 1


def test_dangling_trip_reference_names_the_trip(tmp_path):
    doc = {
        "stops": [{"id": "a", "lat": 0, "lon": 0}],
        "rail_lines": [],
        "trips": [{"id": "t9", "origin": "a", "destination": "zz", "passengers": 1}],
        "params": {"bus_frequencies": []},
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(InstanceValidationError, match="t9"):
        load_instance(path)


def test_alpha_range_check(tmp_path):
    doc = {
        "stops": [{"id": "a", "lat": 0, "lon": 0}, {"id": "b", "lat": 1, "lon": 1}],
        "rail_lines": [],
        "trips": [{"id": "t0", "origin": "a", "destination": "b", "passengers": 1}],
        "params": {"alpha": 1.5, "bus_frequencies": []},
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(InstanceValidationError, match=r"alpha out of \[0,1\]"):
        load_instance(path)


def test_malformed_json_is_a_parse_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(InstanceParseError):
        load_instance(path)


def test_great_circle_identical_points():
    p = (33.749, -84.388)
    assert great_circle_distance(p, p) == 0.0


def test_great_circle_one_degree_of_longitude_at_equator():
    # One degree of arc on the 3958.8-mile sphere.
    expected = 3958.8 * math.pi / 180.0
    got = great_circle_distance((0.0, 0.0), (0.0, 1.0))
    assert abs(got - 69.09) < 0.01
    assert got == pytest.approx(expected, abs=1e-9)


def test_great_circle_symmetry():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        p = (rng.uniform(-90, 90), rng.uniform(-180, 180))
        q = (rng.uniform(-90, 90), rng.uniform(-180, 180))
        assert great_circle_distance(p, q) == pytest.approx(
            great_circle_distance(q, p), abs=1e-12)


def test_great_circle_triangle_inequality():
    rng = np.random.default_rng(5)
    for _ in range(2000):
        pts = [(rng.uniform(-60, 60), rng.uniform(-170, 170)) for _ in range(3)]
        d_ab = great_circle_distance(pts[0], pts[1])
        d_bc = great_circle_distance(pts[1], pts[2])
        d_ac = great_circle_distance(pts[0], pts[2])
        assert d_ac <= (d_ab + d_bc) * (1 + 1e-9) + 1e-12


def test_travel_time_arithmetic():
    params = CostParams()
    assert travel_time(15.0, params) == pytest.approx(30.0)
    assert travel_time(0.0, params) == 0.0
    assert travel_time(7.5, params) == pytest.approx(15.0)


def test_generator_determinism():
    a = generate_synthetic(seed=1, n_stops=20, n_hubs=4, n_rail_lines=1, n_trips=50)
    b = generate_synthetic(seed=1, n_stops=20, n_hubs=4, n_rail_lines=1, n_trips=50)
    assert instance_to_json(a) == instance_to_json(b)
    c = generate_synthetic(seed=2, n_stops=20, n_hubs=4, n_rail_lines=1, n_trips=50)
    assert instance_to_json(a) != instance_to_json(c)


def test_generator_shuttle_only():
    inst = generate_synthetic(seed=3, n_stops=10, n_hubs=0, n_rail_lines=0,
                              n_trips=5, params=CostParams(bus_frequencies=()))
    assert not any(s.is_hub for s in inst.stops)
    inst.validate()


def test_generator_rejects_inconsistent_parameters():
    with pytest.raises(ValueError):
        generate_synthetic(seed=0, n_stops=5, n_hubs=6, n_rail_lines=0, n_trips=1)
    with pytest.raises(ValueError):
        generate_synthetic(seed=0, n_stops=1, n_hubs=0, n_rail_lines=1,
                           n_trips=1, params=CostParams(bus_frequencies=()))
    with pytest.raises(ValueError):
        # frequencies offered but no hubs
        generate_synthetic(seed=0, n_stops=5, n_hubs=0, n_rail_lines=0, n_trips=2)


def test_round_trip_equality(tmp_path):
    for seed in range(5):
        inst = generate_synthetic(seed=seed, n_stops=15, n_hubs=3,
                                  n_rail_lines=1, n_trips=10)
        path = tmp_path / f"i{seed}.json"
        save_instance(inst, path)
        assert load_instance(path) == inst


def test_validation_duplicate_stop():
    stops = (Stop("a", 0, 0), Stop("a", 1, 1))
    inst = Instance(stops=stops, rail_lines=(), trips=(),
                    params=CostParams(bus_frequencies=()))
    with pytest.raises(InstanceValidationError, match="duplicate stop"):
        inst.validate()


def test_validation_trip_to_self():
    stops = (Stop("a", 0, 0), Stop("b", 1, 1))
    inst = Instance(stops=stops, rail_lines=(),
                    trips=(Trip("t", "a", "a", 1),),
                    params=CostParams(bus_frequencies=()))
    with pytest.raises(InstanceValidationError, match="origin equals destination"):
        inst.validate()


def test_validation_rail_line_membership_consistency():
    stops = (Stop("a", 0, 0), Stop("b", 1, 1))
    inst = Instance(stops=stops,
                    rail_lines=(RailLine("r", ("a", "b")),),
                    trips=(), params=CostParams(bus_frequencies=()))
    with pytest.raises(InstanceValidationError, match="rail_lines"):
        inst.validate()


def test_validation_leg_budget_floor():
    with pytest.raises(InstanceValidationError, match="max_arcs"):
        CostParams(max_arcs=1).validate()


def test_validation_hub_required_when_frequencies_offered():
    stops = (Stop("a", 0, 0), Stop("b", 1, 1))
    inst = Instance(stops=stops, rail_lines=(),
                    trips=(Trip("t", "a", "b", 1),),
                    params=CostParams(bus_frequencies=(12,)))
    with pytest.raises(InstanceValidationError, match="no hub"):
        inst.validate()


def test_with_max_arcs_replaces_budget():
    inst = generate_synthetic(seed=1, n_stops=6, n_hubs=2, n_rail_lines=0, n_trips=2)
    inst2 = with_max_arcs(inst, 4)
    assert inst2.params.max_arcs == 4
    assert inst2.trips == inst.trips


def test_unknown_params_field_rejected():
    with pytest.raises(InstanceParseError, match="unknown params field"):
        instance_from_dict({
            "stops": [], "rail_lines": [], "trips": [],
            "params": {"bogus": 3},
        })
