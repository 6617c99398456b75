import dataclasses

import pytest

from odmts import instgen
from odmts.design import (
    ItineraryError,
    build_design_model,
    bus_lines,
    commodity_itinerary,
    line_open_cost,
    line_use_cost,
    load_solution,
    rider_minutes,
    save_solution,
    solve_design,
)
from odmts.routegen import (
    compute_hub_sets,
    direct_cost,
    enumerate_dropoff_routes,
    enumerate_pickup_routes,
)

from conftest import euclid_instance, mk_commodity, mk_instance
from oracles import design_oracle


def line_cost_instance(alpha=1e-3):
    time = [
        [0.0, 10.0, 8.0],
        [10.0, 0.0, 8.0],
        [8.0, 8.0, 0.0],
    ]
    return mk_instance(["h", "l", "x"], ["h", "l"], time, commodities=(), alpha=alpha)


def test_line_open_cost_formula():
    inst = line_cost_instance()
    # (1 - alpha) * b * n * D with D = 10, b = 3.75, n = 16.
    assert line_open_cost("h", "l", inst) == pytest.approx(0.999 * 3.75 * 16 * 10, abs=1e-9)
    assert line_open_cost("h", "l", inst) == pytest.approx(599.40, abs=1e-9)


def test_line_use_cost_formula():
    time = [
        [0.0, 8.0, 8.0],
        [8.0, 0.0, 8.0],
        [8.0, 8.0, 0.0],
    ]
    inst = mk_instance(["h", "l", "x"], ["h", "l"], time)
    r = mk_commodity("r", "x", "h", 0.0, passengers=2)
    assert line_use_cost(r, "h", "l", inst) == pytest.approx(2 * 0.001 * (8 + 7.5), abs=1e-9)
    assert line_use_cost(r, "h", "l", inst) == pytest.approx(0.031, abs=1e-9)


def test_line_open_cost_vanishes_at_alpha_one():
    inst = line_cost_instance(alpha=1.0)
    assert line_open_cost("h", "l", inst) == 0.0


def test_line_costs_reject_non_hubs():
    inst = line_cost_instance()
    with pytest.raises(ValueError):
        line_open_cost("h", "x", inst)
    with pytest.raises(ValueError):
        line_use_cost(mk_commodity("r", "x", "h", 0.0), "x", "l", inst)


def enumerated(inst):
    hs = compute_hub_sets(inst)
    return enumerate_pickup_routes(inst, hs), enumerate_dropoff_routes(inst, hs)


def test_variable_count_small_model():
    points = {"a": (0, 0), "b": (10, 0), "h1": (2, 1), "h2": (8, 1)}
    r = mk_commodity("r", "a", "b", 0.0)
    inst = euclid_instance(points, ["h1", "h2"], (r,), capacity=1, first_hubs=1, last_hubs=1)
    om, op = enumerated(inst)
    dm = build_design_model(inst, om, op)
    # 2 lines -> 2 z; 2 y for the single commodity; 1 pickup + 1 dropoff x; 1 eta.
    assert len(bus_lines(inst)) == 2
    assert len(dm.model.variables) == 2 * (1 + 1) + 2 + 1 == 7


def test_empty_commodity_set_closes_everything():
    points = {"h1": (0, 0), "h2": (5, 0), "x": (1, 1)}
    inst = euclid_instance(points, ["h1", "h2"], ())
    ds = solve_design(inst, {}, {})
    assert ds.objective == pytest.approx(0.0)
    assert ds.opened_lines == ()


def direct_wins_instance():
    points = {"a": (0, 0), "b": (20, 0), "h1": (0, 10), "h2": (10, 10)}
    r = mk_commodity("r", "a", "b", 0.0)
    return euclid_instance(points, ["h1", "h2"], (r,), capacity=1, first_hubs=2, last_hubs=2)


def test_single_commodity_goes_direct():
    inst = direct_wins_instance()
    om, op = enumerated(inst)
    ds = solve_design(inst, om, op)
    assert ds.direct == {"r"}
    assert ds.opened_lines == ()
    assert ds.objective == pytest.approx(20.0, abs=1e-9)
    assert ds.objective == pytest.approx(design_oracle(inst, om, op), abs=1e-6)


def bus_corridor_instance(n_commodities=20):
    points = {"a": (0.0, 0.0), "b": (24.0, 0.0), "h1": (2.0, 0.0), "h2": (22.0, 0.0)}
    comms = tuple(
        mk_commodity(f"r{i:02d}", "a", "b", 0.0) for i in range(n_commodities)
    )
    return euclid_instance(
        points,
        ["h1", "h2"],
        comms,
        bus_cost=0.5,
        bus_trips=1.0,
        capacity=1,
        first_hubs=1,
        last_hubs=1,
    )


def test_corridor_opens_balanced_line_pair():
    inst = bus_corridor_instance()
    om, op = enumerated(inst)
    ds = solve_design(inst, om, op)
    assert set(ds.opened_lines) == {("h1", "h2"), ("h2", "h1")}
    assert not ds.direct
    legs = commodity_itinerary(ds, "r00", inst)
    assert [leg.kind for leg in legs] == ["pickup", "bus", "dropoff"]
    assert legs[1].line == ("h1", "h2")
    assert ds.objective == pytest.approx(design_oracle(inst, om, op), abs=1e-6)


def test_alpha_one_prefers_direct_everywhere():
    points = {"a": (0, 0), "b": (20, 0), "c": (1, 2), "h1": (10, 5), "h2": (10, -5)}
    comms = (mk_commodity("r1", "a", "b", 0.0), mk_commodity("r2", "c", "b", 1.0))
    inst = euclid_instance(points, ["h1", "h2"], comms, alpha=1.0, capacity=2,
                           first_hubs=2, last_hubs=2)
    om, op = enumerated(inst)
    ds = solve_design(inst, om, op)
    assert ds.direct == {"r1", "r2"}
    expected = sum(c.passengers * inst.time(c.origin, c.destination) for c in comms)
    assert ds.objective == pytest.approx(expected, abs=1e-9)


def shared_hub_instance():
    points = {
        "a1": (0.0, 0.0),
        "a2": (0.5, 0.0),
        "h": (10.0, 0.0),
        "b1": (19.5, 0.0),
        "b2": (20.0, 0.0),
    }
    comms = (mk_commodity("r1", "a1", "b1", 0.0), mk_commodity("r2", "a2", "b2", 0.0))
    return euclid_instance(points, ["h"], comms, capacity=2, first_hubs=1, last_hubs=1)


def test_shared_routes_through_one_hub_no_bus():
    inst = shared_hub_instance()
    om, op = enumerated(inst)
    ds = solve_design(inst, om, op)
    assert not ds.direct
    assert ds.opened_lines == ()
    for cid in ("r1", "r2"):
        legs = commodity_itinerary(ds, cid, inst)
        assert [leg.kind for leg in legs] == ["pickup", "dropoff"]
        assert legs[0].route.hub == "h" and legs[1].route.hub == "h"
        assert len(legs[0].route.commodities) == 2
    assert ds.objective == pytest.approx(design_oracle(inst, om, op), abs=1e-6)


def test_breakdown_matches_objective():
    inst = bus_corridor_instance(6)
    om, op = enumerated(inst)
    ds = solve_design(inst, om, op)
    b = ds.breakdown
    assert ds.objective == pytest.approx(
        b.bus_fixed + b.route_cost + b.direct_cost + b.bus_inconvenience, abs=1e-6
    )
    for h in inst.hubs:
        assert sum(1 for a, _ in ds.opened_lines if a == h) == sum(
            1 for _, b_ in ds.opened_lines if b_ == h
        )


def test_direct_itinerary_shape():
    inst = direct_wins_instance()
    om, op = enumerated(inst)
    ds = solve_design(inst, om, op)
    legs = commodity_itinerary(ds, "r", inst)
    assert len(legs) == 1 and legs[0].kind == "direct"
    assert rider_minutes(ds, "r", inst) == pytest.approx(20.0)


def test_rider_minutes_decomposition():
    inst = bus_corridor_instance(8)
    om, op = enumerated(inst)
    ds = solve_design(inst, om, op)
    legs = commodity_itinerary(ds, "r00", inst)
    pickup, bus, dropoff = legs
    expected = (
        pickup.route.xi_of("r00")
        + inst.time(*bus.line)
        + inst.cost.bus_wait
        + dropoff.route.xi_of("r00")
    )
    assert rider_minutes(ds, "r00", inst) == pytest.approx(expected, abs=1e-9)


def test_itinerary_error_on_branching_legs():
    inst = bus_corridor_instance(4)
    om, op = enumerated(inst)
    ds = solve_design(inst, om, op)
    broken = dataclasses.replace(
        ds,
        bus_legs={**ds.bus_legs, "r00": (("h1", "h2"), ("h1", "h2"))[:1] + (("h2", "h1"),)},
    )
    with pytest.raises(ItineraryError):
        commodity_itinerary(broken, "r00", inst)


def test_alpha_zero_itineraries_extract():
    # Free bus legs invite cost-neutral cycles; the tie-break pass must keep
    # itineraries simple.
    inst = bus_corridor_instance(6)
    inst = dataclasses.replace(inst, cost=dataclasses.replace(inst.cost, alpha=0.0))
    om, op = enumerated(inst)
    ds = solve_design(inst, om, op)
    for c in inst.commodities:
        legs = commodity_itinerary(ds, c.id, inst)
        assert legs[0].kind in ("direct", "pickup")


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_small_instances_match_exhaustive_oracle(seed):
    inst = instgen.generate(
        seed=seed, n_nodes=7, n_hubs=2 + seed % 2, n_commodities=4, horizon=(0.0, 6.0)
    )
    inst = dataclasses.replace(
        inst,
        routing=dataclasses.replace(
            inst.routing, shuttle_capacity=2, first_hub_count=2, last_hub_count=2
        ),
    )
    om, op = enumerated(inst)
    ds = solve_design(inst, om, op)
    assert ds.objective == pytest.approx(design_oracle(inst, om, op), abs=1e-6)


@pytest.mark.parametrize("seed", [500, 501, 504])
def test_oracle_equality_under_heavy_sharing(seed):
    # Every departure in one consolidation window, so most commodities are
    # coupled through shared-route candidates.
    inst = instgen.generate(
        seed=seed, n_nodes=6, n_hubs=2, n_commodities=5, horizon=(0.0, 2.9), side_km=6.0
    )
    inst = dataclasses.replace(
        inst,
        routing=dataclasses.replace(
            inst.routing, shuttle_capacity=2, first_hub_count=2, last_hub_count=2
        ),
    )
    om, op = enumerated(inst)
    shared = {
        w.key for routes in (*om.values(), *op.values()) for w in routes
        if len(w.commodities) > 1
    }
    assert len(shared) >= 5
    ds = solve_design(inst, om, op)
    assert ds.objective == pytest.approx(design_oracle(inst, om, op), abs=1e-6)


def test_objective_monotone_in_capacity():
    base = instgen.generate(seed=21, n_nodes=10, n_hubs=2, n_commodities=8, horizon=(0.0, 6.0))
    objectives = []
    for cap in (1, 2, 3):
        inst = dataclasses.replace(
            base,
            routing=dataclasses.replace(
                base.routing, shuttle_capacity=cap, first_hub_count=2, last_hub_count=2
            ),
        )
        om, op = enumerated(inst)
        objectives.append(solve_design(inst, om, op).objective)
    assert objectives[0] >= objectives[1] - 1e-6
    assert objectives[1] >= objectives[2] - 1e-6


def test_objective_bounded_by_all_direct():
    inst = instgen.generate(seed=22, n_nodes=9, n_hubs=3, n_commodities=6, horizon=(0.0, 12.0))
    om, op = enumerated(inst)
    ds = solve_design(inst, om, op)
    assert ds.objective <= sum(direct_cost(c, inst) for c in inst.commodities) + 1e-6


def test_solution_round_trip(tmp_path):
    inst = bus_corridor_instance(5)
    om, op = enumerated(inst)
    ds = solve_design(inst, om, op)
    path = str(tmp_path / "design.json")
    save_solution(ds, path)
    back = load_solution(path, inst)
    assert back.objective == pytest.approx(ds.objective)
    assert back.opened_lines == ds.opened_lines
    assert back.direct == ds.direct
    assert {w.key for w in back.selected_routes} == {w.key for w in ds.selected_routes}


def test_route_with_unknown_commodity_rejected():
    inst = shared_hub_instance()
    om, op = enumerated(inst)
    rogue = mk_commodity("ghost", "a1", "b1", 0.0)
    from odmts.routegen import materialize_pickup

    bad = materialize_pickup((rogue,), "h", inst)
    with pytest.raises(ValueError, match="ghost"):
        build_design_model(inst, {"ghost": [bad]}, op)
