"""Route geometry, selection weights, and contact planning."""

import math

import pytest
from hypothesis import given, strategies as st

from vecsim.mobility import (
    CarState,
    RsuNode,
    WifiSpec,
    along_route_distance,
    connectivity,
    dwell_time,
    kmh_to_ms,
    perpendicular_distance,
    plan_route,
    selection_probability,
)

REL = 1e-9


def test_offset_decomposition_30_degrees():
    g, alpha = 1000.0, math.pi / 6
    assert perpendicular_distance(g, alpha) == pytest.approx(500.0, rel=REL)
    assert along_route_distance(g, alpha) == pytest.approx(500.0 * math.sqrt(3.0), rel=REL)


@given(
    g=st.floats(min_value=0.0, max_value=1e6, allow_nan=False),
    alpha=st.floats(min_value=0.0, max_value=math.pi / 2, allow_nan=False),
)
def test_offset_components_recover_distance(g, alpha):
    d_perp = perpendicular_distance(g, alpha)
    d_along = along_route_distance(g, alpha)
    assert d_perp**2 + d_along**2 == pytest.approx(g**2, rel=1e-9, abs=1e-6)


def test_selection_probability_shapes():
    assert selection_probability(0.0, 500.0) == 1.0
    assert selection_probability(100.0, 500.0) == pytest.approx(0.2, rel=REL)
    assert selection_probability(500.0, 500.0) == 0.0
    assert selection_probability(700.0, 500.0) == 0.0
    # complement variant reads nearer-is-likelier
    assert selection_probability(100.0, 500.0, "complement") == pytest.approx(0.8, rel=REL)
    assert selection_probability(0.0, 500.0, "complement") == 1.0
    with pytest.raises(ValueError):
        selection_probability(100.0, 500.0, "sideways")
    with pytest.raises(ValueError):
        selection_probability(-1.0, 500.0)
    with pytest.raises(ValueError):
        selection_probability(100.0, 0.0)


def test_connectivity_gate():
    assert connectivity(0.5, 300.0, 500.0) == 1
    assert connectivity(0.0, 300.0, 500.0) == 0
    assert connectivity(0.5, 600.0, 500.0) == 0


def test_dwell_time_full_diameter():
    # 2 * 500 m at 111.33 km/h
    assert dwell_time(500.0, kmh_to_ms(111.33)) == pytest.approx(32.33629749393695, rel=REL)
    with pytest.raises(ValueError):
        dwell_time(0.0, 10.0)
    with pytest.raises(ValueError):
        dwell_time(500.0, 0.0)


def _car(waypoints, speed=10.0):
    return CarState(
        car_id="t",
        waypoints=waypoints,
        leg_speeds_ms=[speed] * (len(waypoints) - 1),
        wifi=WifiSpec(),
    )


def test_plan_route_chord_entry():
    # RSU 300 m off a 4 km straight leg: enters at 2000 - sqrt(500^2 - 300^2)
    car = _car([(0.0, 0.0), (4000.0, 0.0)])
    rsu = RsuNode(1, 2000.0, 300.0, coverage_m=500.0)
    plan = plan_route(car, [rsu])
    assert len(plan.entries) == 1
    e = plan.entries[0]
    assert e.entry_time_s == pytest.approx(160.0, rel=REL)
    assert e.d_perp_m == pytest.approx(300.0, rel=REL)
    assert e.rho == pytest.approx(0.6, rel=REL)
    assert e.q == 1
    assert e.dwell_s == pytest.approx(100.0, rel=REL)
    assert plan.total_time_s == pytest.approx(400.0, rel=REL)


def test_plan_route_start_inside_coverage():
    # leg starts at the RSU position, so contact begins at t = 0
    car = _car([(0.0, 0.0), (4000.0, 0.0)])
    plan = plan_route(car, [RsuNode(1, 0.0, 0.0, coverage_m=500.0)])
    assert len(plan.entries) == 1
    assert plan.entries[0].entry_time_s == 0.0


def test_plan_route_skips_unreachable():
    car = _car([(0.0, 0.0), (4000.0, 0.0)])
    plan = plan_route(
        car,
        [
            RsuNode(1, 2000.0, 800.0, coverage_m=500.0),   # beyond the offset
            RsuNode(2, 9000.0, 0.0, coverage_m=500.0),     # past the leg end
            RsuNode(3, 1000.0, 0.0, coverage_m=500.0),
        ],
    )
    assert plan.rsu_ids() == [3]


def test_plan_route_orders_by_entry():
    car = _car([(0.0, 0.0), (4000.0, 0.0)])
    plan = plan_route(
        car,
        [RsuNode(1, 3000.0, 0.0, coverage_m=400.0), RsuNode(2, 1000.0, 0.0, coverage_m=400.0)],
    )
    assert plan.rsu_ids() == [2, 1]
    times = [e.entry_time_s for e in plan.entries]
    assert times == sorted(times)
    assert times[0] < times[1]


def test_plan_route_rejects_simultaneous_entries():
    car = _car([(0.0, 0.0), (4000.0, 0.0)])
    colocated = [RsuNode(1, 2000.0, 0.0, coverage_m=500.0), RsuNode(2, 2000.0, 0.0, coverage_m=500.0)]
    with pytest.raises(ValueError, match="strictly increasing"):
        plan_route(car, colocated)


def test_plan_route_download_feasibility():
    car = _car([(0.0, 0.0), (4000.0, 0.0)])
    rsu = [RsuNode(1, 2000.0, 0.0, coverage_m=500.0)]
    # dwell is 100 s at 10 m/s; 600 Mb at 20 Mbps needs 30 s
    ok = plan_route(car, rsu, download_size_mb=600.0, download_rate_mbps=20.0)
    assert ok.entries[0].download_feasible is True
    slow = plan_route(car, rsu, download_size_mb=6000.0, download_rate_mbps=20.0)
    assert slow.entries[0].download_feasible is False


def test_kmh_conversion():
    assert kmh_to_ms(3.6) == pytest.approx(1.0, rel=1e-12)
