"""Cache stores, admission, the service chain, and transcode accounting."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vecsim.caching import (
    CacheStore,
    ServiceTier,
    TranscodeTask,
    admit_car,
    admit_rsu,
    area_content_set,
    check_constraints,
    compute_allocation,
    lookup,
    transcode_time_car_s,
    transcode_time_rsu_s,
)
from vecsim.mlp import AreaContentProbabilities, PredictionRow
from vecsim.recommend import Recommendation, RecommendedItem

REL = 1e-9


def test_store_capacity_accounting():
    store = CacheStore("car", 100.0)
    assert store.add("m1", "MP4", 60.0)
    assert store.used_mb == 60.0
    assert not store.add("m2", "MP4", 50.0)  # would overflow
    assert store.add("m2", "MP4", 40.0)
    assert store.used_mb == 100.0
    # re-adding an existing entry is a no-op success
    assert store.add("m1", "MP4", 60.0)
    assert store.used_mb == 100.0
    with pytest.raises(ValueError):
        store.add("m3", "MP4", -1.0)
    with pytest.raises(ValueError):
        CacheStore("car", -5.0)


def test_store_format_queries():
    store = CacheStore("car", 100.0)
    store.add("m1", "MP4", 10.0)
    assert store.has_exact("m1", "MP4")
    assert not store.has_exact("m1", "H264")
    assert store.other_format("m1", "H264") == "MP4"
    assert store.other_format("m1", "MP4") is None
    assert store.other_format("m2", "MP4") is None
    assert store.content_ids() == {"m1"}


def _recommendation(ids):
    items = [
        RecommendedItem(cid, (0, "joy", "female"), rank, 0.5, 3.0)
        for rank, cid in enumerate(ids, start=1)
    ]
    return Recommendation("car", 1, {}, items, [], [])


def test_admit_car_stops_at_first_misfit(tiny_catalog):
    # sizes 40, 30, 20, 15 against capacity 75: the 20 Mb item overflows
    # and admission stops there even though the 15 Mb one would fit
    rec = _recommendation(["m1", "m2", "m3", "m4"])
    result = admit_car(rec, tiny_catalog, capacity_mb=75.0)
    assert result.admitted == ["m1", "m2"]
    assert result.skipped == ["m3", "m4"]
    assert result.store.used_mb == 70.0
    total = sum(tiny_catalog.get(c).size_mb for c in result.admitted)
    assert total <= 75.0


def test_admit_car_takes_everything_with_room(tiny_catalog):
    rec = _recommendation(["m1", "m2", "m3", "m4"])
    result = admit_car(rec, tiny_catalog, capacity_mb=1000.0)
    assert result.admitted == ["m1", "m2", "m3", "m4"]
    assert result.skipped == []


def _area_table():
    rows = [
        PredictionRow("u1", 30.0, "female", "joy", "drama", "mX", 4.0, 1, (0.9, 0.1)),
        PredictionRow("u2", 30.0, "female", "joy", "drama", "mY", 5.0, 1, (0.9, 0.1)),
        PredictionRow("u3", 30.0, "female", "joy", "drama", "mZ", 3.0, 1, (0.2, 0.8)),
    ]
    return AreaContentProbabilities(rows, 2, {})


def test_area_content_set_partition_and_order():
    table = _area_table()
    # equal probabilities for mX and mY: mean rating decides; mZ belongs to area 2
    assert area_content_set(table, 1) == ["mY", "mX"]
    assert area_content_set(table, 2) == ["mZ"]


def test_admit_rsu_skips_unknown_contents():
    from vecsim.catalog import Catalog, ContentItem

    catalog = Catalog([ContentItem("mX", "X", "drama", 50.0, "MP4", 4.0)])
    result = admit_rsu(_area_table(), 1, catalog, capacity_mb=500.0)
    # mY is not in the catalog and is ignored rather than admitted
    assert result.admitted == ["mX"]


def _stores(car_items=(), rsu_items=()):
    car = CacheStore("car", 1e6)
    for cid, fmt in car_items:
        car.add(cid, fmt, 10.0)
    rsu = CacheStore("rsu", 1e6)
    for cid, fmt in rsu_items:
        rsu.add(cid, fmt, 10.0)
    return car, rsu


def test_lookup_walks_the_chain_in_order():
    car, rsu = _stores([("m1", "MP4"), ("m2", "H264")], [("m3", "MP4"), ("m4", "H264")])
    assert lookup(car, rsu, "m1", "MP4").tier == ServiceTier.CAR_CACHE
    hit = lookup(car, rsu, "m2", "MP4")
    assert hit.tier == ServiceTier.CAR_TRANSCODE
    assert hit.source_fmt == "H264"
    assert (hit.h_car_transcode, hit.rho_car) == (1, 1)
    assert lookup(car, rsu, "m3", "MP4").tier == ServiceTier.RSU_CACHE
    hit = lookup(car, rsu, "m4", "MP4")
    assert hit.tier == ServiceTier.RSU_TRANSCODE
    assert (hit.h_rsu_transcode, hit.rho_rsu) == (1, 1)
    assert lookup(car, rsu, "m9", "MP4").tier == ServiceTier.DATA_CENTER


def test_lookup_compute_gates_and_missing_rsu():
    car, rsu = _stores([("m2", "H264")], [("m4", "H264")])
    # no car compute: the car-transcode path escalates
    assert lookup(car, rsu, "m2", "MP4", car_compute_ok=False).tier == ServiceTier.DATA_CENTER
    assert lookup(car, rsu, "m4", "MP4", rsu_compute_ok=False).tier == ServiceTier.DATA_CENTER
    assert lookup(car, None, "m4", "MP4").tier == ServiceTier.DATA_CENTER


def test_lookup_indicators_are_one_hot():
    car, rsu = _stores([("m1", "MP4")], [("m1", "MP4")])
    hit = lookup(car, rsu, "m1", "MP4")
    flags = (hit.h_car_hit, hit.h_car_transcode, hit.h_rsu_hit, hit.h_rsu_transcode)
    assert sum(flags) == 1
    assert hit.is_edge
    assert not lookup(car, rsu, "m9", "MP4").is_edge


def test_compute_allocation_proportional():
    tasks = [TranscodeTask("a", 10.0, cycles_per_bit=100.0), TranscodeTask("b", 99.0, cycles_per_bit=200.0)]
    alloc = compute_allocation(tasks, 3e9)
    # weights are active * cycles_per_bit, independent of size
    assert alloc["a"] == pytest.approx(1e9, rel=REL)
    assert alloc["b"] == pytest.approx(2e9, rel=REL)
    assert sum(alloc.values()) == pytest.approx(3e9, rel=REL)


def test_compute_allocation_edge_cases():
    assert compute_allocation([], 1e9) == {}
    idle = compute_allocation([TranscodeTask("a", 10.0, active=0.0)], 1e9)
    assert idle == {"a": 0.0}
    with pytest.raises(ValueError):
        compute_allocation([TranscodeTask("a", 10.0)], 0.0)


def test_transcode_time_car():
    # 100 cycles/bit * 317 Mb at 3.6 GHz
    t = transcode_time_car_s(1, 1.0, 1.0, 100.0, 317.0, 3.6e9)
    assert t == pytest.approx(8.805555555555555, rel=REL)
    assert transcode_time_car_s(0, 1.0, 1.0, 100.0, 317.0, 3.6e9) == 0.0
    assert transcode_time_car_s(1, 1.0, 0.0, 100.0, 317.0, 3.6e9) == 0.0
    with pytest.raises(ValueError):
        transcode_time_car_s(1, 1.0, 1.0, 100.0, 317.0, 0.0)
    with pytest.raises(ValueError):
        transcode_time_car_s(1, 1.0, 1.0, 0.0, 317.0, 3.6e9)


def test_transcode_time_rsu_respects_car_side():
    t = transcode_time_rsu_s(0.0, 1, 1.0, 1.0, 100.0, 317.0, 3.6e9)
    assert t == pytest.approx(8.805555555555555, rel=REL)
    # the car already transcoded: the RSU does nothing
    assert transcode_time_rsu_s(1.0, 1, 1.0, 1.0, 100.0, 317.0, 3.6e9) == 0.0


@given(
    weights=st.lists(st.floats(min_value=0.01, max_value=10.0), min_size=1, max_size=8),
    budget=st.floats(min_value=1.0, max_value=1e10),
)
def test_compute_allocation_exhausts_budget(weights, budget):
    tasks = [TranscodeTask(f"t{i}", 10.0, cycles_per_bit=w) for i, w in enumerate(weights)]
    alloc = compute_allocation(tasks, budget)
    assert sum(alloc.values()) == pytest.approx(budget, rel=1e-9)
    assert all(v >= 0 for v in alloc.values())


def test_check_constraints_happy_path():
    car, rsu = _stores([("m1", "MP4")], [("m2", "MP4")])
    hits = [lookup(car, rsu, "m1", "MP4"), lookup(car, rsu, "m2", "MP4")]
    report = check_constraints(
        hits,
        car_store=car,
        rsu_stores={1: rsu},
        car_compute_used_hz=0.0,
        car_compute_hz=3.6e9,
        rsu_compute_used_hz={1: 0.0},
        rsu_compute_hz={1: 3.6e9},
    )
    assert report.ok
    assert report.car_cache_slack_mb == pytest.approx(1e6 - 10.0)
    assert report.format_exclusive_ok and report.location_exclusive_ok and report.service_chain_ok


def test_check_constraints_flags_overuse():
    car, rsu = _stores()
    report = check_constraints(
        [],
        car_store=car,
        rsu_stores={1: rsu},
        car_compute_used_hz=5e9,
        car_compute_hz=3.6e9,
        rsu_compute_used_hz={1: 0.0},
        rsu_compute_hz={1: 3.6e9},
    )
    assert not report.ok
    assert any("car compute" in v for v in report.violations)
