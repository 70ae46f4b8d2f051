"""Clustering, the per-area hierarchy, and top-k selection."""

import itertools
import json

import numpy as np
import pytest

from vecsim.catalog import EMOTIONS, GENDERS, Passenger
from vecsim.mlp import AreaContentProbabilities, PredictionRow
from vecsim.recommend import (
    ClusterHierarchy,
    assign_passenger,
    build_hierarchy,
    export_hierarchy,
    kmeans,
    kmeans_objective,
    recommend,
)


def _exhaustive_best_sse(points, k):
    """Minimum within-cluster squared distance over every label assignment."""
    best = float("inf")
    for labels in itertools.product(range(k), repeat=len(points)):
        if len(set(labels)) != k:
            continue
        sse = 0.0
        for j in range(k):
            grp = [p for p, l in zip(points, labels) if l == j]
            m = sum(grp) / len(grp)
            sse += sum((p - m) ** 2 for p in grp)
        best = min(best, sse)
    return best


def test_kmeans_matches_exhaustive_two_clusters():
    pts = np.array([0.0, 1.0, 9.0, 10.0, 20.0])
    labels, centroids = kmeans(pts, 2, seed=0)
    assert kmeans_objective(pts, labels, centroids) == pytest.approx(
        _exhaustive_best_sse(pts.tolist(), 2), rel=1e-9
    )
    # the known optimal split: {0, 1} vs {9, 10, 20}
    assert labels[0] == labels[1]
    assert labels[2] == labels[3] == labels[4]
    assert labels[0] != labels[2]


def test_kmeans_matches_exhaustive_three_clusters():
    pts = np.array([1.0, 2.0, 10.0, 11.0, 30.0, 31.0])
    labels, centroids = kmeans(pts, 3, seed=4)
    assert kmeans_objective(pts, labels, centroids) == pytest.approx(
        _exhaustive_best_sse(pts.tolist(), 3), rel=1e-9
    )


def test_kmeans_deterministic_and_validated():
    pts = np.random.default_rng(8).uniform(0, 80, size=40)
    l1, c1 = kmeans(pts, 5, seed=13)
    l2, c2 = kmeans(pts, 5, seed=13)
    assert np.array_equal(l1, l2)
    assert np.array_equal(c1, c2)
    with pytest.raises(ValueError):
        kmeans(pts, 0, seed=0)
    with pytest.raises(ValueError):
        kmeans(pts, 41, seed=0)


def test_kmeans_k_equals_n():
    pts = np.array([3.0, 7.0, 11.0])
    labels, centroids = kmeans(pts, 3, seed=0)
    assert sorted(labels.tolist()) == [0, 1, 2]
    assert kmeans_objective(pts, labels, centroids) == 0.0


def _table(n_areas=2):
    """Hand-built prediction table for area 1: two age groups, two
    contents with distinct mean probabilities and ratings."""
    rows = []
    specs = [
        # (user, age, gender, emotion, content, rating, p_area1)
        ("u1", 10.0, "female", "joy", "mA", 5.0, 0.9),
        ("u2", 12.0, "female", "joy", "mB", 4.0, 0.8),
        ("u3", 11.0, "female", "joy", "mA", 4.0, 0.7),
        ("u4", 60.0, "male", "sad", "mC", 3.0, 0.6),
        ("u5", 62.0, "male", "sad", "mD", 2.0, 0.6),
    ]
    for user, age, gender, emotion, cid, rating, p1 in specs:
        rows.append(
            PredictionRow(
                user_id=user,
                age=age,
                gender=gender,
                emotion=emotion,
                genre="drama",
                content_id=cid,
                rating=rating,
                area=1,
                probs=(p1, 1.0 - p1),
            )
        )
    return AreaContentProbabilities(rows, n_areas, {"gender": 0, "emotion": 0, "genre": 0})


def test_hierarchy_age_clusters_and_leaf_ranking():
    h = build_hierarchy(_table(), area=1, age_clusters=2, seed=0)
    # centroids relabeled ascending: young cluster first
    assert h.age_centroids == sorted(h.age_centroids)
    assert h.age_centroids[0] == pytest.approx(11.0)
    assert h.age_centroids[1] == pytest.approx(61.0)
    young = h.leaf(0, "joy", "female")
    assert [c.content_id for c in young.contents] == ["mA", "mB"]
    # mean prob for mA = 0.8 beats mB = 0.8? no: (0.9 + 0.7)/2 = 0.8 = mB's 0.8,
    # so the rating mean (4.5 vs 4.0) breaks the tie
    assert young.contents[0].probability == pytest.approx(0.8)
    assert young.contents[0].rating == pytest.approx(4.5)
    old = h.leaf(1, "sad", "male")
    # equal probabilities 0.6: higher mean rating first
    assert [c.content_id for c in old.contents] == ["mC", "mD"]


def test_hierarchy_lowers_cluster_count_when_ages_collide():
    rows = [
        PredictionRow(f"u{i}", 30.0, "female", "joy", "drama", "mA", 3.0, 1, (1.0,))
        for i in range(6)
    ]
    table = AreaContentProbabilities(rows, 1, {})
    h = build_hierarchy(table, area=1, age_clusters=4, seed=0)
    assert h.n_age_clusters == 1
    assert any("lowered age clusters" in f for f in h.flags)


def test_hierarchy_decade_mode():
    h = build_hierarchy(_table(), area=1, age_clusters=2, seed=0, age_mode="decade")
    assert len(h.age_centroids) == 8
    # ages 10-12 fall in the second decade bin, 60-62 in the seventh
    key_young = assign_passenger(h, Passenger("p", 11.0, "female", "joy"))
    assert key_young[0] == 1
    key_old = assign_passenger(h, Passenger("p", 61.0, "male", "sad"))
    assert key_old[0] == 6


def test_hierarchy_rejects_unknown_modes():
    with pytest.raises(ValueError):
        build_hierarchy(_table(), area=1, age_mode="zodiac")
    with pytest.raises(ValueError):
        build_hierarchy(_table(), area=9)


def test_assign_passenger_nearest_centroid_and_fallback():
    h = build_hierarchy(_table(), area=1, age_clusters=2, seed=0)
    key = assign_passenger(h, Passenger("p1", 15.0, "female", "joy"))
    assert key == (0, "joy", "female")
    # no "fear" members anywhere in the young cluster: falls back to the
    # largest populated emotion group
    key2 = assign_passenger(h, Passenger("p2", 15.0, "female", "fear"))
    assert key2 == (0, "joy", "female")
    with pytest.raises(ValueError):
        assign_passenger(h, Passenger("p3", 15.0, "robot", "joy"))
    with pytest.raises(ValueError):
        assign_passenger(h, Passenger("p4", 15.0, "male", "bored"))


def test_recommend_unions_and_dedups():
    h = build_hierarchy(_table(), area=1, age_clusters=2, seed=0)
    passengers = [
        Passenger("p1", 10.0, "female", "joy"),
        Passenger("p2", 14.0, "female", "joy"),   # same leaf: no duplicates
        Passenger("p3", 61.0, "male", "sad"),
    ]
    rec = recommend(h, passengers, top_k=2, car_id="bus")
    assert rec.car_id == "bus"
    assert rec.area == 1
    ids = rec.content_ids()
    assert sorted(ids) == ["mA", "mB", "mC", "mD"]
    # rank-1 items precede rank-2 items
    assert {ids[0], ids[1]} == {"mA", "mC"}
    assert rec.assignments["p1"] == (0, "joy", "female")
    assert rec.female_set == ["mA", "mB"]
    assert rec.male_set == ["mC", "mD"]


def test_recommend_top_k_truncates():
    h = build_hierarchy(_table(), area=1, age_clusters=2, seed=0)
    rec = recommend(h, [Passenger("p1", 10.0, "female", "joy")], top_k=1)
    assert rec.content_ids() == ["mA"]
    with pytest.raises(ValueError):
        recommend(h, [], top_k=0)


def test_export_hierarchy(tmp_path):
    h = build_hierarchy(_table(), area=1, age_clusters=2, seed=0)
    path = tmp_path / "hierarchy.json"
    export_hierarchy(h, path)
    doc = json.loads(path.read_text())
    assert doc["area"] == 1
    assert len(doc["age_centroids"]) == 2
