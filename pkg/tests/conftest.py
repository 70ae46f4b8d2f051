"""Shared builders for the test suite."""

import numpy as np
import pytest

from vecsim.catalog import Catalog, ContentItem
from vecsim.solver import SolveInstance


@pytest.fixture
def tiny_catalog() -> Catalog:
    return Catalog(
        [
            ContentItem("m1", "First", "drama", size_mb=40.0, fmt="MP4", rating=4.0),
            ContentItem("m2", "Second", "comedy", size_mb=30.0, fmt="H264", rating=3.5),
            ContentItem("m3", "Third", "thriller", size_mb=20.0, fmt="MP4", rating=4.5),
            ContentItem("m4", "Fourth", "western", size_mb=15.0, fmt="H264", rating=2.0),
        ]
    )


def make_random_instance(rng: np.random.Generator, max_free: int = 22) -> SolveInstance:
    """Small random instance: two cars, two RSU slots, 2-3 passengers
    per car, capability masks resampled until the free-binary count
    fits under the brute-force cap."""
    passengers, pair_of, pairs = [], [], []
    for c in range(2):
        rsu = int(rng.integers(1, 3))
        pairs.append((f"car-{c}", rsu))
        for p in range(int(rng.integers(2, 4))):
            passengers.append(f"c{c}p{p}")
            pair_of.append(c)
    U = len(passengers)
    while True:
        ub_h = (rng.random((U, 4)) < 0.6).astype(float)
        ub_rho = np.zeros((U, 2))
        ub_rho[:, 0] = ((rng.random(U) < 0.7) & (ub_h[:, 1] > 0)).astype(float)
        ub_rho[:, 1] = ((rng.random(U) < 0.7) & (ub_h[:, 3] > 0)).astype(float)
        if U + len(pairs) + ub_h.sum() + ub_rho.sum() <= max_free:
            break
    return SolveInstance(
        c_wifi=rng.uniform(1.0, 12.0, U),
        c_car_tc=rng.uniform(1.0, 12.0, U),
        c_rsu_dl=rng.uniform(1.0, 12.0, U),
        c_rsu_tc=rng.uniform(1.0, 12.0, U),
        c_dc=rng.uniform(5.0, 15.0, U),
        ub_h=ub_h,
        ub_rho=ub_rho,
        pair_of_request=np.array(pair_of),
        pairs=pairs,
        alloc_car_hz=np.full(U, 1e9),
        alloc_rsu_hz=np.full(U, 1e9),
        passenger_ids=passengers,
        content_ids=[f"m{u}" for u in range(U)],
        car_compute_hz={"car-0": 4e9, "car-1": 4e9},
        rsu_compute_hz={1: 4e9, 2: 4e9},
    )
