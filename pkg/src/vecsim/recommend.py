"""Passenger clustering and per-cluster content recommendation.

Consumers of an area are grouped age -> emotion -> gender; each leaf keeps
a ranked content list.  Passengers are matched to a leaf and receive its
top entries, with female- and male-leaf picks tracked separately.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .catalog import EMOTIONS, GENDERS, Catalog, Passenger
from .mlp import AreaContentProbabilities, PredictionRow


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 100,
    n_init: int = 8,
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with greedy (k-means++ style) seeding and restarts.

    Returns (labels, centroids).  The within-cluster squared-distance
    objective is nonincreasing across Lloyd iterations; an emptied cluster
    is re-seeded to the point farthest from its centroid.  Restarts keep
    the lowest-objective run, so small 1-D instances land on the exact
    optimal partition.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = len(pts)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds number of points {n}")
    if k == n:
        return np.arange(n), pts.copy()

    rng = np.random.default_rng(seed)
    best_labels, best_centroids, best_obj = None, None, np.inf
    for _ in range(n_init):
        centroids = _seed_centroids(pts, k, rng)
        labels = None
        for _ in range(max_iter):
            d2 = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
            new_labels = d2.argmin(axis=1)
            for j in range(k):
                mask = new_labels == j
                if mask.any():
                    centroids[j] = pts[mask].mean(axis=0)
                else:
                    # re-seed an empty cluster to the globally farthest point
                    far = d2.min(axis=1).argmax()
                    centroids[j] = pts[far]
                    new_labels[far] = j
            if labels is not None and np.array_equal(labels, new_labels):
                break
            labels = new_labels
        obj = float(((pts - centroids[labels]) ** 2).sum())
        if obj < best_obj - 1e-12:
            best_labels, best_centroids, best_obj = labels, centroids.copy(), obj
    return best_labels, best_centroids


def _seed_centroids(pts: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: subsequent centers drawn by squared distance."""
    first = int(rng.integers(0, len(pts)))
    centers = [pts[first]]
    for _ in range(k - 1):
        d2 = np.min(((pts[:, None, :] - np.array(centers)[None, :, :]) ** 2).sum(axis=2), axis=1)
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(0, len(pts)))
        else:
            idx = int(rng.choice(len(pts), p=d2 / total))
        centers.append(pts[idx])
    return np.array(centers, dtype=float)


def kmeans_objective(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return float(((pts - centroids[labels]) ** 2).sum())


@dataclass(frozen=True)
class RankedContent:
    content_id: str
    probability: float
    rating: float
    rank: int  # 1-based position in its leaf


@dataclass
class Leaf:
    age_cluster: int
    emotion: str
    gender: str
    contents: list[RankedContent] = field(default_factory=list)

    @property
    def key(self) -> tuple[int, str, str]:
        return (self.age_cluster, self.emotion, self.gender)


@dataclass
class ClusterHierarchy:
    """Age clusters (indexed by ascending centroid), then exact emotion
    groups, then a binary gender split.  Leaves may be empty."""

    area: int
    age_centroids: list[float]          # ascending
    age_mode: str                       # "kmeans" or "decade"
    leaves: dict[tuple[int, str, str], Leaf]
    member_counts: dict[tuple[int, str, str], int]
    flags: list[str] = field(default_factory=list)

    @property
    def n_age_clusters(self) -> int:
        return len(self.age_centroids)

    def leaf(self, age_cluster: int, emotion: str, gender: str) -> Leaf:
        return self.leaves[(age_cluster, emotion, gender)]


DECADE_EDGES = [0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0]


def _decade_bin(age: float) -> int:
    """Decade bins 0..7 covering [0, 80); out-of-range ages clamp."""
    return int(np.clip(age // 10, 0, 7))


def build_hierarchy(
    table: AreaContentProbabilities,
    area: int,
    age_clusters: int = 8,
    seed: int = 0,
    age_mode: str = "kmeans",
) -> ClusterHierarchy:
    """Build the area's recommendation tree from its consumer records.

    Leaf content lists are ranked by (mean predicted probability for the
    area, mean record rating) descending, then content id ascending.
    Fewer distinct ages than requested clusters lowers the cluster count
    and records a flag.
    """
    rows = table.rows_for_area(area)
    if not rows:
        raise ValueError(f"no records for area {area}")
    if age_mode not in ("kmeans", "decade"):
        raise ValueError(f"unknown age_mode {age_mode!r}")

    flags: list[str] = []
    ages = np.array([r.age for r in rows])
    if age_mode == "decade":
        labels = np.array([_decade_bin(a) for a in ages])
        centroids = [e + 5.0 for e in DECADE_EDGES[:-1]]
        order_of = {j: j for j in range(8)}
    else:
        k = age_clusters
        distinct = len(set(ages.tolist()))
        if distinct < k:
            flags.append(f"lowered age clusters {k} -> {distinct} (distinct ages)")
            k = distinct
        raw_labels, raw_centroids = kmeans(ages, k, seed=seed)
        # relabel clusters by ascending centroid so indices are stable
        order = np.argsort(raw_centroids[:, 0], kind="stable")
        order_of = {int(old): int(new) for new, old in enumerate(order)}
        labels = np.array([order_of[int(l)] for l in raw_labels])
        centroids = [float(raw_centroids[old, 0]) for old in order]

    leaves: dict[tuple[int, str, str], Leaf] = {}
    members: dict[tuple[int, str, str], list[PredictionRow]] = {}
    for j in range(len(centroids)):
        for emo in EMOTIONS:
            for g in GENDERS:
                leaves[(j, emo, g)] = Leaf(j, emo, g)
                members[(j, emo, g)] = []
    for r, lab in zip(rows, labels):
        members[(int(lab), r.emotion, r.gender)].append(r)

    for key, rs in members.items():
        if not rs:
            continue
        # aggregate per content: mean probability for this area, mean rating
        psum: dict[str, float] = {}
        rsum: dict[str, float] = {}
        cnt: dict[str, int] = {}
        for r in rs:
            psum[r.content_id] = psum.get(r.content_id, 0.0) + r.probs[area - 1]
            rsum[r.content_id] = rsum.get(r.content_id, 0.0) + r.rating
            cnt[r.content_id] = cnt.get(r.content_id, 0) + 1
        ranked = sorted(
            psum,
            key=lambda c: (-psum[c] / cnt[c], -rsum[c] / cnt[c], c),
        )
        leaves[key].contents = [
            RankedContent(c, psum[c] / cnt[c], rsum[c] / cnt[c], i + 1)
            for i, c in enumerate(ranked)
        ]

    empty = sum(1 for leaf in leaves.values() if not leaf.contents)
    if empty:
        flags.append(f"{empty} empty leaves")
    return ClusterHierarchy(
        area=area,
        age_centroids=list(centroids),
        age_mode=age_mode,
        leaves=leaves,
        member_counts={k: len(v) for k, v in members.items()},
        flags=flags,
    )


def assign_passenger(h: ClusterHierarchy, p: Passenger) -> tuple[int, str, str]:
    """Leaf key for a passenger: nearest age centroid (ties -> lowest
    index), exact emotion group, then gender.  An empty emotion group
    falls back to the largest nonempty group in the age cluster (ties ->
    canonical emotion order)."""
    if p.gender not in GENDERS:
        raise ValueError(f"unknown gender {p.gender!r}")
    if p.emotion not in EMOTIONS:
        raise ValueError(f"unknown emotion {p.emotion!r}")
    if h.age_mode == "decade":
        j = _decade_bin(p.age)
    else:
        diffs = [abs(p.age - c) for c in h.age_centroids]
        j = int(np.argmin(diffs))  # argmin takes the lowest index on ties
    emotion = p.emotion
    emo_size = lambda e: sum(
        h.member_counts.get((j, e, g), 0) for g in GENDERS
    )
    if emo_size(emotion) == 0:
        nonempty = [e for e in EMOTIONS if emo_size(e) > 0]
        if nonempty:
            emotion = max(nonempty, key=lambda e: (emo_size(e), -EMOTIONS.index(e)))
    return (j, emotion, p.gender)


@dataclass(frozen=True)
class RecommendedItem:
    content_id: str
    leaf: tuple[int, str, str]
    rank: int
    probability: float
    rating: float


@dataclass
class Recommendation:
    car_id: str
    area: int
    assignments: dict[str, tuple[int, str, str]]   # passenger -> leaf key
    items: list[RecommendedItem]                   # deduplicated, best rank first
    female_set: list[str]                          # union from female leaves
    male_set: list[str]

    def content_ids(self) -> list[str]:
        return [it.content_id for it in self.items]


def recommend(
    h: ClusterHierarchy,
    passengers: Sequence[Passenger],
    top_k: int = 8,
    car_id: str = "car",
) -> Recommendation:
    """Union of every assigned leaf's top_k, deduplicated keeping the best
    (lowest) rank; ties on rank keep the higher probability."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    assignments: dict[str, tuple[int, str, str]] = {}
    best: dict[str, RecommendedItem] = {}
    female: set[str] = set()
    male: set[str] = set()
    for p in passengers:
        key = assign_passenger(h, p)
        assignments[p.passenger_id] = key
        leaf = h.leaves.get(key)
        if leaf is None or not leaf.contents:
            continue
        for rc in leaf.contents[:top_k]:
            cand = RecommendedItem(rc.content_id, key, rc.rank, rc.probability, rc.rating)
            cur = best.get(rc.content_id)
            if cur is None or (cand.rank, -cand.probability) < (cur.rank, -cur.probability):
                best[rc.content_id] = cand
            (female if key[2] == "female" else male).add(rc.content_id)
    items = sorted(best.values(), key=lambda it: (it.rank, -it.probability, it.content_id))
    return Recommendation(
        car_id=car_id,
        area=h.area,
        assignments=assignments,
        items=items,
        female_set=sorted(female),
        male_set=sorted(male),
    )


def export_hierarchy(h: ClusterHierarchy, path: str | Path) -> None:
    """JSON dump of the tree with member counts and ranked leaf contents."""
    doc = {
        "area": h.area,
        "age_mode": h.age_mode,
        "age_centroids": h.age_centroids,
        "flags": h.flags,
        "leaves": [
            {
                "age_cluster": leaf.age_cluster,
                "emotion": leaf.emotion,
                "gender": leaf.gender,
                "members": h.member_counts.get(key, 0),
                "contents": [
                    {
                        "content_id": rc.content_id,
                        "probability": rc.probability,
                        "rating": rc.rating,
                        "rank": rc.rank,
                    }
                    for rc in leaf.contents
                ],
            }
            for key, leaf in sorted(h.leaves.items())
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))
