"""Content catalog, viewer demographics, and Zipf demand generation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

# Canonical categorical levels.  Order is load-bearing: one-hot encodings,
# cluster indices, and tie-breaking all use these positions.
GENDERS = ("female", "male")

EMOTIONS = (
    "anger",
    "anticipation",
    "disgust",
    "fear",
    "joy",
    "sad",
    "surprise",
    "trust",
)

GENRES = (
    "action",
    "adventure",
    "animation",
    "childrens",
    "comedy",
    "crime",
    "documentary",
    "drama",
    "fantasy",
    "film_noir",
    "horror",
    "musical",
    "mystery",
    "romance",
    "sci_fi",
    "thriller",
    "war",
    "western",
)

FORMATS = ("MP4", "H264")

# Emotion -> preferred genre.  Two emotions share "thriller", so the
# inverse below has to pick one representative per genre.
EMOTION_TO_GENRE = {
    "sad": "drama",
    "disgust": "musical",
    "anger": "comedy",
    "anticipation": "thriller",
    "fear": "adventure",
    "joy": "thriller",
    "trust": "western",
    "surprise": "fantasy",
}

# Genre -> emotion used when a demographics file carries no emotion column.
# Mapped genres invert the table above (first emotion in canonical order
# wins a collision); the remaining genres are assigned round-robin so the
# derivation is total and deterministic.
GENRE_TO_EMOTION: dict[str, str] = {}
for _emo in EMOTIONS:
    _gen = EMOTION_TO_GENRE.get(_emo)
    if _gen is not None and _gen not in GENRE_TO_EMOTION:
        GENRE_TO_EMOTION[_gen] = _emo
for _i, _gen in enumerate(sorted(set(GENRES) - set(GENRE_TO_EMOTION))):
    GENRE_TO_EMOTION[_gen] = EMOTIONS[_i % len(EMOTIONS)]
del _emo, _gen, _i


class ParseError(ValueError):
    """Malformed row in a delimited input file."""

    def __init__(self, path: str | Path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


@dataclass(frozen=True)
class ContentItem:
    """One catalog entry.  size_mb is in megabits."""

    content_id: str
    title: str
    genre: str
    size_mb: float = 0.0
    fmt: str = ""
    rating: float = 0.0

    def __post_init__(self):
        if self.genre not in GENRES:
            raise ValueError(f"unknown genre {self.genre!r} for {self.content_id}")
        if self.size_mb < 0:
            raise ValueError(f"negative size for {self.content_id}")
        if not 0.0 <= self.rating <= 5.0:
            raise ValueError(f"rating outside [0, 5] for {self.content_id}")


@dataclass(frozen=True)
class DemographicRecord:
    """One viewing record: who watched what, where, and how they rated it."""

    user_id: str
    age: float
    gender: str
    emotion: str
    area: int
    content_id: str
    rating: float

    def __post_init__(self):
        if self.gender not in GENDERS:
            raise ValueError(f"unknown gender {self.gender!r} for user {self.user_id}")
        if self.emotion not in EMOTIONS:
            raise ValueError(f"unknown emotion {self.emotion!r} for user {self.user_id}")
        if self.area < 1:
            raise ValueError(f"area index must be >= 1, got {self.area}")
        if not 0.0 <= self.rating <= 5.0:
            raise ValueError(f"rating outside [0, 5] for user {self.user_id}")


@dataclass(frozen=True)
class Passenger:
    passenger_id: str
    age: float
    gender: str
    emotion: str


@dataclass(frozen=True)
class DemandEntry:
    """One content request in a trace."""

    time_s: float
    passenger_id: str
    content_id: str
    fmt: str


@dataclass
class Catalog:
    items: list[ContentItem] = field(default_factory=list)

    def __post_init__(self):
        self._by_id = {it.content_id: it for it in self.items}
        if len(self._by_id) != len(self.items):
            raise ValueError("duplicate content ids in catalog")

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def get(self, content_id: str) -> ContentItem:
        return self._by_id[content_id]

    def __contains__(self, content_id: str) -> bool:
        return content_id in self._by_id


CATALOG_COLUMNS = ("content_id", "title", "genre", "size_mb", "format", "rating")
DEMOGRAPHIC_COLUMNS = ("user_id", "age", "gender", "emotion", "area", "content_id", "rating")


def _sniff_delimiter(header: str) -> str:
    return "\t" if "\t" in header else ","


def load_catalog(path: str | Path) -> Catalog:
    """Read a delimited catalog file (one-line header, comma or tab).

    Columns: content_id, title, genre[, size_mb, format, rating].
    Malformed rows and duplicate ids are rejected with the line number.
    """
    path = Path(path)
    items: list[ContentItem] = []
    seen: dict[str, int] = {}
    with path.open(newline="") as fh:
        first = fh.readline()
        if not first.strip():
            raise ParseError(path, 1, "empty file or missing header")
        delim = _sniff_delimiter(first)
        header = [c.strip() for c in first.strip().split(delim)]
        for col in CATALOG_COLUMNS[:3]:
            if col not in header:
                raise ParseError(path, 1, f"missing required column {col!r}")
        idx = {c: header.index(c) for c in header}
        for line_no, row in enumerate(csv.reader(fh, delimiter=delim), start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(path, line_no, f"expected {len(header)} fields, got {len(row)}")

            def cell(name: str, default: str = "") -> str:
                return row[idx[name]].strip() if name in idx else default

            cid = cell("content_id")
            if cid in seen:
                raise ParseError(path, line_no, f"duplicate content id {cid!r} (first at line {seen[cid]})")
            seen[cid] = line_no
            try:
                items.append(
                    ContentItem(
                        content_id=cid,
                        title=cell("title"),
                        genre=cell("genre"),
                        size_mb=float(cell("size_mb") or 0.0),
                        fmt=cell("format"),
                        rating=float(cell("rating") or 0.0),
                    )
                )
            except ValueError as exc:
                raise ParseError(path, line_no, str(exc)) from exc
    return Catalog(items)


def save_catalog(catalog: Catalog, path: str | Path) -> None:
    """Write a catalog back out.  Floats use repr so a reload is bit-exact."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(",".join(CATALOG_COLUMNS) + "\n")
        w = csv.writer(fh)
        for it in catalog:
            w.writerow([it.content_id, it.title, it.genre, repr(it.size_mb), it.fmt, repr(it.rating)])


def load_demographics(path: str | Path, catalog: Catalog | None = None) -> list[DemographicRecord]:
    """Read viewing records.  The emotion column is optional; when absent it
    is derived from the watched content's genre (requires a catalog)."""
    path = Path(path)
    records: list[DemographicRecord] = []
    with path.open(newline="") as fh:
        first = fh.readline()
        if not first.strip():
            raise ParseError(path, 1, "empty file or missing header")
        delim = _sniff_delimiter(first)
        header = [c.strip() for c in first.strip().split(delim)]
        for col in ("user_id", "age", "gender", "area", "content_id", "rating"):
            if col not in header:
                raise ParseError(path, 1, f"missing required column {col!r}")
        has_emotion = "emotion" in header
        if not has_emotion and catalog is None:
            raise ParseError(path, 1, "no emotion column and no catalog to derive it from")
        idx = {c: header.index(c) for c in header}
        for line_no, row in enumerate(csv.reader(fh, delimiter=delim), start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(path, line_no, f"expected {len(header)} fields, got {len(row)}")
            try:
                cid = row[idx["content_id"]].strip()
                if has_emotion and row[idx["emotion"]].strip():
                    emotion = row[idx["emotion"]].strip()
                else:
                    emotion = GENRE_TO_EMOTION[catalog.get(cid).genre]
                records.append(
                    DemographicRecord(
                        user_id=row[idx["user_id"]].strip(),
                        age=float(row[idx["age"]]),
                        gender=row[idx["gender"]].strip(),
                        emotion=emotion,
                        area=int(row[idx["area"]]),
                        content_id=cid,
                        rating=float(row[idx["rating"]]),
                    )
                )
            except KeyError as exc:
                raise ParseError(path, line_no, f"content id {exc} not in catalog") from exc
            except ValueError as exc:
                raise ParseError(path, line_no, str(exc)) from exc
    return records


def save_demographics(records: Sequence[DemographicRecord], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(",".join(DEMOGRAPHIC_COLUMNS) + "\n")
        w = csv.writer(fh)
        for r in records:
            w.writerow([r.user_id, repr(r.age), r.gender, r.emotion, r.area, r.content_id, repr(r.rating)])


def assign_sizes_and_formats(
    catalog: Catalog,
    size_min_mb: float,
    size_max_mb: float,
    seed: int,
    formats: Sequence[str] = FORMATS,
) -> Catalog:
    """Draw uniform sizes in [size_min_mb, size_max_mb] and uniform formats.

    Deterministic under seed; items that already carry a size keep it only
    if a positive size was set explicitly and fmt is nonempty.
    """
    if size_min_mb <= 0 or size_max_mb < size_min_mb:
        raise ValueError("need 0 < size_min_mb <= size_max_mb")
    if not formats:
        raise ValueError("empty format set")
    rng = np.random.default_rng(seed)
    items = []
    for it in catalog:
        size = rng.uniform(size_min_mb, size_max_mb)
        fmt = formats[int(rng.integers(0, len(formats)))]
        if it.size_mb > 0 and it.fmt:
            items.append(it)
        else:
            items.append(replace(it, size_mb=float(size), fmt=fmt))
    return Catalog(items)


def zipf_popularity(n: int, a: float) -> np.ndarray:
    """Zipf pmf over ranks 1..n: p(k) = k^-a / sum_j j^-a."""
    if n < 1:
        raise ValueError(f"need at least one rank, got n={n}")
    if a < 0:
        raise ValueError(f"Zipf exponent must be >= 0, got {a}")
    ranks = np.arange(1, n + 1, dtype=float)
    weights = ranks**-a
    return weights / weights.sum()


def sample_demands(
    popularity: np.ndarray,
    ranked_content_ids: Sequence[str],
    count: int,
    passengers: Sequence[Passenger],
    seed: int,
    formats: Sequence[str] = FORMATS,
) -> list[DemandEntry]:
    """Draw `count` i.i.d. requests from `popularity`, round-robin over
    passengers.  ranked_content_ids[k] is the content at popularity rank k+1;
    requested formats are uniform over the format set."""
    if len(passengers) == 0:
        raise ValueError("no passengers to issue demands")
    if len(ranked_content_ids) != len(popularity):
        raise ValueError("popularity and content ranking length mismatch")
    if count < 0:
        raise ValueError("negative demand count")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(popularity), size=count, p=popularity)
    fmts = rng.integers(0, len(formats), size=count)
    out = []
    for k in range(count):
        p = passengers[k % len(passengers)]
        out.append(
            DemandEntry(
                time_s=float(k),
                passenger_id=p.passenger_id,
                content_id=ranked_content_ids[int(picks[k])],
                fmt=formats[int(fmts[k])],
            )
        )
    return out


def generate_synthetic_catalog(n_contents: int, seed: int) -> Catalog:
    """Synthetic catalog with genres cycling through the full genre list."""
    if n_contents < 1:
        raise ValueError("need at least one content")
    rng = np.random.default_rng(seed)
    items = []
    for i in range(n_contents):
        genre = GENRES[int(rng.integers(0, len(GENRES)))]
        items.append(
            ContentItem(
                content_id=f"C{i + 1:04d}",
                title=f"Title {i + 1:04d}",
                genre=genre,
                rating=float(np.round(rng.uniform(1.0, 5.0), 2)),
            )
        )
    return Catalog(items)


@dataclass(frozen=True)
class DatasetSpec:
    """Knobs for the synthetic viewing-record generator."""

    n_records: int
    n_areas: int
    seed: int
    genre_focus: float = 0.95  # probability a record follows its area's genre pair
    area_signal: float = 1.0   # scale of the per-area age offset


def generate_synthetic_dataset(spec: DatasetSpec, catalog: Catalog) -> list[DemographicRecord]:
    """Area-labelled viewing records with a learnable area signal.

    Each area prefers a distinct pair of genres (with probability
    genre_focus) and has its own age profile, so the area-conditional
    genre histograms are far apart in total variation and a classifier
    can recover the area from (age, gender, emotion, genre, rating).
    Content choice within a genre is popularity-tilted so a global
    frequency head emerges.
    """
    if spec.n_records < 1 or spec.n_areas < 2:
        raise ValueError("need n_records >= 1 and n_areas >= 2")
    rng = np.random.default_rng(spec.seed)

    by_genre: dict[str, list[ContentItem]] = {}
    for it in catalog:
        by_genre.setdefault(it.genre, []).append(it)
    genres_present = [g for g in GENRES if g in by_genre]
    if len(genres_present) < 2 * spec.n_areas:
        # not enough distinct genres for disjoint pairs; wrap around
        pairs = [
            (genres_present[(2 * n) % len(genres_present)],
             genres_present[(2 * n + 1) % len(genres_present)])
            for n in range(spec.n_areas)
        ]
    else:
        pairs = [(genres_present[2 * n], genres_present[2 * n + 1]) for n in range(spec.n_areas)]

    records = []
    for i in range(spec.n_records):
        area = int(rng.integers(1, spec.n_areas + 1))
        # age profile: areas sweep young -> old, plus in-area spread
        base = 12.0 + spec.area_signal * 9.0 * (area - 1)
        age = float(np.clip(rng.normal(base, 6.0), 4.0, 79.0))
        gender = GENDERS[int(rng.integers(0, 2))]
        if rng.random() < spec.genre_focus:
            genre = pairs[area - 1][int(rng.integers(0, 2))]
        else:
            genre = genres_present[int(rng.integers(0, len(genres_present)))]
        pool = by_genre[genre]
        # popularity tilt inside the genre: low indices dominate
        w = (np.arange(1, len(pool) + 1, dtype=float)) ** -1.2
        item = pool[int(rng.choice(len(pool), p=w / w.sum()))]
        # viewers rate in-preference picks higher
        liked = genre in pairs[area - 1]
        rating = float(np.clip(rng.normal(4.2 if liked else 3.0, 0.6), 0.0, 5.0))
        emotion = GENRE_TO_EMOTION[genre]
        if rng.random() < 0.1:
            emotion = EMOTIONS[int(rng.integers(0, len(EMOTIONS)))]
        records.append(
            DemographicRecord(
                user_id=f"U{i + 1:05d}",
                age=age,
                gender=gender,
                emotion=emotion,
                area=area,
                content_id=item.content_id,
                rating=rating,
            )
        )
    return records


def generate_passengers(count: int, seed: int) -> list[Passenger]:
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        out.append(
            Passenger(
                passenger_id=f"P{i + 1:03d}",
                age=float(rng.integers(4, 80)),
                gender=GENDERS[int(rng.integers(0, 2))],
                emotion=EMOTIONS[int(rng.integers(0, len(EMOTIONS)))],
            )
        )
    return out


def frequency_ranked_contents(records: Iterable[DemographicRecord], catalog: Catalog) -> list[str]:
    """Content ids ordered by viewing-record frequency (desc, ties by id).
    Unviewed contents follow, in id order.  This ordering anchors Zipf
    rank 1 to the most-viewed content."""
    counts: dict[str, int] = {it.content_id: 0 for it in catalog}
    for r in records:
        if r.content_id in counts:
            counts[r.content_id] += 1
    return sorted(counts, key=lambda c: (-counts[c], c))
