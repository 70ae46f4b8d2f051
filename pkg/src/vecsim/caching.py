"""Cache stores, the five-way service lookup, and transcode compute accounting.

A request for (content, format) is resolved in a fixed preference order:
exact hit at the car, transcode at the car, exact hit at the RSU,
transcode at the RSU, then data-center fallback.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from .catalog import Catalog
from .mlp import AreaContentProbabilities
from .recommend import Recommendation

MB_TO_BITS = 1e6  # megabits -> bits
DEFAULT_CYCLES_PER_BIT = 100.0


class ServiceTier(str, Enum):
    CAR_CACHE = "car_cache"
    CAR_TRANSCODE = "car_transcode"
    RSU_CACHE = "rsu_cache"
    RSU_TRANSCODE = "rsu_transcode"
    DATA_CENTER = "data_center"


EDGE_TIERS = (
    ServiceTier.CAR_CACHE,
    ServiceTier.CAR_TRANSCODE,
    ServiceTier.RSU_CACHE,
    ServiceTier.RSU_TRANSCODE,
)


class CacheStore:
    """Capacity-bounded store of (content_id, format) -> size_mb."""

    def __init__(self, owner: str, capacity_mb: float):
        if capacity_mb < 0:
            raise ValueError(f"{owner}: capacity must be >= 0")
        self.owner = owner
        self.capacity_mb = capacity_mb
        self.entries: dict[tuple[str, str], float] = {}

    @property
    def used_mb(self) -> float:
        return sum(self.entries.values())

    def fits(self, size_mb: float) -> bool:
        return self.used_mb + size_mb <= self.capacity_mb + 1e-9

    def add(self, content_id: str, fmt: str, size_mb: float) -> bool:
        """Admit if capacity allows; returns whether the entry was stored."""
        if size_mb < 0:
            raise ValueError("size must be >= 0")
        if (content_id, fmt) in self.entries:
            return True
        if not self.fits(size_mb):
            return False
        self.entries[(content_id, fmt)] = size_mb
        return True

    def has_exact(self, content_id: str, fmt: str) -> bool:
        return (content_id, fmt) in self.entries

    def other_format(self, content_id: str, fmt: str) -> str | None:
        """A cached format of the same content different from fmt, if any."""
        for (cid, f) in self.entries:
            if cid == content_id and f != fmt:
                return f
        return None

    def content_ids(self) -> set[str]:
        return {cid for (cid, _) in self.entries}


@dataclass
class AdmissionResult:
    store: CacheStore
    admitted: list[str]
    skipped: list[str]


def admit_car(
    recommendation: Recommendation,
    catalog: Catalog,
    capacity_mb: float,
    car_id: str = "car",
) -> AdmissionResult:
    """Fill the car cache in recommendation rank order, stopping at the
    first item that no longer fits."""
    store = CacheStore(car_id, capacity_mb)
    admitted, skipped = [], []
    stopped = False
    for item in recommendation.items:
        it = catalog.get(item.content_id)
        if not stopped and store.add(it.content_id, it.fmt, it.size_mb):
            admitted.append(it.content_id)
        else:
            stopped = True
            skipped.append(it.content_id)
    return AdmissionResult(store, admitted, skipped)


def area_content_set(table: AreaContentProbabilities, area: int) -> list[str]:
    """Contents assigned to `area` by argmax of their mean predicted
    distribution, ordered by (probability, mean rating) descending then id."""
    assignment = table.content_area_assignment()
    probs = table.content_probabilities()
    ratings = table.content_mean_rating()
    members = [c for c, a in assignment.items() if a == area]
    members.sort(key=lambda c: (-probs[c][area - 1], -ratings.get(c, 0.0), c))
    return members


def admit_rsu(
    table: AreaContentProbabilities,
    area: int,
    catalog: Catalog,
    capacity_mb: float,
    rsu_id: str = "rsu",
) -> AdmissionResult:
    """Fill an RSU cache with its area's contents in (probability, rating)
    descending order until the store is full."""
    store = CacheStore(rsu_id, capacity_mb)
    admitted, skipped = [], []
    stopped = False
    for cid in area_content_set(table, area):
        if cid not in catalog:
            continue
        it = catalog.get(cid)
        if not stopped and store.add(it.content_id, it.fmt, it.size_mb):
            admitted.append(cid)
        else:
            stopped = True
            skipped.append(cid)
    return AdmissionResult(store, admitted, skipped)


@dataclass(frozen=True)
class HitResult:
    """Outcome of one lookup, with the binary service indicators."""

    tier: ServiceTier
    content_id: str
    fmt: str
    source_fmt: str | None      # cached format a transcode starts from
    h_car_hit: int              # exact hit at car
    h_car_transcode: int        # served from car after transcoding
    h_rsu_hit: int              # exact hit at RSU
    h_rsu_transcode: int        # served from RSU after transcoding
    rho_car: int                # transcode executed at car
    rho_rsu: int                # transcode executed at RSU

    @property
    def is_edge(self) -> bool:
        return self.tier in EDGE_TIERS


def lookup(
    car_store: CacheStore,
    rsu_store: CacheStore | None,
    content_id: str,
    fmt: str,
    car_compute_ok: bool = True,
    rsu_compute_ok: bool = True,
) -> HitResult:
    """Resolve a request through the service chain.

    Exactly one tier serves the request; transcoding requires the same
    content in another format plus compute at that node, otherwise the
    request escalates.  rsu_store None means no RSU in range.
    """
    if car_store.has_exact(content_id, fmt):
        return HitResult(ServiceTier.CAR_CACHE, content_id, fmt, None, 1, 0, 0, 0, 0, 0)
    src = car_store.other_format(content_id, fmt)
    if src is not None and car_compute_ok:
        return HitResult(ServiceTier.CAR_TRANSCODE, content_id, fmt, src, 0, 1, 0, 0, 1, 0)
    if rsu_store is not None:
        if rsu_store.has_exact(content_id, fmt):
            return HitResult(ServiceTier.RSU_CACHE, content_id, fmt, None, 0, 0, 1, 0, 0, 0)
        src = rsu_store.other_format(content_id, fmt)
        if src is not None and rsu_compute_ok:
            return HitResult(ServiceTier.RSU_TRANSCODE, content_id, fmt, src, 0, 0, 0, 1, 0, 1)
    return HitResult(ServiceTier.DATA_CENTER, content_id, fmt, None, 0, 0, 0, 0, 0, 0)


@dataclass(frozen=True)
class TranscodeTask:
    task_id: str
    size_mb: float
    cycles_per_bit: float = DEFAULT_CYCLES_PER_BIT
    active: float = 1.0   # gate product h * rho (relaxed values allowed)


def compute_allocation(tasks: Sequence[TranscodeTask], total_hz: float) -> dict[str, float]:
    """Split a node's cycles across tasks proportionally to h*rho*z.

    Allocations over the active set sum to the full budget; an empty task
    list allocates nothing.
    """
    if total_hz <= 0:
        raise ValueError("compute budget must be positive")
    weights = {t.task_id: t.active * t.cycles_per_bit for t in tasks}
    total_w = sum(weights.values())
    if total_w <= 0:
        return {t.task_id: 0.0 for t in tasks}
    return {tid: total_hz * w / total_w for tid, w in weights.items()}


def transcode_time_car_s(
    q: int,
    h: float,
    rho_car: float,
    cycles_per_bit: float,
    size_mb: float,
    allocated_hz: float,
) -> float:
    """Car-side transcode time: q * h * rho * z * S / p, S in bits."""
    if allocated_hz <= 0:
        raise ValueError("allocated compute must be positive")
    if cycles_per_bit <= 0:
        raise ValueError("cycles per bit must be positive")
    if size_mb < 0:
        raise ValueError("size must be >= 0")
    return q * h * rho_car * cycles_per_bit * size_mb * MB_TO_BITS / allocated_hz


def transcode_time_rsu_s(
    rho_car: float,
    q: int,
    h: float,
    rho_rsu: float,
    cycles_per_bit: float,
    size_mb: float,
    allocated_hz: float,
) -> float:
    """RSU-side transcode time, active only when the car did not transcode:
    (1 - rho_car) * q * h * rho * z * S / p."""
    if allocated_hz <= 0:
        raise ValueError("allocated compute must be positive")
    return (1.0 - rho_car) * q * h * rho_rsu * cycles_per_bit * size_mb * MB_TO_BITS / allocated_hz


@dataclass
class ConstraintReport:
    """Slack and validity of the caching/compute constraint set."""

    car_cache_slack_mb: float
    rsu_cache_slack_mb: dict[int, float]
    car_compute_slack_hz: float
    rsu_compute_slack_hz: dict[int, float]
    format_exclusive_ok: bool      # h_car_hit + h_car_transcode <= 1 per request
    location_exclusive_ok: bool    # transcode runs at one location per request
    service_chain_ok: bool         # car-level service excludes RSU-level service
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (
            not self.violations
            and self.format_exclusive_ok
            and self.location_exclusive_ok
            and self.service_chain_ok
        )


def check_constraints(
    hits: Sequence[HitResult],
    car_store: CacheStore,
    rsu_stores: Mapping[int, CacheStore],
    car_compute_used_hz: float,
    car_compute_hz: float,
    rsu_compute_used_hz: Mapping[int, float],
    rsu_compute_hz: Mapping[int, float],
) -> ConstraintReport:
    """Re-derive every constraint from raw state.  eta (the escalation
    gate) is computed on the fly as 1 - (h_car_hit + h_car_transcode)."""
    violations: list[str] = []
    car_slack = car_store.capacity_mb - car_store.used_mb
    if car_slack < -1e-9:
        violations.append(f"car cache over capacity by {-car_slack:.3f} Mb")
    rsu_slack = {}
    for rid, store in rsu_stores.items():
        rsu_slack[rid] = store.capacity_mb - store.used_mb
        if rsu_slack[rid] < -1e-9:
            violations.append(f"RSU {rid} cache over capacity by {-rsu_slack[rid]:.3f} Mb")
    car_cslack = car_compute_hz - car_compute_used_hz
    if car_cslack < -1e-6:
        violations.append("car compute over budget")
    rsu_cslack = {}
    for rid, cap in rsu_compute_hz.items():
        rsu_cslack[rid] = cap - rsu_compute_used_hz.get(rid, 0.0)
        if rsu_cslack[rid] < -1e-6:
            violations.append(f"RSU {rid} compute over budget")

    fmt_ok, loc_ok, chain_ok = True, True, True
    for h in hits:
        if h.h_car_hit + h.h_car_transcode > 1 or h.h_rsu_hit + h.h_rsu_transcode > 1:
            fmt_ok = False
        if h.rho_car + h.rho_rsu > 1:
            loc_ok = False
        eta = 1 - (h.h_car_hit + h.h_car_transcode)
        if eta == 0 and (h.h_rsu_hit or h.h_rsu_transcode):
            chain_ok = False
    return ConstraintReport(
        car_cache_slack_mb=car_slack,
        rsu_cache_slack_mb=rsu_slack,
        car_compute_slack_hz=car_cslack,
        rsu_compute_slack_hz=rsu_cslack,
        format_exclusive_ok=fmt_ok,
        location_exclusive_ok=loc_ok,
        service_chain_ok=chain_ok,
        violations=violations,
    )
