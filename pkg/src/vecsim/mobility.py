"""Route geometry, roadside-unit coverage, and contact planning.

Distances are meters, speeds m/s, angles radians.  A car follows straight
legs between waypoints; each roadside unit (RSU) covers a disc of radius
gamma around its position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

DEFAULT_COVERAGE_M = 500.0


@dataclass(frozen=True)
class RsuNode:
    rsu_id: int
    x_m: float
    y_m: float
    coverage_m: float = DEFAULT_COVERAGE_M
    bandwidth_hz: float = 10e6
    snr_term: float = 3.0            # phi * |G|^2 inside the log
    backhaul_mbps: float = 60.0
    cache_mb: float = 8.0e8
    compute_hz: float = 3.6e9
    area: int = 0                    # 0 means "same as rsu_id"

    def __post_init__(self):
        if self.coverage_m <= 0:
            raise ValueError(f"RSU {self.rsu_id}: coverage must be positive")

    @property
    def area_index(self) -> int:
        return self.area if self.area > 0 else self.rsu_id


@dataclass(frozen=True)
class WifiSpec:
    max_rate_mbps: float = 3466.8    # 802.11ac, 160 MHz channel
    efficiency: float = 0.8
    contention: str = "constant"     # "constant" or "log"
    contention_c: float = 0.1

    def xi(self, n: int) -> float:
        """Contention factor for n connected passengers."""
        if n < 1:
            raise ValueError("need at least one passenger for contention")
        if self.contention == "constant":
            return 1.0
        if self.contention == "log":
            return 1.0 / (1.0 + self.contention_c * math.log(n))
        raise ValueError(f"unknown contention model {self.contention!r}")


@dataclass
class CarState:
    car_id: str
    waypoints: list[tuple[float, float]]
    leg_speeds_ms: list[float]       # one speed per leg
    cache_mb: float = 8.0e8
    compute_hz: float = 3.6e9
    wifi: WifiSpec = field(default_factory=WifiSpec)
    passenger_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise ValueError(f"car {self.car_id}: need at least 2 waypoints")
        if len(self.leg_speeds_ms) != len(self.waypoints) - 1:
            raise ValueError(f"car {self.car_id}: one speed per leg required")
        if any(v <= 0 for v in self.leg_speeds_ms):
            raise ValueError(f"car {self.car_id}: speeds must be positive")


def perpendicular_distance(g: float, alpha: float) -> float:
    """Offset of the RSU from the travel line: g * sin(alpha), clamped >= 0."""
    if g < 0:
        raise ValueError("geographic distance must be >= 0")
    return max(0.0, g * math.sin(alpha))


def along_route_distance(g: float, alpha: float) -> float:
    """Progress along the travel line to the closest approach: g * cos(alpha)."""
    if g < 0:
        raise ValueError("geographic distance must be >= 0")
    return g * math.cos(alpha)


def selection_probability(d_perp: float, gamma: float, variant: str = "as_printed") -> float:
    """RSU selection weight from the perpendicular offset.

    as_printed: 1 at zero offset, d_perp / gamma inside coverage, else 0.
    complement: 1 at zero offset, (gamma - d_perp) / gamma inside, else 0
    (the nearer-is-likelier reading; pick via config)."""
    if gamma <= 0:
        raise ValueError("coverage radius must be positive")
    if d_perp < 0:
        raise ValueError("perpendicular distance must be >= 0")
    if d_perp == 0.0:
        return 1.0
    if d_perp >= gamma:
        return 0.0
    if variant == "as_printed":
        return d_perp / gamma
    if variant == "complement":
        return (gamma - d_perp) / gamma
    raise ValueError(f"unknown rho variant {variant!r}")


def connectivity(rho: float, distance_to_center: float, gamma: float) -> int:
    """1 when the selection weight is positive and the car is inside the
    coverage disc, else 0."""
    if gamma <= 0:
        raise ValueError("coverage radius must be positive")
    return 1 if rho > 0.0 and distance_to_center <= gamma else 0


def dwell_time(gamma: float, speed_ms: float) -> float:
    """Time inside coverage on a pass-through: 2 * gamma / speed."""
    if gamma <= 0:
        raise ValueError("coverage radius must be positive")
    if speed_ms <= 0:
        raise ValueError(f"speed must be positive, got {speed_ms}")
    return 2.0 * gamma / speed_ms


@dataclass(frozen=True)
class RouteEntry:
    """One planned RSU contact along the journey."""

    rsu_id: int
    leg: int
    entry_time_s: float
    dwell_s: float
    g_m: float               # geographic distance from leg start
    alpha_rad: float
    d_perp_m: float
    d_along_m: float
    rho: float
    q: int
    speed_ms: float
    download_feasible: bool | None = None  # set when a download size was given


@dataclass
class RoutePlan:
    car_id: str
    entries: list[RouteEntry]
    total_time_s: float

    def rsu_ids(self) -> list[int]:
        return [e.rsu_id for e in self.entries]


def plan_route(
    car: CarState,
    rsus: Sequence[RsuNode],
    rho_variant: str = "as_printed",
    download_size_mb: float | None = None,
    download_rate_mbps: float | None = None,
) -> RoutePlan:
    """Ordered RSU contacts along the car's legs.

    For each leg and RSU: g is the distance from the leg start, alpha the
    absolute angle between the leg direction and the RSU bearing (folded
    into [0, pi/2]), d_perp = g sin(alpha), d_along = g cos(alpha).  The
    RSU is entered when the car reaches the chord of its coverage disc;
    entry times are cumulative over earlier legs and strictly increasing.
    With a download size (and per-entry rate), each entry is flagged
    infeasible when the transfer outlasts the dwell time.
    """
    entries: list[RouteEntry] = []
    t0 = 0.0
    seen: set[int] = set()
    for leg in range(len(car.waypoints) - 1):
        (x0, y0), (x1, y1) = car.waypoints[leg], car.waypoints[leg + 1]
        dx, dy = x1 - x0, y1 - y0
        leg_len = math.hypot(dx, dy)
        if leg_len == 0:
            continue
        speed = car.leg_speeds_ms[leg]
        leg_candidates = []
        for rsu in rsus:
            if rsu.rsu_id in seen:
                continue
            gx, gy = rsu.x_m - x0, rsu.y_m - y0
            g = math.hypot(gx, gy)
            if g == 0.0:
                alpha = 0.0
            else:
                cos_a = (dx * gx + dy * gy) / (leg_len * g)
                alpha = math.acos(min(1.0, max(-1.0, abs(cos_a))))
            d_perp = perpendicular_distance(g, alpha)
            d_along = along_route_distance(g, alpha)
            gamma = rsu.coverage_m
            if d_perp >= gamma:
                continue
            half_chord = math.sqrt(gamma * gamma - d_perp * d_perp)
            entry_at = d_along - half_chord
            # negative entry distance means the leg starts inside the disc
            # (g < gamma), so contact begins immediately at the leg start
            if entry_at > leg_len + 1e-9:
                continue
            rho = selection_probability(d_perp, gamma, rho_variant)
            q = connectivity(rho, d_perp, gamma)
            if q == 0:
                continue
            dwell = dwell_time(gamma, speed)
            feasible = None
            if download_size_mb is not None and download_rate_mbps is not None:
                feasible = (download_size_mb / download_rate_mbps) < dwell
            leg_candidates.append(
                (
                    entry_at,
                    RouteEntry(
                        rsu_id=rsu.rsu_id,
                        leg=leg,
                        entry_time_s=t0 + max(0.0, entry_at) / speed,
                        dwell_s=dwell,
                        g_m=g,
                        alpha_rad=alpha,
                        d_perp_m=d_perp,
                        d_along_m=d_along,
                        rho=rho,
                        q=q,
                        speed_ms=speed,
                        download_feasible=feasible,
                    ),
                )
            )
        for _, entry in sorted(leg_candidates, key=lambda c: c[0]):
            entries.append(entry)
            seen.add(entry.rsu_id)
        t0 += leg_len / speed
    # guarantee strict ordering; simultaneous entries would break replay
    for a, b in zip(entries, entries[1:]):
        if b.entry_time_s <= a.entry_time_s:
            raise ValueError(
                f"entry times not strictly increasing: RSU {a.rsu_id} at {a.entry_time_s} "
                f"vs RSU {b.rsu_id} at {b.entry_time_s}"
            )
    return RoutePlan(car_id=car.car_id, entries=entries, total_time_s=t0)


def kmh_to_ms(v_kmh: float) -> float:
    return v_kmh / 3.6
