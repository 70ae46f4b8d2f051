"""Scenario configuration: JSON schema, delimited data files, validation.

A scenario bundles the catalog source, viewing records, classifier
hyperparameters, the RSU field, cars with passengers, demand settings,
and solver settings.  All randomness is derived from the scenario seed
through tagged subseeds, so a (scenario, seed) pair pins every output.
"""

from __future__ import annotations

import csv
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .catalog import (
    FORMATS,
    Catalog,
    DatasetSpec,
    DemographicRecord,
    Passenger,
    assign_sizes_and_formats,
    generate_passengers,
    generate_synthetic_catalog,
    generate_synthetic_dataset,
    load_catalog,
    load_demographics,
)
from .mlp import TrainConfig
from .mobility import CarState, RsuNode, WifiSpec, kmh_to_ms
from .solver import SolveConfig


class ScenarioError(ValueError):
    """Scenario file fails validation."""


def subseed(base: int, tag: str) -> int:
    """Deterministic per-purpose seed derived from the scenario seed."""
    return (base * 1000003 + zlib.crc32(tag.encode())) % (2**31 - 1)


@dataclass(frozen=True)
class RouteLeg:
    route_id: int
    distance_km: float
    max_speed_kmh: float
    rsu_from: int
    rsu_to: int


def load_routes(path: str | Path) -> list[RouteLeg]:
    """Route table: route_id, distance_km, max_speed_kmh, rsu_from, rsu_to."""
    path = Path(path)
    legs = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"route_id", "distance_km", "max_speed_kmh", "rsu_from", "rsu_to"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ScenarioError(f"{path}: route table needs columns {sorted(required)}")
        for i, row in enumerate(reader, start=2):
            try:
                legs.append(
                    RouteLeg(
                        route_id=int(row["route_id"]),
                        distance_km=float(row["distance_km"]),
                        max_speed_kmh=float(row["max_speed_kmh"]),
                        rsu_from=int(row["rsu_from"]),
                        rsu_to=int(row["rsu_to"]),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ScenarioError(f"{path}:{i}: {exc}") from exc
    if not legs:
        raise ScenarioError(f"{path}: empty route table")
    return legs


def load_rsus(path: str | Path) -> list[RsuNode]:
    """RSU field: rsu_id, x_m, y_m, coverage_m, bandwidth_mhz, snr,
    backhaul_mbps, cache_mb, compute_ghz[, area]."""
    path = Path(path)
    rsus = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        required = {
            "rsu_id", "x_m", "y_m", "coverage_m", "bandwidth_mhz",
            "snr", "backhaul_mbps", "cache_mb", "compute_ghz",
        }
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ScenarioError(f"{path}: RSU file needs columns {sorted(required)}")
        for i, row in enumerate(reader, start=2):
            try:
                rsus.append(
                    RsuNode(
                        rsu_id=int(row["rsu_id"]),
                        x_m=float(row["x_m"]),
                        y_m=float(row["y_m"]),
                        coverage_m=float(row["coverage_m"]),
                        bandwidth_hz=float(row["bandwidth_mhz"]) * 1e6,
                        snr_term=float(row["snr"]),
                        backhaul_mbps=float(row["backhaul_mbps"]),
                        cache_mb=float(row["cache_mb"]),
                        compute_hz=float(row["compute_ghz"]) * 1e9,
                        area=int(row.get("area") or 0),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ScenarioError(f"{path}:{i}: {exc}") from exc
    if not rsus:
        raise ScenarioError(f"{path}: empty RSU file")
    if len({r.rsu_id for r in rsus}) != len(rsus):
        raise ScenarioError(f"{path}: duplicate RSU ids")
    return rsus


@dataclass
class CarConfig:
    car_id: str
    cache_mb: float
    compute_hz: float
    wifi: WifiSpec
    passengers: list[Passenger]
    waypoints: list[tuple[float, float]] | None = None   # explicit route
    leg_speeds_kmh: list[float] | None = None
    chain: bool = False                                  # route follows the RSU chain


@dataclass
class Scenario:
    name: str
    seed: int
    areas: int
    rho_variant: str
    base_dir: Path
    catalog_path: Path | None
    catalog_synthetic: int | None
    size_min_mb: float
    size_max_mb: float
    formats: tuple[str, ...]
    demographics_path: Path | None
    demographics_synthetic: dict[str, Any] | None
    mlp: TrainConfig
    age_clusters: int
    top_k: int
    age_mode: str
    rsus: list[RsuNode]
    routes: list[RouteLeg] | None
    cars: list[CarConfig]
    zipf_a: float
    demand_count: int
    solver: SolveConfig
    cycles_per_bit: float = 100.0
    raw: dict = field(default_factory=dict)

    def build_catalog(self) -> Catalog:
        if self.catalog_path is not None:
            cat = load_catalog(self.catalog_path)
        else:
            cat = generate_synthetic_catalog(self.catalog_synthetic, subseed(self.seed, "catalog"))
        return assign_sizes_and_formats(
            cat, self.size_min_mb, self.size_max_mb, subseed(self.seed, "sizes"), self.formats
        )

    def build_records(self, catalog: Catalog) -> list[DemographicRecord]:
        if self.demographics_path is not None:
            return load_demographics(self.demographics_path, catalog)
        cfg = self.demographics_synthetic or {}
        spec = DatasetSpec(
            n_records=int(cfg.get("n_records", 5000)),
            n_areas=self.areas,
            seed=subseed(self.seed, "records"),
            genre_focus=float(cfg.get("genre_focus", 0.95)),
            area_signal=float(cfg.get("area_signal", 1.0)),
        )
        return generate_synthetic_dataset(spec, catalog)

    def car_states(self) -> list[CarState]:
        states = []
        for cfg in self.cars:
            if cfg.chain:
                waypoints, speeds = self._chain_route()
            else:
                waypoints = cfg.waypoints
                speeds = [kmh_to_ms(v) for v in cfg.leg_speeds_kmh]
            states.append(
                CarState(
                    car_id=cfg.car_id,
                    waypoints=waypoints,
                    leg_speeds_ms=speeds,
                    cache_mb=cfg.cache_mb,
                    compute_hz=cfg.compute_hz,
                    wifi=cfg.wifi,
                    passenger_ids=[p.passenger_id for p in cfg.passengers],
                )
            )
        return states

    def _chain_route(self) -> tuple[list[tuple[float, float]], list[float]]:
        """Waypoints through the RSU chain with per-leg speeds from the
        route table."""
        if not self.routes:
            raise ScenarioError("chain route requested but no route table configured")
        by_id = {r.rsu_id: r for r in self.rsus}
        waypoints: list[tuple[float, float]] = []
        speeds: list[float] = []
        for leg in self.routes:
            for rid in (leg.rsu_from, leg.rsu_to):
                if rid not in by_id:
                    raise ScenarioError(f"route table references unknown RSU {rid}")
            a, b = by_id[leg.rsu_from], by_id[leg.rsu_to]
            if not waypoints:
                waypoints.append((a.x_m, a.y_m))
            waypoints.append((b.x_m, b.y_m))
            speeds.append(kmh_to_ms(leg.max_speed_kmh))
        return waypoints, speeds

    def passengers_of(self, car_id: str) -> list[Passenger]:
        for cfg in self.cars:
            if cfg.car_id == car_id:
                return cfg.passengers
        raise KeyError(car_id)


def _wifi_from(doc: dict) -> WifiSpec:
    return WifiSpec(
        max_rate_mbps=float(doc.get("max_rate_mbps", 3466.8)),
        efficiency=float(doc.get("efficiency", 0.8)),
        contention=doc.get("contention", "constant"),
        contention_c=float(doc.get("contention_c", 0.1)),
    )


def load_scenario(path: str | Path, seed_override: int | None = None) -> Scenario:
    """Parse and validate a scenario JSON file.

    Relative data paths resolve against the scenario file's directory.
    seed_override replaces the file's seed (the --seed CLI flag).
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON: {exc}") from exc
    base = path.parent

    if doc.get("version") != 1:
        raise ScenarioError(f"{path}: unsupported scenario version {doc.get('version')!r}")
    seed = int(seed_override if seed_override is not None else doc.get("seed", 0))
    areas = int(doc.get("areas", 0))
    if areas < 2:
        raise ScenarioError(f"{path}: need at least 2 areas, got {areas}")

    cat = doc.get("catalog", {})
    catalog_path = base / cat["path"] if cat.get("path") else None
    catalog_synth = cat.get("synthetic", {}).get("n_contents") if catalog_path is None else None
    if catalog_path is None and not catalog_synth:
        raise ScenarioError(f"{path}: catalog needs a path or a synthetic block")
    size_min = float(cat.get("size_min_mb", 317.0))
    size_max = float(cat.get("size_max_mb", 750.0))
    formats = tuple(cat.get("formats", FORMATS))
    if len(formats) < 2:
        raise ScenarioError(f"{path}: need at least two formats for transcoding")

    demo = doc.get("demographics", {})
    demo_path = base / demo["path"] if demo.get("path") else None
    demo_synth = demo.get("synthetic") if demo_path is None else None
    if demo_path is None and demo_synth is None:
        raise ScenarioError(f"{path}: demographics needs a path or a synthetic block")

    m = doc.get("mlp", {})
    mlp_cfg = TrainConfig(
        hidden=tuple(int(x) for x in m.get("hidden", (32, 32))),
        lr=float(m.get("lr", 0.002)),
        batch_size=int(m.get("batch_size", 32)),
        epochs=int(m.get("epochs", 60)),
        split=float(m.get("split", 0.6)),
        seed=subseed(seed, "mlp"),
    )

    rec = doc.get("recommend", {})
    age_clusters = int(rec.get("age_clusters", 8))
    top_k = int(rec.get("top_k", 8))
    age_mode = rec.get("age_mode", "kmeans")

    if doc.get("rsus_path"):
        rsus = load_rsus(base / doc["rsus_path"])
    elif doc.get("rsus"):
        rsus = [
            RsuNode(
                rsu_id=int(r["rsu_id"]),
                x_m=float(r["x_m"]),
                y_m=float(r["y_m"]),
                coverage_m=float(r.get("coverage_m", 500.0)),
                bandwidth_hz=float(r.get("bandwidth_mhz", 10.0)) * 1e6,
                snr_term=float(r.get("snr", 3.0)),
                backhaul_mbps=float(r.get("backhaul_mbps", 60.0)),
                cache_mb=float(r.get("cache_mb", 8.0e8)),
                compute_hz=float(r.get("compute_ghz", 3.6)) * 1e9,
                area=int(r.get("area", 0)),
            )
            for r in doc["rsus"]
        ]
    else:
        raise ScenarioError(f"{path}: no RSUs configured")
    for r in rsus:
        if r.area_index > areas:
            raise ScenarioError(
                f"{path}: RSU {r.rsu_id} maps to area {r.area_index} but the "
                f"classifier is configured for {areas} areas"
            )

    routes = load_routes(base / doc["routes_path"]) if doc.get("routes_path") else None

    cars: list[CarConfig] = []
    for i, c in enumerate(doc.get("cars", [])):
        car_id = c.get("car_id", f"car-{i + 1}")
        pconf = c.get("passengers", {})
        if isinstance(pconf, list):
            passengers = [
                Passenger(
                    passenger_id=p["passenger_id"],
                    age=float(p["age"]),
                    gender=p["gender"],
                    emotion=p["emotion"],
                )
                for p in pconf
            ]
        else:
            count = int(pconf.get("synthetic", {}).get("count", 0))
            if count < 1:
                raise ScenarioError(f"{path}: car {car_id} has no passengers")
            passengers = [
                Passenger(f"{car_id}-{p.passenger_id}", p.age, p.gender, p.emotion)
                for p in generate_passengers(count, subseed(seed, f"passengers-{car_id}"))
            ]
        chain = c.get("route") == "chain"
        waypoints = None
        speeds = None
        if not chain:
            if "waypoints" not in c or "leg_speeds_kmh" not in c:
                raise ScenarioError(
                    f"{path}: car {car_id} needs route='chain' or explicit waypoints + leg_speeds_kmh"
                )
            waypoints = [(float(x), float(y)) for x, y in c["waypoints"]]
            speeds = [float(v) for v in c["leg_speeds_kmh"]]
        cars.append(
            CarConfig(
                car_id=car_id,
                cache_mb=float(c.get("cache_mb", 8.0e8)),
                compute_hz=float(c.get("compute_ghz", 3.6)) * 1e9,
                wifi=_wifi_from(c.get("wifi", {})),
                passengers=passengers,
                waypoints=waypoints,
                leg_speeds_kmh=speeds,
                chain=chain,
            )
        )
    if not cars:
        raise ScenarioError(f"{path}: no cars configured")
    all_pids = [p.passenger_id for c in cars for p in c.passengers]
    if len(set(all_pids)) != len(all_pids):
        raise ScenarioError(f"{path}: passenger ids must be globally unique")

    dem = doc.get("demand", {})
    sol = doc.get("solver", {})
    solver_cfg = SolveConfig(
        rule=sol.get("rule", "cyclic"),
        alpha=float(sol.get("alpha", 1.0)),
        beta=(float(sol["beta"]) if sol.get("beta") is not None else None),
        round_threshold=float(sol.get("round_threshold", 0.5)),
        epsilon=float(sol.get("epsilon", 1e-6)),
        max_iter=int(sol.get("max_iter", 500)),
        seed=subseed(seed, "solver"),
    )
    if solver_cfg.rule not in ("cyclic", "gs", "random"):
        raise ScenarioError(f"{path}: unknown solver rule {solver_cfg.rule!r}")

    rho_variant = doc.get("rho_variant", "as_printed")
    if rho_variant not in ("as_printed", "complement"):
        raise ScenarioError(f"{path}: unknown rho_variant {rho_variant!r}")

    return Scenario(
        name=doc.get("name", path.stem),
        seed=seed,
        areas=areas,
        rho_variant=rho_variant,
        base_dir=base,
        catalog_path=catalog_path,
        catalog_synthetic=catalog_synth,
        size_min_mb=size_min,
        size_max_mb=size_max,
        formats=formats,
        demographics_path=demo_path,
        demographics_synthetic=demo_synth,
        mlp=mlp_cfg,
        age_clusters=age_clusters,
        top_k=top_k,
        age_mode=age_mode,
        rsus=rsus,
        routes=routes,
        cars=cars,
        zipf_a=float(dem.get("zipf_a", 1.0)),
        demand_count=int(dem.get("count", 2000)),
        solver=solver_cfg,
        cycles_per_bit=float(doc.get("cycles_per_bit", 100.0)),
        raw=doc,
    )
