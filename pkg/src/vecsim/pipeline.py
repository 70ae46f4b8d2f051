"""End-to-end run: train, recommend, plan, place, solve, replay.

prepare() does the heavy one-time work for a scenario (training, cluster
hierarchies, route plans, cache placement).  The demand trace, the solver
instance, and the replay all derive from a Prepared object, so a sweep
over demand skew reuses one trained model.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .caching import (
    AdmissionResult,
    CacheStore,
    ConstraintReport,
    HitResult,
    ServiceTier,
    TranscodeTask,
    admit_car,
    admit_rsu,
    check_constraints,
    compute_allocation,
    lookup,
    transcode_time_car_s,
    transcode_time_rsu_s,
)
from .catalog import (
    Catalog,
    DemandEntry,
    DemographicRecord,
    frequency_ranked_contents,
    sample_demands,
    zipf_popularity,
)
from .links import backhaul_delay_s, passenger_delay_s, rsu_capacity_mbps, wifi_rate_mbps
from .mlp import (
    AreaContentProbabilities,
    FeatureEncoder,
    MlpModel,
    TrainingHistory,
    predict_area_probabilities,
    train,
)
from .mobility import CarState, RoutePlan, RsuNode, plan_route
from .recommend import ClusterHierarchy, Recommendation, build_hierarchy, recommend
from .scenario import CarConfig, Scenario, ScenarioError, subseed
from .solver import SolveConfig, SolveInstance, SolveReport, solve


@dataclass
class PreparedCar:
    """Per-car artifacts fixed before any demand arrives.

    The car picks up each visited area's recommended contents at that
    area's RSU, so its cache is the route-ordered union of per-area
    recommendations, admitted under the cache capacity.
    """

    config: CarConfig
    state: CarState
    plan: RoutePlan
    serving_rsu: RsuNode
    recommendations: dict[int, Recommendation]   # by area, in route order
    merged: Recommendation
    admission: AdmissionResult
    wifi_share_mbps: float          # per-passenger share on the onboard AP

    @property
    def car_id(self) -> str:
        return self.config.car_id

    @property
    def store(self) -> CacheStore:
        return self.admission.store


@dataclass
class Prepared:
    scenario: Scenario
    catalog: Catalog
    records: list[DemographicRecord]
    ranked_contents: list[str]
    model: MlpModel
    encoder: FeatureEncoder
    history: TrainingHistory
    table: AreaContentProbabilities
    hierarchies: dict[int, ClusterHierarchy]     # one per area
    rsus: dict[int, RsuNode]
    rsu_admissions: dict[int, AdmissionResult]
    cars: list[PreparedCar]

    def car_of_passenger(self) -> dict[str, str]:
        return {pid: c.car_id for c in self.cars for pid in c.state.passenger_ids}

    def rsu_store(self, rsu_id: int) -> CacheStore:
        return self.rsu_admissions[rsu_id].store


def _merge_recommendations(
    car_id: str, ordered: list[Recommendation]
) -> Recommendation:
    """Route-ordered union of per-area recommendations; the first area to
    recommend a content keeps its slot in the download order."""
    seen: set[str] = set()
    items = []
    female: set[str] = set()
    male: set[str] = set()
    for rec in ordered:
        for it in rec.items:
            if it.content_id not in seen:
                seen.add(it.content_id)
                items.append(it)
        female.update(rec.female_set)
        male.update(rec.male_set)
    head = ordered[0]
    return Recommendation(
        car_id=car_id,
        area=head.area,
        assignments=head.assignments,
        items=items,
        female_set=sorted(female),
        male_set=sorted(male),
    )


def prepare(scenario: Scenario) -> Prepared:
    """Train the classifier, build hierarchies, plan routes, fill caches."""
    catalog = scenario.build_catalog()
    records = scenario.build_records(catalog)
    ranked = frequency_ranked_contents(records, catalog)

    model, encoder, history = train(records, catalog, scenario.areas, scenario.mlp)
    table = predict_area_probabilities(model, encoder, records, catalog)

    hierarchies = {
        area: build_hierarchy(
            table,
            area,
            age_clusters=scenario.age_clusters,
            seed=subseed(scenario.seed, f"kmeans-area-{area}"),
            age_mode=scenario.age_mode,
        )
        for area in range(1, scenario.areas + 1)
    }

    rsus = {r.rsu_id: r for r in scenario.rsus}
    rsu_admissions = {
        rid: admit_rsu(table, r.area_index, catalog, r.cache_mb, rsu_id=f"rsu-{rid}")
        for rid, r in sorted(rsus.items())
    }

    cars: list[PreparedCar] = []
    for cfg, state in zip(scenario.cars, scenario.car_states()):
        plan = plan_route(state, scenario.rsus, scenario.rho_variant)
        if not plan.entries:
            raise ScenarioError(f"car {cfg.car_id} never contacts an RSU on its route")
        serving = rsus[plan.entries[0].rsu_id]
        visited_areas: list[int] = []
        for e in plan.entries:
            a = rsus[e.rsu_id].area_index
            if a not in visited_areas:
                visited_areas.append(a)
        recs = {
            a: recommend(hierarchies[a], cfg.passengers, scenario.top_k, cfg.car_id)
            for a in visited_areas
        }
        merged = _merge_recommendations(cfg.car_id, [recs[a] for a in visited_areas])
        admission = admit_car(merged, catalog, cfg.cache_mb, cfg.car_id)
        n = len(cfg.passengers)
        share = wifi_rate_mbps(
            1, cfg.wifi.efficiency, cfg.wifi.max_rate_mbps, cfg.wifi.xi(n), n
        )
        cars.append(
            PreparedCar(
                config=cfg,
                state=state,
                plan=plan,
                serving_rsu=serving,
                recommendations=recs,
                merged=merged,
                admission=admission,
                wifi_share_mbps=share,
            )
        )
    return Prepared(
        scenario=scenario,
        catalog=catalog,
        records=records,
        ranked_contents=ranked,
        model=model,
        encoder=encoder,
        history=history,
        table=table,
        hierarchies=hierarchies,
        rsus=rsus,
        rsu_admissions=rsu_admissions,
        cars=cars,
    )


def sample_trace(
    prepared: Prepared,
    zipf_a: float | None = None,
    count: int | None = None,
    seed: int | None = None,
) -> list[DemandEntry]:
    """Demand trace over the whole fleet's passengers.

    Content at popularity rank k is the k-th most viewed title in the
    training records, so sharper skew concentrates demand on the head
    that the caches were filled from.
    """
    sc = prepared.scenario
    a = sc.zipf_a if zipf_a is None else zipf_a
    n = sc.demand_count if count is None else count
    s = subseed(sc.seed, "demand") if seed is None else seed
    popularity = zipf_popularity(len(prepared.ranked_contents), a)
    passengers = [p for c in prepared.cars for p in c.config.passengers]
    return sample_demands(popularity, prepared.ranked_contents, n, passengers, s, sc.formats)


def build_instance(prepared: Prepared, trace: list[DemandEntry]) -> SolveInstance:
    """Solver input: one request per passenger (their first demand).

    Delay coefficients come from the link formulas; transcode
    coefficients use a fixed proportional compute split over each node's
    candidate set, which keeps the objective separable in the decisions.
    """
    first: dict[str, DemandEntry] = {}
    for d in trace:
        first.setdefault(d.passenger_id, d)

    z = prepared.scenario.cycles_per_bit
    pairs: list[tuple[str, int]] = []
    pair_idx: dict[str, int] = {}
    rows = []   # (passenger, content, fmt, size, car, rsu)
    for car in prepared.cars:
        got = [p for p in car.config.passengers if p.passenger_id in first]
        if not got:
            continue
        pair_idx[car.car_id] = len(pairs)
        pairs.append((car.car_id, car.serving_rsu.rsu_id))
        for p in got:
            d = first[p.passenger_id]
            item = prepared.catalog.get(d.content_id)
            rows.append((p.passenger_id, item, d.fmt, car))
    if not rows:
        raise ValueError("empty trace: no requests to solve for")

    U = len(rows)
    c_wifi = np.zeros(U)
    c_car_tc = np.zeros(U)
    c_rsu_dl = np.zeros(U)
    c_rsu_tc = np.zeros(U)
    c_dc = np.zeros(U)
    ub_h = np.zeros((U, 4))
    ub_rho = np.zeros((U, 2))
    pair_of_request = np.zeros(U, dtype=int)
    alloc_car = np.zeros(U)
    alloc_rsu = np.zeros(U)

    for u, (pid, item, fmt, car) in enumerate(rows):
        rsu = car.serving_rsu
        store = car.store
        rstore = prepared.rsu_store(rsu.rsu_id)
        pair_of_request[u] = pair_idx[car.car_id]
        c_wifi[u] = passenger_delay_s(1, item.size_mb, car.wifi_share_mbps)
        omega = rsu_capacity_mbps(1, rsu.bandwidth_hz, rsu.snr_term)
        c_rsu_dl[u] = item.size_mb / omega
        c_dc[u] = backhaul_delay_s(1, item.size_mb, rsu.backhaul_mbps)
        ub_h[u, 0] = float(store.has_exact(item.content_id, fmt))
        ub_h[u, 1] = float(
            store.other_format(item.content_id, fmt) is not None and car.config.compute_hz > 0
        )
        ub_h[u, 2] = float(rstore.has_exact(item.content_id, fmt))
        ub_h[u, 3] = float(
            rstore.other_format(item.content_id, fmt) is not None and rsu.compute_hz > 0
        )
        ub_rho[u, 0] = ub_h[u, 1]
        ub_rho[u, 1] = ub_h[u, 3]

    # fixed proportional compute split over each node's transcode candidates
    by_car: dict[str, list[int]] = {}
    by_rsu: dict[int, list[int]] = {}
    for u, (pid, item, fmt, car) in enumerate(rows):
        if ub_rho[u, 0]:
            by_car.setdefault(car.car_id, []).append(u)
        if ub_rho[u, 1]:
            by_rsu.setdefault(car.serving_rsu.rsu_id, []).append(u)
    for car in prepared.cars:
        us = by_car.get(car.car_id, [])
        if not us:
            continue
        tasks = [TranscodeTask(str(u), rows[u][1].size_mb, z) for u in us]
        alloc = compute_allocation(tasks, car.config.compute_hz)
        for u in us:
            alloc_car[u] = alloc[str(u)]
            c_car_tc[u] = transcode_time_car_s(1, 1, 1, z, rows[u][1].size_mb, alloc_car[u])
    for rid, us in by_rsu.items():
        tasks = [TranscodeTask(str(u), rows[u][1].size_mb, z) for u in us]
        alloc = compute_allocation(tasks, prepared.rsus[rid].compute_hz)
        for u in us:
            alloc_rsu[u] = alloc[str(u)]
            c_rsu_tc[u] = transcode_time_rsu_s(0, 1, 1, 1, z, rows[u][1].size_mb, alloc_rsu[u])

    cache_used = {}
    cache_cap = {}
    for car in prepared.cars:
        cache_used[car.car_id] = car.store.used_mb
        cache_cap[car.car_id] = car.store.capacity_mb
    for rid, adm in prepared.rsu_admissions.items():
        cache_used[f"rsu-{rid}"] = adm.store.used_mb
        cache_cap[f"rsu-{rid}"] = adm.store.capacity_mb

    return SolveInstance(
        c_wifi=c_wifi,
        c_car_tc=c_car_tc,
        c_rsu_dl=c_rsu_dl,
        c_rsu_tc=c_rsu_tc,
        c_dc=c_dc,
        ub_h=ub_h,
        ub_rho=ub_rho,
        pair_of_request=pair_of_request,
        pairs=pairs,
        alloc_car_hz=alloc_car,
        alloc_rsu_hz=alloc_rsu,
        passenger_ids=[r[0] for r in rows],
        content_ids=[r[1].content_id for r in rows],
        car_compute_hz={c.car_id: c.config.compute_hz for c in prepared.cars},
        rsu_compute_hz={rid: r.compute_hz for rid, r in prepared.rsus.items()},
        cache_used_mb=cache_used,
        cache_cap_mb=cache_cap,
    )


@dataclass
class DemandOutcome:
    """One replayed request with its service tier and delay."""

    time_s: float
    passenger_id: str
    car_id: str
    rsu_id: int
    content_id: str
    fmt: str
    tier: str
    delay_s: float
    dc_first_fetch: bool    # counts once per content under deduplication


@dataclass
class ReplayMetrics:
    count: int
    tier_counts: dict[str, int]
    edge_fraction: float
    delay_total_s: float
    delay_mean_s: float
    dc_delay_total_s: float         # every miss pays the backhaul
    dc_delay_dedup_s: float         # repeated misses of a title fetch once
    dc_dedup_count: int
    outcomes: list[DemandOutcome] = field(default_factory=list)
    constraints: dict[str, ConstraintReport] = field(default_factory=dict)

    @property
    def tier_fractions(self) -> dict[str, float]:
        if self.count == 0:
            return {k: 0.0 for k in self.tier_counts}
        return {k: v / self.count for k, v in self.tier_counts.items()}

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "tier_counts": dict(sorted(self.tier_counts.items())),
            "tier_fractions": dict(sorted(self.tier_fractions.items())),
            "edge_fraction": self.edge_fraction,
            "delay_total_s": self.delay_total_s,
            "delay_mean_s": self.delay_mean_s,
            "dc_delay_total_s": self.dc_delay_total_s,
            "dc_delay_dedup_s": self.dc_delay_dedup_s,
            "dc_dedup_count": self.dc_dedup_count,
            "constraints_ok": all(r.ok for r in self.constraints.values()),
        }


def replay(prepared: Prepared, trace: list[DemandEntry]) -> ReplayMetrics:
    """Serve the trace against the fixed cache placement.

    Demand times stretch over each car's journey; a demand is handled by
    the RSU whose contact window covers that moment.  Transcodes run one
    at a time per node, so each gets the node's full compute budget.
    """
    z = prepared.scenario.cycles_per_bit
    car_by_id = {c.car_id: c for c in prepared.cars}
    pax_car = prepared.car_of_passenger()
    span = max(1.0, max((d.time_s for d in trace), default=1.0))

    tier_counts = {t.value: 0 for t in ServiceTier}
    outcomes: list[DemandOutcome] = []
    hits_by_car: dict[str, list[HitResult]] = {c.car_id: [] for c in prepared.cars}
    transcoded_cars: set[str] = set()
    transcoded_rsus: set[int] = set()
    seen_dc: set[str] = set()
    total = dedup_total = 0.0
    dc_total = 0.0
    dedup_count = 0

    for d in trace:
        car = car_by_id[pax_car[d.passenger_id]]
        entries = car.plan.entries
        t_journey = d.time_s / span * car.plan.total_time_s
        idx = bisect_right([e.entry_time_s for e in entries], t_journey) - 1
        entry = entries[max(0, idx)]
        rsu = prepared.rsus[entry.rsu_id]
        item = prepared.catalog.get(d.content_id)

        hit = lookup(
            car.store,
            prepared.rsu_store(rsu.rsu_id),
            d.content_id,
            d.fmt,
            car_compute_ok=car.config.compute_hz > 0,
            rsu_compute_ok=rsu.compute_hz > 0,
        )
        hits_by_car[car.car_id].append(hit)

        if hit.tier is ServiceTier.CAR_CACHE:
            delay = passenger_delay_s(1, item.size_mb, car.wifi_share_mbps)
        elif hit.tier is ServiceTier.CAR_TRANSCODE:
            delay = transcode_time_car_s(1, 1, 1, z, item.size_mb, car.config.compute_hz)
            transcoded_cars.add(car.car_id)
        elif hit.tier is ServiceTier.RSU_CACHE:
            omega = rsu_capacity_mbps(entry.q, rsu.bandwidth_hz, rsu.snr_term)
            delay = item.size_mb / omega
        elif hit.tier is ServiceTier.RSU_TRANSCODE:
            delay = transcode_time_rsu_s(0, 1, 1, 1, z, item.size_mb, rsu.compute_hz)
            transcoded_rsus.add(rsu.rsu_id)
        else:
            delay = backhaul_delay_s(entry.q, item.size_mb, rsu.backhaul_mbps)

        first_fetch = False
        if hit.tier is ServiceTier.DATA_CENTER:
            dc_total += delay
            if d.content_id not in seen_dc:
                seen_dc.add(d.content_id)
                dedup_total += delay
                dedup_count += 1
                first_fetch = True

        tier_counts[hit.tier.value] += 1
        total += delay
        outcomes.append(
            DemandOutcome(
                time_s=d.time_s,
                passenger_id=d.passenger_id,
                car_id=car.car_id,
                rsu_id=rsu.rsu_id,
                content_id=d.content_id,
                fmt=d.fmt,
                tier=hit.tier.value,
                delay_s=delay,
                dc_first_fetch=first_fetch,
            )
        )

    # transcodes are sequential, so peak engagement per node is one task
    constraints = {}
    for car in prepared.cars:
        constraints[car.car_id] = check_constraints(
            hits_by_car[car.car_id],
            car.store,
            {rid: prepared.rsu_store(rid) for rid in prepared.rsus},
            car_compute_used_hz=(
                car.config.compute_hz if car.car_id in transcoded_cars else 0.0
            ),
            car_compute_hz=car.config.compute_hz,
            rsu_compute_used_hz={
                rid: (r.compute_hz if rid in transcoded_rsus else 0.0)
                for rid, r in prepared.rsus.items()
            },
            rsu_compute_hz={rid: r.compute_hz for rid, r in prepared.rsus.items()},
        )

    n = len(trace)
    edge = sum(v for k, v in tier_counts.items() if k != ServiceTier.DATA_CENTER.value)
    return ReplayMetrics(
        count=n,
        tier_counts=tier_counts,
        edge_fraction=edge / n if n else 0.0,
        delay_total_s=total,
        delay_mean_s=total / n if n else 0.0,
        dc_delay_total_s=dc_total,
        dc_delay_dedup_s=dedup_total,
        dc_dedup_count=dedup_count,
        outcomes=outcomes,
        constraints=constraints,
    )


@dataclass
class RunResult:
    scenario: Scenario
    prepared: Prepared
    trace: list[DemandEntry]
    instance: SolveInstance
    reports: dict[str, SolveReport]
    metrics: ReplayMetrics

    def to_dict(self) -> dict:
        """Deterministic document for export; no timing, no host paths."""
        sc = self.scenario
        h = self.prepared.history
        return {
            "scenario": {
                "name": sc.name,
                "seed": sc.seed,
                "areas": sc.areas,
                "rho_variant": sc.rho_variant,
                "zipf_a": sc.zipf_a,
                "demand_count": sc.demand_count,
                "top_k": sc.top_k,
                "age_clusters": sc.age_clusters,
                "cars": [c.car_id for c in sc.cars],
                "rsus": [r.rsu_id for r in sc.rsus],
            },
            "training": {
                "epochs": h.epochs,
                "train_loss": h.train_loss,
                "train_acc": h.train_acc,
                "test_loss": h.test_loss,
                "test_acc": h.test_acc,
            },
            "cars": [
                {
                    "car_id": c.car_id,
                    "serving_rsu": c.serving_rsu.rsu_id,
                    "areas": list(c.recommendations),
                    "wifi_share_mbps": c.wifi_share_mbps,
                    "recommended_per_area": {
                        str(a): len(r.items) for a, r in c.recommendations.items()
                    },
                    "recommended": len(c.merged.items),
                    "cached": len(c.admission.admitted),
                    "cache_used_mb": c.store.used_mb,
                    "plan": [
                        {
                            "rsu_id": e.rsu_id,
                            "leg": e.leg,
                            "entry_time_s": e.entry_time_s,
                            "dwell_s": e.dwell_s,
                            "rho": e.rho,
                            "q": e.q,
                            "d_perp_m": e.d_perp_m,
                        }
                        for e in c.plan.entries
                    ],
                }
                for c in self.prepared.cars
            ],
            "rsu_caches": {
                str(rid): {
                    "admitted": len(adm.admitted),
                    "used_mb": adm.store.used_mb,
                }
                for rid, adm in self.prepared.rsu_admissions.items()
            },
            "solver": {rule: rep.to_dict() for rule, rep in self.reports.items()},
            "replay": self.metrics.to_dict(),
            "outcomes": [
                {
                    "time_s": o.time_s,
                    "passenger_id": o.passenger_id,
                    "car_id": o.car_id,
                    "rsu_id": o.rsu_id,
                    "content_id": o.content_id,
                    "fmt": o.fmt,
                    "tier": o.tier,
                    "delay_s": o.delay_s,
                    "dc_first_fetch": o.dc_first_fetch,
                }
                for o in self.metrics.outcomes
            ],
        }


def run(
    scenario: Scenario,
    rules: list[str] | None = None,
    skip_solve: bool = False,
    zipf_a: float | None = None,
) -> RunResult:
    """Full pipeline for one scenario."""
    prepared = prepare(scenario)
    trace = sample_trace(prepared, zipf_a=zipf_a)
    inst = build_instance(prepared, trace)
    reports: dict[str, SolveReport] = {}
    if not skip_solve:
        base = scenario.solver
        for rule in rules or [base.rule]:
            cfg = SolveConfig(
                rule=rule,
                alpha=base.alpha,
                beta=base.beta,
                round_threshold=base.round_threshold,
                epsilon=base.epsilon,
                max_iter=base.max_iter,
                seed=base.seed,
                pgd_tol=base.pgd_tol,
                pgd_max_steps=base.pgd_max_steps,
                repair_max_flips=base.repair_max_flips,
            )
            reports[rule] = solve(inst, cfg)
    metrics = replay(prepared, trace)
    return RunResult(
        scenario=scenario,
        prepared=prepared,
        trace=trace,
        instance=inst,
        reports=reports,
        metrics=metrics,
    )
