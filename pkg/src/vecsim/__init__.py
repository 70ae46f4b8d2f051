"""Infotainment caching for connected cars: demand prediction,
passenger-aware recommendation, RSU route planning, and delay-minimizing
content placement with an edge-assisted service chain."""

from .caching import (
    CacheStore,
    HitResult,
    ServiceTier,
    admit_car,
    admit_rsu,
    check_constraints,
    compute_allocation,
    lookup,
)
from .catalog import (
    Catalog,
    ContentItem,
    DemandEntry,
    DemographicRecord,
    Passenger,
    load_catalog,
    load_demographics,
    sample_demands,
    zipf_popularity,
)
from .links import (
    backhaul_delay_s,
    passenger_delay_s,
    rsu_capacity_mbps,
    rsu_download_delay_s,
    wifi_rate_mbps,
)
from .mlp import MlpModel, TrainConfig, predict_area_probabilities, train
from .mobility import CarState, RoutePlan, RsuNode, WifiSpec, plan_route
from .pipeline import Prepared, RunResult, build_instance, prepare, replay, run, sample_trace
from .recommend import ClusterHierarchy, Recommendation, build_hierarchy, kmeans, recommend
from .scenario import Scenario, ScenarioError, load_scenario
from .solver import (
    DecisionVector,
    SolveConfig,
    SolveInstance,
    SolveReport,
    brute_force_solve,
    solve,
    total_delay,
)

__version__ = "0.1.0"

__all__ = [
    "CacheStore",
    "CarState",
    "Catalog",
    "ClusterHierarchy",
    "ContentItem",
    "DecisionVector",
    "DemandEntry",
    "DemographicRecord",
    "HitResult",
    "MlpModel",
    "Passenger",
    "Prepared",
    "Recommendation",
    "RoutePlan",
    "RsuNode",
    "RunResult",
    "Scenario",
    "ScenarioError",
    "ServiceTier",
    "SolveConfig",
    "SolveInstance",
    "SolveReport",
    "TrainConfig",
    "WifiSpec",
    "admit_car",
    "admit_rsu",
    "backhaul_delay_s",
    "brute_force_solve",
    "build_hierarchy",
    "build_instance",
    "check_constraints",
    "compute_allocation",
    "kmeans",
    "load_catalog",
    "load_demographics",
    "load_scenario",
    "lookup",
    "passenger_delay_s",
    "plan_route",
    "predict_area_probabilities",
    "prepare",
    "recommend",
    "replay",
    "rsu_capacity_mbps",
    "rsu_download_delay_s",
    "run",
    "sample_demands",
    "sample_trace",
    "solve",
    "total_delay",
    "train",
    "wifi_rate_mbps",
    "zipf_popularity",
]
