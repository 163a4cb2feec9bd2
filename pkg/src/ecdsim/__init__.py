"""Edge content delivery (ECD) and CDN cost simulator."""

from .catalog import Catalog, ContentMeta, Directory, bs_share, priority_order, record_request
from .cdn import CdnState
from .ecd import EcdState, EffectKind, InvariantViolation, ScenarioParams, ServeOutcome, SideEffect, initial_placement
from .engine import RunReport, Scenario, run_scenario, sweep
from .metrics import (
    ComparisonReport,
    CostLedger,
    DistanceParams,
    accrue,
    casestudy_serving_costs,
    casestudy_upload_costs,
    comparison_report,
)
from .topology import (
    BaseStationGraph,
    DistanceMatrix,
    PoolRanking,
    all_pairs_shortest_paths,
    distance_table,
    rank_pools,
    route_request,
    validate_graph,
)
from .workload import RequestEvent, Trace, generate_zipf_trace, load_trace, save_trace

__version__ = "0.1.0"
