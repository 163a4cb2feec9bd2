"""Five-station YouTube example: fixed inputs and a scripted reproduction.

The cost table below is printed with one asymmetric cell (D to A is 65,
A to D is 50). Ranking and the serving-cost closed forms use it verbatim;
routing and the state machine use the symmetric version with A-D = 50.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ecd import EcdState, EffectKind, ScenarioParams
from .metrics import DistanceParams, casestudy_serving_costs, casestudy_upload_costs
from .topology import (
    BaseStationGraph,
    all_pairs_shortest_paths,
    distance_table,
    rank_pools,
    validate_graph,
)

STATIONS = ("A", "B", "C", "D", "E")
PRINTED_TABLE = (
    (0, 10, 35, 50, 15),
    (10, 0, 30, 45, 20),
    (35, 30, 0, 75, 50),
    (65, 45, 75, 0, 50),
    (15, 20, 50, 50, 0),
)
N_VIDEOS = 1000
CAPACITY = 10
PARAMS = dict(K=2, delta="1/10", eps_fill="1/3", eps_share="1/3")


def printed_graph() -> BaseStationGraph:
    return validate_graph(STATIONS, PRINTED_TABLE, directed=True)


def symmetric_graph() -> BaseStationGraph:
    w = [list(row) for row in PRINTED_TABLE]
    w[3][0] = w[0][3]
    return validate_graph(STATIONS, w)


def video_ids() -> list[str]:
    return [f"v{i}" for i in range(1, N_VIDEOS + 1)]


def history() -> dict[str, int]:
    """Request history with v1 > v2 > ... and r(v23) = 100; the tail ties at 0."""
    return {f"v{i}": max(0, 123 - i) for i in range(1, N_VIDEOS + 1)}


def build_state(counts: dict[str, int] | None = None, params: ScenarioParams | None = None) -> EcdState:
    """ECD state after initial delivery of v1..v1000 on the symmetric five-station graph."""
    counts = history() if counts is None else counts
    params = params or ScenarioParams(**PARAMS)
    state = EcdState(all_pairs_shortest_paths(symmetric_graph()), params, CAPACITY)
    for vid in video_ids():
        state.seed_content(vid, counts.get(vid, 0))
    state.place_initial()
    return state


@dataclass
class Check:
    name: str
    expected: object
    actual: object
    passed: bool

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: expected {self.expected}, got {self.actual}"


def _close(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol


def run_checks() -> list[Check]:
    checks = []

    ranking = rank_pools(distance_table(printed_graph()))
    totals = {s: int(v) for s, v in sorted(ranking.totals().items())}
    want_totals = {"A": 110, "B": 105, "C": 190, "D": 235, "E": 135}
    checks.append(Check("row totals", want_totals, totals, totals == want_totals))
    order = ", ".join(ranking.order)
    checks.append(Check("ranking order", "B, A, E, C, D", order, order == "B, A, E, C, D"))

    sym = all_pairs_shortest_paths(symmetric_graph())
    path = "-".join(sym.path("C", "E"))
    checks.append(Check("route C to E", "C-A-E (50)", f"{path} ({sym.cost('C', 'E'):g})",
                        path == "C-A-E" and sym.cost("C", "E") == 50))

    state = build_state()
    spans = {"B": (1, 10), "A": (11, 20), "E": (21, 23), "C": (24, 26), "D": (27, 29)}
    want = {s: [f"v{i}" for i in range(lo, hi + 1)] for s, (lo, hi) in spans.items()}
    got = state.placement()
    checks.append(Check("initial placement", {s: _span(v) for s, v in want.items()},
                        {s: _span(v) for s, v in got.items()}, got == want))

    # v25 climbs from C to E once it is requested more than 1.1 x r(v23) = 110 times
    fx = []
    while state.catalog["v25"].total_requests < 111:
        fx = state.handle_request("C", "v25", 0).side_effects
    moves = [(f.kind.value, f.content, f.src, f.dst) for f in fx]
    want_moves = [("promote", "v25", "C", "E"), ("demote", "v23", "E", "C")]
    checks.append(Check("case 1 swap at r(v25)=111", want_moves, moves, moves == want_moves))

    out = state.handle_request("B", "v999", 1)
    evicted = [f.content for f in out.side_effects if f.kind is EffectKind.EVICT]
    checks.append(Check("cloud miss lands in D and deletes v29", ("cloud", ["v29"]), (out.source, evicted),
                        out.source == "cloud" and evicted == ["v29"] and "v999" in state.servers["D"].cache_pool))

    state.handle_upload("E", "upload1", 2)
    ok = ("upload1" in state.servers["E"].content_server and "upload1" not in state.cloud
          and "upload1" in state.descriptions)
    checks.append(Check("upload stays at E, described at B", True, ok and state.top_pool == "B", ok))

    up = casestudy_upload_costs(DistanceParams(), 0.2)
    checks.append(Check("upload cost CDN/ECD", (1000, 280), (up.cdn, up.ecd), (up.cdn, up.ecd) == (1000, 280)))
    checks.append(Check("upload saving", "72%", f"{up.saving:.2%}", up.saving == 0.72))

    sc = casestudy_serving_costs(distance_table(printed_graph()), 10, DistanceParams())
    costs = (sc.cdn, sc.ecd_worst, sc.ecd_best)
    checks.append(Check("serving cost CDN/worst/best", (775000, 235000, 105000), costs,
                        costs == (775000, 235000, 105000)))
    checks.append(Check("saving worst case", "69.68% +/- 0.05pp", f"{sc.saving_worst:.2%}",
                        _close(sc.saving_worst, 0.6968, 0.0005)))
    checks.append(Check("saving best case", "86.45% +/- 0.05pp", f"{sc.saving_best:.2%}",
                        _close(sc.saving_best, 0.8645, 0.0005)))
    return checks


def _span(ids: list[str]) -> str:
    if len(ids) < 2:
        return ",".join(ids)
    nums = [int(i[1:]) for i in ids]
    if nums == list(range(nums[0], nums[0] + len(nums))):
        return f"{ids[0]}-{ids[-1]}"
    return ",".join(ids)
