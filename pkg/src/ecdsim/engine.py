"""Scenario files, single runs of ECD and CDN on one trace, and parameter sweeps."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .cdn import CdnState
from .ecd import EcdState, InvariantViolation, ScenarioParams, ServeOutcome, check_trigger_soundness
from .metrics import CostLedger, DistanceParams, accrue, as_fraction, comparison_report
from .topology import (
    BaseStationGraph,
    DistanceMatrix,
    all_pairs_shortest_paths,
    random_topology,
    rank_pools,
    validate_graph,
)
from .workload import REQ, Trace, content_names, generate_zipf_trace, load_trace, zipf_weights

log = logging.getLogger(__name__)

Fractional = Union[float, int, str]


class ScenarioError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GeneratedTopology(_Strict):
    n_stations: int = Field(ge=1)
    low: int = Field(10, ge=0)
    high: int = Field(100, ge=0)
    seed: int = 0


class TopologySpec(_Strict):
    stations: list[str] | None = None
    weights: list[list[float]] | None = None
    directed: bool = False
    generate: GeneratedTopology | None = None

    @model_validator(mode="after")
    def _one_form(self):
        explicit = self.stations is not None or self.weights is not None
        if explicit == (self.generate is not None):
            raise ValueError("give either stations+weights or generate, not both")
        if explicit and (self.stations is None or self.weights is None):
            raise ValueError("explicit topology needs both stations and weights")
        return self


class ParamsSpec(_Strict):
    K: int = Field(1, ge=1)
    delta: Fractional = 0.1
    eps_fill: Fractional = "1/3"
    eps_share: Fractional = "1/3"
    p_cloud_upload: Fractional = 0.2
    priority_window: int | None = None

    @field_validator("delta", "eps_fill", "eps_share", "p_cloud_upload")
    @classmethod
    def _readable(cls, v):
        try:
            as_fraction(v)
        except (TypeError, ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"not a number or a/b fraction: {v!r}") from exc
        return v


class DistanceSpec(_Strict):
    d_user_cloud: float = Field(1000, ge=0)
    d_user_proxy: float = Field(500, ge=0)
    d_proxy_cloud: float = Field(500, ge=0)
    d_user_edge: float = Field(100, ge=0)
    d_edge_cloud: float = Field(900, ge=0)
    price_migrations: bool = True


class ZipfHistory(_Strict):
    exponent: float = Field(1.0, ge=0)
    total: int = Field(ge=0)


class ContentsSpec(_Strict):
    n: int = Field(0, ge=0)
    prefix: str = "c"
    size: int = Field(1, ge=1)
    prior_counts: list[int] | None = None
    prior_zipf: ZipfHistory | None = None

    @model_validator(mode="after")
    def _one_prior(self):
        if self.prior_counts is not None and self.prior_zipf is not None:
            raise ValueError("give prior_counts or prior_zipf, not both")
        if self.prior_counts is not None and len(self.prior_counts) != self.n:
            raise ValueError(f"prior_counts has {len(self.prior_counts)} entries for {self.n} contents")
        if self.prior_counts is not None and min(self.prior_counts, default=0) < 0:
            raise ValueError("prior_counts must be >= 0")
        return self

    def history(self) -> list[int]:
        if self.prior_counts is not None:
            return list(self.prior_counts)
        if self.prior_zipf is not None and self.n:
            w = zipf_weights(self.n, self.prior_zipf.exponent)
            return [int(x) for x in np.floor(w * self.prior_zipf.total)]
        return [0] * self.n


class ZipfWorkload(_Strict):
    n_requests: int = Field(ge=0)
    exponent: float = Field(1.0, ge=0)
    seed: int = 0
    p_upload: float = Field(0.0, ge=0, le=1)
    upload_request_share: float = Field(0.1, ge=0, le=1)


class WorkloadSpec(_Strict):
    trace: str | None = None
    zipf: ZipfWorkload | None = None

    @model_validator(mode="after")
    def _one_source(self):
        if self.trace is not None and self.zipf is not None:
            raise ValueError("give a trace path or zipf parameters, not both")
        return self


class Scenario(_Strict):
    topology: TopologySpec
    capacity: int | dict[str, int] = 10
    params: ParamsSpec = ParamsSpec()
    distances: DistanceSpec = DistanceSpec()
    contents: ContentsSpec = ContentsSpec()
    workload: WorkloadSpec = WorkloadSpec()
    models: list[Literal["ECD", "CDN"]] = ["ECD", "CDN"]
    mode: Literal["general", "paper"] = "general"
    check_invariants: bool = True

    # directory used to resolve a relative trace path; not part of the schema
    _base_dir: Path = Path(".")

    @model_validator(mode="after")
    def _consistent(self):
        if self.workload.zipf is not None and self.contents.n < 1:
            raise ValueError("a zipf workload needs contents.n >= 1")
        if not self.models:
            raise ValueError("models must name at least one of ECD, CDN")
        return self

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: not valid JSON ({exc})") from None
        sc = cls.from_dict(doc, source=str(path))
        sc._base_dir = path.parent
        return sc

    @classmethod
    def from_dict(cls, doc: dict, source: str = "<scenario>") -> "Scenario":
        try:
            return cls.model_validate(doc)
        except ValidationError as exc:
            raise ScenarioError(f"{source}: schema violation\n{exc}") from None

    def to_dict(self) -> dict:
        return self.model_dump(mode="json")

    def graph(self) -> BaseStationGraph:
        t = self.topology
        if t.generate is not None:
            g = t.generate
            return random_topology(g.n_stations, g.low, g.high, g.seed)
        return validate_graph(t.stations, t.weights, t.directed)

    def scenario_params(self, n_stations: int | None = None) -> ScenarioParams:
        p = self.params
        sp = ScenarioParams(
            K=p.K, delta=p.delta, eps_fill=p.eps_fill, eps_share=p.eps_share,
            distances=DistanceParams(**self.distances.model_dump()),
            p_cloud_upload=p.p_cloud_upload, priority_window=p.priority_window,
        )
        if n_stations is not None:
            sp.check(n_stations)
        return sp

    def trace(self, stations: list[str]) -> Trace:
        w = self.workload
        if w.trace is not None:
            path = Path(w.trace)
            if not path.is_absolute():
                path = self._base_dir / path
            return load_trace(path)
        if w.zipf is not None:
            z = w.zipf
            return generate_zipf_trace(
                self.contents.n, z.n_requests, z.exponent, stations, z.seed,
                prefix=self.contents.prefix, p_upload=z.p_upload, upload_request_share=z.upload_request_share,
            )
        return Trace([])


@dataclass
class RunReport:
    scenario: dict
    ranking: list[dict]
    initial_placement: dict | None
    final_state: dict
    events: dict
    ledgers: dict
    comparison: dict | None
    invariants: dict
    event_log: dict[str, list[dict]] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "ranking": self.ranking,
            "initial_placement": self.initial_placement,
            "final_state": self.final_state,
            "events": self.events,
            "ledgers": self.ledgers,
            "comparison": self.comparison,
            "invariants": self.invariants,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _canonical(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def _digest(records: list[dict]) -> dict:
    h = hashlib.sha256()
    kinds: dict[str, int] = {}
    sources: dict[str, int] = {}
    for rec in records:
        h.update(_canonical(rec).encode())
        h.update(b"\n")
        sources[rec["source"]] = sources.get(rec["source"], 0) + 1
        for fx in rec["side_effects"]:
            kinds[fx["kind"]] = kinds.get(fx["kind"], 0) + 1
    return {"count": len(records), "sha256": h.hexdigest(), "sources": sources, "effects": kinds}


def build_states(sc: Scenario, dist: DistanceMatrix, params: ScenarioParams):
    history = sc.contents.history()
    names = content_names(sc.contents.n, sc.contents.prefix)
    ecd = cdn = None
    if "ECD" in sc.models:
        ecd = EcdState(dist, params, sc.capacity)
        for cid, h in zip(names, history):
            ecd.seed_content(cid, h, sc.contents.size)
    if "CDN" in sc.models:
        cdn = CdnState(list(dist.stations), sc.capacity, paper_mode=sc.mode == "paper")
        for cid, h in zip(names, history):
            cdn.seed_content(cid, h, sc.contents.size)
    return ecd, cdn


def run_scenario(sc: Scenario, trace: Trace | None = None, check: bool | None = None) -> RunReport:
    """Replay one trace through the requested models and report costs.

    Invariants are checked after every event for the contents and stations
    the event touched, and once over the whole state at the end.
    """
    g = sc.graph()
    dist = all_pairs_shortest_paths(g)
    ranking = rank_pools(dist)
    params = sc.scenario_params(len(g))
    if trace is None:
        trace = sc.trace(list(g.stations))
    unknown = sorted(trace.stations() - set(g.stations))
    if unknown:
        raise ScenarioError(f"trace references unknown station(s): {', '.join(unknown)}")
    check = sc.check_invariants if check is None else check

    ecd, cdn = build_states(sc, dist, params)
    initial = ecd.place_initial() if ecd is not None else None
    if ecd is not None and check:
        ecd.check_invariants()

    ecd_ledger, cdn_ledger = CostLedger("ecd"), CostLedger("cdn")
    ecd_log: list[dict] = []
    cdn_log: list[dict] = []
    size = sc.contents.size
    for i, ev in enumerate(trace.events):
        base = {"i": i, "t": ev.at, "op": ev.kind, "station": ev.station, "content": ev.content}
        if ecd is not None:
            try:
                if ev.kind == REQ:
                    out = ecd.handle_request(ev.station, ev.content, ev.at)
                else:
                    out = ServeOutcome("upload", None, 0.0, ecd.handle_upload(ev.station, ev.content, ev.at, size))
            except (KeyError, ValueError) as exc:
                raise InvariantViolation(str(exc), i) from None
            accrue(ecd_ledger, out, params.distances)
            rec = {**base, **out.to_dict()}
            ecd_log.append(rec)
            if check:
                problems = check_trigger_soundness(rec["side_effects"])
                if problems:
                    raise InvariantViolation("; ".join(problems), i)
                touched = {ev.content, *(fx.content for fx in out.side_effects)}
                stations = {ev.station}
                for fx in out.side_effects:
                    stations.update(s for s in (fx.src, fx.dst) if s in ecd.servers)
                try:
                    ecd.check_invariants(touched, stations)
                except InvariantViolation as exc:
                    raise InvariantViolation(str(exc), i) from None
        if cdn is not None:
            try:
                if ev.kind == REQ:
                    out = cdn.cdn_handle_request(ev.station, ev.content, ev.at)
                else:
                    out = ServeOutcome("upload", None, 0.0, cdn.cdn_handle_upload(ev.station, ev.content, ev.at, size))
            except (KeyError, ValueError) as exc:
                raise InvariantViolation(str(exc), i) from None
            accrue(cdn_ledger, out, params.distances)
            cdn_log.append({**base, **out.to_dict()})
            if check:
                if any(fx.src in cdn.proxies and fx.dst in cdn.proxies for fx in out.side_effects):
                    raise InvariantViolation("inter-proxy transfer in the CDN log", i)
                try:
                    cdn.check_invariants([ev.station])
                except InvariantViolation as exc:
                    raise InvariantViolation(str(exc), i) from None

    if check:
        if ecd is not None:
            ecd.check_invariants()
        if cdn is not None:
            cdn.check_invariants()

    ledgers = {}
    final = {}
    events = {}
    if ecd is not None:
        ledgers["ecd"] = ecd_ledger.to_dict()
        final["ecd"] = ecd.snapshot()
        events["ecd"] = _digest(ecd_log)
    if cdn is not None:
        ledgers["cdn"] = cdn_ledger.to_dict()
        final["cdn"] = {"proxies": cdn.placement(), "cloud_size": len(cdn.cloud)}
        events["cdn"] = _digest(cdn_log)
    comparison = None
    if ecd is not None and cdn is not None and cdn_ledger.total > 0:
        comparison = comparison_report(ecd_ledger, cdn_ledger).to_dict()
    return RunReport(
        scenario=sc.to_dict(),
        ranking=ranking.to_list(),
        initial_placement=initial,
        final_state=final,
        events=events,
        ledgers=ledgers,
        comparison=comparison,
        invariants={"checked": bool(check), "events": len(trace), "violations": 0},
        event_log={"ecd": ecd_log, "cdn": cdn_log},
    )


# -- sweeps --------------------------------------------------------------

SWEEP_COLUMNS = ("stations", "requests", "seed", "ecd_total", "cdn_total", "saving")


@dataclass(frozen=True)
class GridPoint:
    stations: int
    requests: int
    seed: int


@dataclass
class SweepResult:
    reports: dict[GridPoint, RunReport]
    failures: dict[GridPoint, str]

    def rows(self) -> list[dict]:
        out = []
        for pt in sorted(self.reports, key=lambda p: (p.stations, p.requests, p.seed)):
            led = self.reports[pt].ledgers
            ecd_total = led.get("ecd", {}).get("total")
            cdn_total = led.get("cdn", {}).get("total")
            saving = 1 - ecd_total / cdn_total if ecd_total is not None and cdn_total else None
            out.append({"stations": pt.stations, "requests": pt.requests, "seed": pt.seed,
                        "ecd_total": ecd_total, "cdn_total": cdn_total, "saving": saving})
        return out

    def to_csv(self) -> str:
        lines = [",".join(SWEEP_COLUMNS)]
        for row in self.rows():
            lines.append(",".join("" if row[c] is None else repr(row[c]) if isinstance(row[c], float) else str(row[c])
                                  for c in SWEEP_COLUMNS))
        return "\n".join(lines) + "\n"


def point_scenario(base: Scenario, pt: GridPoint) -> Scenario:
    doc = base.to_dict()
    topo = doc["topology"]
    gen = topo.get("generate") or {"low": 10, "high": 100}
    doc["topology"] = {"generate": {"n_stations": pt.stations, "low": gen["low"], "high": gen["high"], "seed": pt.seed}}
    z = (doc["workload"] or {}).get("zipf") or {}
    doc["workload"] = {"zipf": {**z, "n_requests": pt.requests, "seed": pt.seed}}
    doc["params"]["K"] = min(doc["params"]["K"], pt.stations)
    if isinstance(doc["capacity"], dict):
        raise ScenarioError("sweeps need a single integer capacity")
    return Scenario.from_dict(doc)


def _run_point(args) -> tuple[GridPoint, RunReport | None, str | None]:
    base_doc, pt, check = args
    try:
        sc = point_scenario(Scenario.from_dict(base_doc), pt)
        return pt, run_scenario(sc, check=check), None
    except Exception as exc:  # one bad grid point must not sink the sweep
        return pt, None, f"{type(exc).__name__}: {exc}"


def sweep(
    base: Scenario,
    stations: list[int],
    requests: list[int],
    seeds: list[int],
    jobs: int = 1,
    check: bool | None = None,
) -> SweepResult:
    points = [GridPoint(s, r, seed) for s in stations for r in requests for seed in seeds]
    if not points:
        raise ScenarioError("empty sweep grid")
    base_doc = base.to_dict()
    tasks = [(base_doc, pt, check) for pt in points]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_point, tasks))
    else:
        results = [_run_point(t) for t in tasks]
    reports, failures = {}, {}
    for pt, rep, err in results:
        if err is None:
            reports[pt] = rep
        else:
            log.warning("sweep point %s failed: %s", pt, err)
            failures[pt] = err
    return SweepResult(reports, failures)
