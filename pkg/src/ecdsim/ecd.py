"""ECD state machine.

Every base station owns an unbounded content server and a capacity-limited
cache pool. Pools are ranked by total shortest-path cost; the top ``K``
pools use their full capacity and the rest only ``floor(eps_fill * capacity)``.
Requests are served from the nearest copy and then drive three update flows:
promotion towards better-ranked pools, share-driven replication out of the
top pools, and admission of user uploads from a content server into the
lowest-ranked pool.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .catalog import (
    IN_CLOUD,
    IN_POOL,
    IN_SERVER,
    Catalog,
    ContentMeta,
    Directory,
    DuplicateContent,
    bs_share,
    priority_order,
    record_request,
)
from .metrics import DistanceParams, as_fraction
from .topology import CLOUD, DistanceMatrix, PoolRanking, _plain, natural_key, rank_pools, route_request


class EffectKind(str, Enum):
    PROMOTE = "promote"
    DEMOTE = "demote"
    EVICT = "evict"
    REPLICATE = "replicate"
    PLACE = "place"
    ADMIT = "admit"
    CLOUD_UPLOAD = "cloud_upload"
    UPLOAD = "upload"


class InvariantViolation(RuntimeError):
    def __init__(self, message: str, event_index: int | None = None):
        self.event_index = event_index
        if event_index is not None:
            message = f"event {event_index}: {message}"
        super().__init__(message)


class UnknownStation(KeyError):
    def __str__(self) -> str:
        return f"unknown station {self.args[0]!r}"


@dataclass
class SideEffect:
    kind: EffectKind
    content: str
    src: str | None = None
    dst: str | None = None
    hop_cost: float = 0.0
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "content": self.content, "src": self.src, "dst": self.dst,
             "hop_cost": _plain(self.hop_cost)}
        if self.detail:
            d["detail"] = self.detail
        return d


@dataclass
class ServeOutcome:
    source: str
    holder: str | None
    transit_cost: float
    side_effects: list[SideEffect] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "holder": self.holder,
            "transit_cost": _plain(self.transit_cost),
            "side_effects": [fx.to_dict() for fx in self.side_effects],
        }


@dataclass
class ScenarioParams:
    K: int = 1
    delta: Fraction = Fraction(1, 10)
    eps_fill: Fraction = Fraction(1, 3)
    eps_share: Fraction = Fraction(1, 3)
    distances: DistanceParams = field(default_factory=DistanceParams)
    p_cloud_upload: Fraction = Fraction(1, 5)
    priority_window: int | None = None

    def __post_init__(self) -> None:
        self.delta = as_fraction(self.delta)
        self.eps_fill = as_fraction(self.eps_fill)
        self.eps_share = as_fraction(self.eps_share)
        self.p_cloud_upload = as_fraction(self.p_cloud_upload)
        if not isinstance(self.K, int) or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K!r}")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if not 0 < self.eps_fill <= 1:
            raise ValueError("eps_fill must lie in (0, 1]")
        if not 0 < self.eps_share <= 1:
            raise ValueError("eps_share must lie in (0, 1]")
        if not 0 <= self.p_cloud_upload <= 1:
            raise ValueError("p_cloud_upload must lie in [0, 1]")
        if self.priority_window is not None and self.priority_window < 0:
            raise ValueError("priority_window must be >= 0")

    def check(self, n_stations: int) -> None:
        if self.K > n_stations:
            raise ValueError(f"K={self.K} exceeds the {n_stations} available cache pools")

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "delta": str(self.delta),
            "eps_fill": str(self.eps_fill),
            "eps_share": str(self.eps_share),
            "p_cloud_upload": str(self.p_cloud_upload),
            "priority_window": self.priority_window,
        }


def effective_capacity(capacity: int, is_top_k: bool, eps_fill: Fraction) -> int:
    return capacity if is_top_k else math.floor(eps_fill * capacity)


@dataclass
class EdgeServer:
    station: str
    capacity: int
    rank: int
    is_top_k: bool
    effective_capacity: int
    content_server: set[str] = field(default_factory=set)
    cache_pool: set[str] = field(default_factory=set)
    used: int = 0

    @property
    def free(self) -> int:
        return self.effective_capacity - self.used


def _capacity_map(capacities: int | Mapping[str, int], stations: Sequence[str]) -> dict[str, int]:
    if isinstance(capacities, int):
        caps = dict.fromkeys(stations, capacities)
    else:
        missing = [s for s in stations if s not in capacities]
        if missing:
            raise ValueError(f"no capacity given for {missing}")
        caps = {s: capacities[s] for s in stations}
    for s, c in caps.items():
        if not isinstance(c, int) or c < 0:
            raise ValueError(f"capacity of {s} must be a nonnegative integer, got {c!r}")
    return caps


def initial_placement(
    ranking: PoolRanking,
    contents: Sequence[ContentMeta | str],
    params: ScenarioParams,
    capacities: int | Mapping[str, int],
) -> dict[str, list[str]]:
    """Greedy fill in rank order, highest priority first, no duplicates.

    ``contents`` must already be in priority order. Top-K pools take their
    full capacity, the remaining pools their reduced share; whatever is left
    stays in the cloud only.
    """
    order = ranking.order
    params.check(len(order))
    caps = _capacity_map(capacities, order)
    items = [(c, 1) if isinstance(c, str) else (c.id, c.size) for c in contents]
    if len({cid for cid, _ in items}) != len(items):
        raise ValueError("initial placement forbids duplicated contents")
    placement: dict[str, list[str]] = {s: [] for s in order}
    pos = 0
    for rank, station in enumerate(order, start=1):
        room = effective_capacity(caps[station], rank <= params.K, params.eps_fill)
        while pos < len(items) and items[pos][1] <= room:
            placement[station].append(items[pos][0])
            room -= items[pos][1]
            pos += 1
    return placement


class EcdState:
    """Mutable world of one ECD run; operations are applied one event at a time."""

    def __init__(
        self,
        dist: DistanceMatrix,
        params: ScenarioParams,
        capacities: int | Mapping[str, int],
        ranking: PoolRanking | None = None,
    ):
        self.dist = dist
        self.params = params
        self.ranking = ranking or rank_pools(dist)
        params.check(len(dist))
        self.order = self.ranking.order
        self.rank_of = {s: r for r, s in enumerate(self.order, start=1)}
        caps = _capacity_map(capacities, self.order)
        self.servers = {
            s: EdgeServer(s, caps[s], r, r <= params.K, effective_capacity(caps[s], r <= params.K, params.eps_fill))
            for s, r in self.rank_of.items()
        }
        self.cloud: set[str] = set()
        self.catalog = Catalog()
        self.directory = Directory()
        self.replicas: set[tuple[str, str]] = set()
        self.replicated_ever: set[tuple[str, str]] = set()
        # descriptions of uploaded contents, kept by the rank-1 pool
        self.descriptions: set[str] = set()
        self.now = 0

    @property
    def top_pool(self) -> str:
        return self.order[0]

    @property
    def lowest_pool(self) -> str:
        return self.order[-1]

    # -- bookkeeping -----------------------------------------------------

    def seed_content(self, cid: str, history: int = 0, size: int = 1) -> ContentMeta:
        """Register a content that starts out in the cloud."""
        meta = self.catalog.add(ContentMeta(cid, size=size))
        meta.seed_history(history)
        self.cloud.add(cid)
        self.directory.add(cid, IN_CLOUD)
        return meta

    def count(self, cid: str) -> int:
        meta = self.catalog[cid]
        w = self.params.priority_window
        if w is None:
            return meta.total_requests
        return meta.requests_between(self.now - w, self.now)

    def _key(self, cid: str) -> tuple:
        return (-self.count(cid), natural_key(cid))

    def least_requested(self, station: str, exclude: Iterable[str] = ()) -> str | None:
        pool = self.servers[station].cache_pool.difference(exclude)
        return max(pool, key=self._key) if pool else None

    def primary_pool(self, cid: str) -> str | None:
        for s in self.directory.pools_of(cid):
            if (cid, s) not in self.replicas:
                return s
        return None

    def below(self, station: str) -> str | None:
        r = self.rank_of[station]
        return self.order[r] if r < len(self.order) else None

    def above(self, station: str) -> str | None:
        r = self.rank_of[station]
        return self.order[r - 2] if r > 1 else None

    def _put(self, station: str, cid: str, replica: bool = False) -> list[SideEffect]:
        srv = self.servers[station]
        srv.cache_pool.add(cid)
        srv.used += self.catalog[cid].size
        self.directory.add(cid, IN_POOL, station)
        if replica:
            self.replicas.add((cid, station))
        if srv.is_top_k and cid not in self.cloud:
            self.cloud.add(cid)
            self.directory.add(cid, IN_CLOUD)
            return [SideEffect(EffectKind.CLOUD_UPLOAD, cid, station, CLOUD)]
        return []

    def _take(self, station: str, cid: str) -> None:
        srv = self.servers[station]
        srv.cache_pool.remove(cid)
        srv.used -= self.catalog[cid].size
        self.directory.discard(cid, IN_POOL, station)
        self.replicas.discard((cid, station))

    def _delete(self, station: str, cid: str) -> SideEffect:
        count = self.count(cid)
        self._take(station, cid)
        return SideEffect(EffectKind.EVICT, cid, station, None, detail={"count": count})

    def _make_room(self, station: str, size: int, exclude: Iterable[str] = ()) -> list[SideEffect]:
        effects = []
        srv = self.servers[station]
        while srv.free < size:
            victim = self.least_requested(station, exclude)
            if victim is None:
                raise InvariantViolation(f"pool {station} cannot make room for size {size}")
            effects.append(self._delete(station, victim))
        return effects

    def _demote(self, station: str, cid: str) -> list[SideEffect]:
        """Push ``cid`` one rank down; the lowest pool (or a replica) just deletes it."""
        target = self.below(station)
        if target is None or (cid, station) in self.replicas:
            return [self._delete(station, cid)]
        size = self.catalog[cid].size
        hop = self.dist.cost(station, target)
        count = self.count(cid)
        self._take(station, cid)
        tgt = self.servers[target]
        if cid in tgt.cache_pool:
            # a replica already sits one rank down; it becomes the primary copy
            self.replicas.discard((cid, target))
            return [SideEffect(EffectKind.DEMOTE, cid, station, target, hop, {"count": count, "merged": True})]
        if tgt.effective_capacity < size:
            return [SideEffect(EffectKind.EVICT, cid, station, None, detail={"count": count})]
        effects = [SideEffect(EffectKind.DEMOTE, cid, station, target, hop, {"count": count})]
        effects += self._make_room(target, size)
        effects += self._put(target, cid)
        return effects

    # -- initial delivery ------------------------------------------------

    def place_initial(self, contents: Sequence[ContentMeta | str] | None = None) -> dict[str, list[str]]:
        if any(srv.cache_pool for srv in self.servers.values()):
            raise ValueError("initial placement needs empty cache pools")
        if contents is None:
            contents = priority_order(m for m in self.catalog if m.id in self.cloud)
        for c in contents:
            cid = c if isinstance(c, str) else c.id
            if cid not in self.cloud:
                raise ValueError(f"content {cid} is not in the cloud")
        plan = initial_placement(self.ranking, contents, self.params, {s: v.capacity for s, v in self.servers.items()})
        for station, ids in plan.items():
            for cid in ids:
                self._put(station, cid)
        return plan

    # -- requests --------------------------------------------------------

    def handle_request(self, requester: str, cid: str, at: int) -> ServeOutcome:
        if requester not in self.servers:
            raise UnknownStation(requester)
        meta = self.catalog[cid]
        self.now = at
        record_request(meta, requester, at)
        holders = self.directory.pools_of(cid)
        effects: list[SideEffect] = []
        if requester in holders:
            outcome = ServeOutcome("local-pool", requester, 0.0)
        elif holders:
            holder, transit = route_request(self.dist, requester, holders)
            outcome = ServeOutcome("remote-pool", holder, transit)
        elif meta.origin != CLOUD and cid in self.servers[meta.origin].content_server:
            outcome = ServeOutcome("content-server", meta.origin, self.dist.cost(requester, meta.origin))
        elif cid in self.cloud:
            outcome = ServeOutcome("cloud", None, 0.0)
            effects += self.handle_cloud_miss(cid)
        else:
            raise InvariantViolation(f"content {cid} is not resident anywhere")
        effects += self._run_triggers(cid)
        outcome.side_effects = effects
        return outcome

    def _run_triggers(self, cid: str) -> list[SideEffect]:
        effects = []
        if not self.directory.pools_of(cid):
            effects += self.admit_uploaded(cid)
        primary = self.primary_pool(cid)
        if primary is not None:
            effects += self.promote_if_eligible(cid, primary)
            primary = self.primary_pool(cid)
            if primary is not None and self.servers[primary].is_top_k:
                effects += self.replicate_if_popular(cid, primary)
        return effects

    def promote_if_eligible(self, cid: str, holder: str) -> list[SideEffect]:
        """Case 1: climb one rank while the count beats the next pool's weakest by (1 + delta)."""
        effects: list[SideEffect] = []
        size = self.catalog[cid].size
        while True:
            up = self.above(holder)
            if up is None or (cid, holder) in self.replicas or cid not in self.servers[holder].cache_pool:
                break
            tgt = self.servers[up]
            if cid in tgt.cache_pool or tgt.effective_capacity < size:
                break
            count = self.count(cid)
            ref = self.least_requested(up)
            ref_count = self.count(ref) if ref is not None else 0
            if not count > (1 + self.params.delta) * ref_count:
                break
            self._take(holder, cid)
            promote = SideEffect(
                EffectKind.PROMOTE, cid, holder, up, self.dist.cost(holder, up),
                {"count": count, "ref": ref, "ref_count": ref_count, "delta": str(self.params.delta),
                 "displaced": []},
            )
            effects.append(promote)
            while tgt.free < size:
                victim = self.least_requested(up)
                promote.detail["displaced"].append(victim)
                effects += self._demote(up, victim)
            effects += self._put(up, cid)
            holder = up
        return effects

    def replicate_if_popular(self, cid: str, top_pool: str) -> list[SideEffect]:
        """Case 2: copy from the cloud to every station whose share of requests exceeds eps_share."""
        meta = self.catalog[cid]
        if meta.total_requests == 0 or cid not in self.cloud:
            return []
        effects: list[SideEffect] = []
        for s in self.order:
            if s == top_pool or s not in meta.per_bs_requests:
                continue
            srv = self.servers[s]
            if cid in srv.cache_pool or srv.effective_capacity < meta.size:
                continue
            if not bs_share(meta, s) > self.params.eps_share:
                continue
            effects.append(SideEffect(
                EffectKind.REPLICATE, cid, CLOUD, s,
                detail={"via_count": meta.per_bs_requests[s], "total": meta.total_requests,
                        "eps_share": str(self.params.eps_share)},
            ))
            self.replicated_ever.add((cid, s))
            while srv.free < meta.size:
                effects += self._demote(s, self.least_requested(s, exclude=(cid,)))
            effects += self._put(s, cid, replica=True)
        return effects

    def handle_cloud_miss(self, cid: str) -> list[SideEffect]:
        """Deliver a cloud-only content to the lowest-ranked pool, deleting its weakest to fit."""
        low = self.lowest_pool
        srv = self.servers[low]
        size = self.catalog[cid].size
        if cid in srv.cache_pool or srv.effective_capacity < size:
            return []
        effects = [SideEffect(EffectKind.PLACE, cid, CLOUD, low)]
        effects += self._make_room(low, size, exclude=(cid,))
        effects += self._put(low, cid)
        return effects

    # -- uploads ---------------------------------------------------------

    def handle_upload(self, uploader: str, cid: str, at: int, size: int = 1) -> list[SideEffect]:
        if uploader not in self.servers:
            raise UnknownStation(uploader)
        if cid in self.catalog:
            raise DuplicateContent(f"content {cid!r} already exists")
        self.now = at
        self.catalog.add(ContentMeta(cid, size=size, origin=uploader, created_at=at))
        self.servers[uploader].content_server.add(cid)
        self.directory.add(cid, IN_SERVER, uploader)
        self.descriptions.add(cid)
        return [SideEffect(EffectKind.UPLOAD, cid, uploader, uploader, detail={"described_at": self.top_pool})]

    def admit_uploaded(self, cid: str) -> list[SideEffect]:
        """Copy an uploaded content into the lowest pool once it beats that pool's weakest by (1 + delta)."""
        meta = self.catalog[cid]
        origin = meta.origin
        if origin == CLOUD or cid not in self.servers[origin].content_server or self.directory.pools_of(cid):
            return []
        low = self.lowest_pool
        if self.servers[low].effective_capacity < meta.size:
            return []
        count = self.count(cid)
        ref = self.least_requested(low)
        ref_count = self.count(ref) if ref is not None else 0
        if not count > (1 + self.params.delta) * ref_count:
            return []
        effects = [SideEffect(
            EffectKind.ADMIT, cid, origin, low, self.dist.cost(origin, low),
            {"count": count, "ref": ref, "ref_count": ref_count, "delta": str(self.params.delta)},
        )]
        effects += self._make_room(low, meta.size, exclude=(cid,))
        effects += self._put(low, cid)
        return effects

    # -- inspection ------------------------------------------------------

    def placement(self) -> dict[str, list[str]]:
        return {s: sorted(self.servers[s].cache_pool, key=natural_key) for s in self.order}

    def snapshot(self) -> dict:
        return {
            "pools": self.placement(),
            "replicas": sorted(([c, s] for c, s in self.replicas), key=lambda p: (natural_key(p[0]), natural_key(p[1]))),
            "content_servers": {s: sorted(self.servers[s].content_server, key=natural_key) for s in self.order},
            "cloud_size": len(self.cloud),
            "descriptions": {self.top_pool: len(self.descriptions)},
        }

    def check_invariants(self, contents: Iterable[str] | None = None, stations: Iterable[str] | None = None) -> None:
        """Raise InvariantViolation if the given contents/stations (default: all) are inconsistent."""
        stations = self.order if stations is None else [s for s in stations if s in self.servers]
        for s in stations:
            srv = self.servers[s]
            used = sum(self.catalog[c].size for c in srv.cache_pool)
            if used != srv.used:
                raise InvariantViolation(f"pool {s} books {srv.used} units but holds {used}")
            if used > srv.effective_capacity:
                raise InvariantViolation(f"pool {s} holds {used} > effective capacity {srv.effective_capacity}")
            if srv.is_top_k:
                outside = [c for c in srv.cache_pool if c not in self.cloud]
                if outside:
                    raise InvariantViolation(f"top-K pool {s} holds {outside} without a cloud copy")
        ids = [m.id for m in self.catalog] if contents is None else contents
        for cid in ids:
            meta = self.catalog[cid]
            if sum(meta.per_bs_requests.values()) != meta.total_requests:
                raise InvariantViolation(f"{cid}: per-station counts do not add up to the total")
            actual = set()
            if cid in self.cloud:
                actual.add((IN_CLOUD, None))
            for s, srv in self.servers.items():
                if cid in srv.cache_pool:
                    actual.add((IN_POOL, s))
                if cid in srv.content_server:
                    actual.add((IN_SERVER, s))
            if actual != self.directory.residency(cid):
                raise InvariantViolation(f"{cid}: directory disagrees with store membership")
            if not actual:
                raise InvariantViolation(f"{cid} vanished from cloud, content servers and pools")
            if meta.origin == CLOUD and cid not in self.cloud:
                raise InvariantViolation(f"{cid} was seeded in the cloud but is gone")
            if meta.origin != CLOUD and cid not in self.servers[meta.origin].content_server:
                raise InvariantViolation(f"{cid} left its origin content server {meta.origin}")
            pools = [s for kind, s in actual if kind == IN_POOL]
            copies = [s for s in pools if (cid, s) in self.replicas]
            if len(pools) - len(copies) > 1:
                raise InvariantViolation(f"{cid} has primary copies in {sorted(pools)}")
            stray = [s for s in copies if (cid, s) not in self.replicated_ever]
            if stray:
                raise InvariantViolation(f"{cid} duplicated into {stray} without a replication event")


_TRIGGERS = {"promote", "replicate", "place", "admit"}


def check_trigger_soundness(effects: Iterable[SideEffect | Mapping]) -> list[str]:
    """Re-check each logged trigger from its recorded counters; return a list of problems."""
    problems = []
    triggered = entered = False
    for fx in effects:
        d = fx.to_dict() if isinstance(fx, SideEffect) else fx
        kind, detail = d["kind"], d.get("detail", {})
        if kind in ("promote", "admit"):
            threshold = (1 + Fraction(detail["delta"])) * detail["ref_count"]
            if not detail["count"] > threshold:
                problems.append(f"{kind} of {d['content']} with count {detail['count']} <= {threshold}")
            entered = True
        elif kind == "replicate":
            share = Fraction(detail["via_count"], detail["total"])
            if not share > Fraction(detail["eps_share"]):
                problems.append(f"replicate of {d['content']} with share {share}")
        elif kind in ("demote", "evict") and not triggered:
            problems.append(f"{kind} of {d['content']} without a preceding trigger")
        elif kind == "cloud_upload" and not entered:
            problems.append(f"cloud upload of {d['content']} without entering a top pool")
        triggered = triggered or kind in _TRIGGERS
    return problems
