"""CDN comparison model: per-station proxies that fetch from the cloud on a miss.

Proxies never exchange contents with each other and every upload goes to the
cloud. In ``paper_mode`` proxies cache nothing, so each request pays the full
cloud round trip.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .catalog import Catalog, ContentMeta, DuplicateContent, record_request
from .ecd import EffectKind, InvariantViolation, ServeOutcome, SideEffect, UnknownStation
from .topology import CLOUD, natural_key


@dataclass
class ProxyServer:
    station: str
    capacity: int
    cache: set[str] = field(default_factory=set)
    used: int = 0


class CdnState:
    def __init__(self, stations: Sequence[str], capacities: int | Mapping[str, int], paper_mode: bool = False):
        if isinstance(capacities, int):
            capacities = dict.fromkeys(stations, capacities)
        self.proxies = {s: ProxyServer(s, capacities[s]) for s in stations}
        self.paper_mode = paper_mode
        self.catalog = Catalog()
        self.cloud: set[str] = set()

    def seed_content(self, cid: str, history: int = 0, size: int = 1) -> ContentMeta:
        meta = self.catalog.add(ContentMeta(cid, size=size))
        meta.seed_history(history)
        self.cloud.add(cid)
        return meta

    def _evict_for(self, proxy: ProxyServer, size: int) -> list[SideEffect]:
        effects = []
        while proxy.capacity - proxy.used < size:
            victim = max(proxy.cache, key=lambda c: (-self.catalog[c].total_requests, natural_key(c)))
            proxy.cache.remove(victim)
            proxy.used -= self.catalog[victim].size
            effects.append(SideEffect(EffectKind.EVICT, victim, proxy.station, None,
                                      detail={"count": self.catalog[victim].total_requests}))
        return effects

    def cdn_handle_request(self, requester: str, cid: str, at: int = 0) -> ServeOutcome:
        if requester not in self.proxies:
            raise UnknownStation(requester)
        meta = self.catalog[cid]
        if cid not in self.cloud:
            raise InvariantViolation(f"CDN content {cid} missing from the cloud")
        record_request(meta, requester, at)
        proxy = self.proxies[requester]
        if cid in proxy.cache:
            return ServeOutcome("proxy", requester, 0.0)
        outcome = ServeOutcome("cloud", None, 0.0)
        if not self.paper_mode and meta.size <= proxy.capacity:
            outcome.side_effects.append(SideEffect(EffectKind.PLACE, cid, CLOUD, requester))
            outcome.side_effects += self._evict_for(proxy, meta.size)
            proxy.cache.add(cid)
            proxy.used += meta.size
        return outcome

    def cdn_handle_upload(self, uploader: str, cid: str, at: int = 0, size: int = 1) -> list[SideEffect]:
        if uploader not in self.proxies:
            raise UnknownStation(uploader)
        if cid in self.catalog:
            raise DuplicateContent(f"content {cid!r} already exists")
        self.catalog.add(ContentMeta(cid, size=size, origin=uploader, created_at=at))
        self.cloud.add(cid)
        return [SideEffect(EffectKind.UPLOAD, cid, uploader, CLOUD)]

    def check_invariants(self, stations=None) -> None:
        for s in (self.proxies if stations is None else stations):
            p = self.proxies[s]
            used = sum(self.catalog[c].size for c in p.cache)
            if used != p.used or used > p.capacity:
                raise InvariantViolation(f"proxy {s} holds {used} units, books {p.used}, capacity {p.capacity}")
            if not p.cache <= self.cloud:
                raise InvariantViolation(f"proxy {s} caches contents the cloud does not have")

    def placement(self) -> dict[str, list[str]]:
        return {s: sorted(p.cache, key=natural_key) for s, p in self.proxies.items()}
