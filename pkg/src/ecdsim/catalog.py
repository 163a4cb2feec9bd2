"""Content metadata, request counters and the residency directory."""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator

from .topology import CLOUD, check_identifier, natural_key

# Residency kinds in a directory entry.
IN_CLOUD = "cloud"
IN_SERVER = "content-server"
IN_POOL = "cache-pool"


class UnknownContent(KeyError):
    def __str__(self) -> str:
        return f"unknown content {self.args[0]!r}"


class DuplicateContent(ValueError):
    pass


@dataclass
class ContentMeta:
    """Identity and request counters of one content.

    Requests observed before the run (the cloud's history) are booked under
    the ``"cloud"`` key of ``per_bs_requests`` so that the total always
    equals the sum of the per-station counts.
    """

    id: str
    size: int = 1
    origin: str = CLOUD
    created_at: int = 0
    total_requests: int = 0
    per_bs_requests: dict[str, int] = field(default_factory=dict)
    request_times: list[int] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        check_identifier(self.id, "content")
        if self.size < 1:
            raise ValueError(f"content {self.id}: size must be >= 1")

    def seed_history(self, count: int) -> None:
        if count < 0:
            raise ValueError("history count must be >= 0")
        if count:
            self.per_bs_requests[CLOUD] = self.per_bs_requests.get(CLOUD, 0) + count
            self.total_requests += count

    def requests_between(self, start: int, end: int) -> int:
        """Live requests with ``start <= at <= end``; seeded history is excluded."""
        return bisect_right(self.request_times, end) - bisect_left(self.request_times, start)


def record_request(meta: ContentMeta, via: str, at: int) -> ContentMeta:
    meta.total_requests += 1
    meta.per_bs_requests[via] = meta.per_bs_requests.get(via, 0) + 1
    if meta.request_times and at < meta.request_times[-1]:
        raise ValueError(f"request for {meta.id} at {at} precedes an earlier request")
    meta.request_times.append(at)
    return meta


def request_count(meta: ContentMeta, window: tuple[int, int] | None = None) -> int:
    if window is None:
        return meta.total_requests
    return meta.requests_between(*window)


def priority_key(meta: ContentMeta, window: tuple[int, int] | None = None) -> tuple:
    return (-request_count(meta, window), natural_key(meta.id))


def priority_order(contents: Iterable[ContentMeta], window: tuple[int, int] | None = None) -> list[ContentMeta]:
    """Most requested first; equal counts fall back to content id order."""
    return sorted(contents, key=lambda m: priority_key(m, window))


def bs_share(meta: ContentMeta, via: str) -> Fraction:
    if meta.total_requests <= 0:
        raise ValueError(f"content {meta.id} has no requests yet")
    return Fraction(meta.per_bs_requests.get(via, 0), meta.total_requests)


class Catalog:
    """All known contents keyed by id."""

    def __init__(self) -> None:
        self._items: dict[str, ContentMeta] = {}

    def __contains__(self, cid: str) -> bool:
        return cid in self._items

    def __getitem__(self, cid: str) -> ContentMeta:
        try:
            return self._items[cid]
        except KeyError:
            raise UnknownContent(cid) from None

    def __iter__(self) -> Iterator[ContentMeta]:
        return iter(self._items.values())

    def __len__(self) -> int:
        return len(self._items)

    def add(self, meta: ContentMeta) -> ContentMeta:
        if meta.id in self._items:
            raise DuplicateContent(f"content {meta.id!r} already exists")
        self._items[meta.id] = meta
        return meta

    def record(self, cid: str, via: str, at: int) -> ContentMeta:
        return record_request(self[cid], via, at)


class Directory:
    """Where each content currently lives: cloud, content servers, cache pools."""

    def __init__(self) -> None:
        self._where: dict[str, set[tuple[str, str | None]]] = {}
        self._pools: dict[str, set[str]] = {}

    def add(self, cid: str, kind: str, station: str | None = None) -> None:
        self._where.setdefault(cid, set()).add((kind, station))
        if kind == IN_POOL:
            self._pools.setdefault(cid, set()).add(station)

    def discard(self, cid: str, kind: str, station: str | None = None) -> None:
        self._where.get(cid, set()).discard((kind, station))
        if kind == IN_POOL:
            self._pools.get(cid, set()).discard(station)

    def residency(self, cid: str) -> set[tuple[str, str | None]]:
        return set(self._where.get(cid, ()))

    def pools_of(self, cid: str) -> set[str]:
        return self._pools.get(cid, set())

    def in_cloud(self, cid: str) -> bool:
        return (IN_CLOUD, None) in self._where.get(cid, ())

    def contents(self) -> list[str]:
        return list(self._where)
