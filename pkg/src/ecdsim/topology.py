"""Base-station graph, shortest-path closure, pool ranking and request routing."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CLOUD = "cloud"

_DIGITS = re.compile(r"(\d+)")
_TIE_TOL = 1e-9


class TopologyError(ValueError):
    """Raised for malformed station graphs."""


def natural_key(ident: str) -> tuple:
    """Sort key that orders ``bs2`` before ``bs10`` and ``v9`` before ``v10``."""
    return tuple(int(part) if part.isdigit() else part for part in _DIGITS.split(ident))


def check_identifier(ident: str, what: str = "station") -> str:
    if not isinstance(ident, str) or not ident:
        raise TopologyError(f"{what} id must be a non-empty string, got {ident!r}")
    if any(ch in ident for ch in ",\n\r") or ident != ident.strip():
        raise TopologyError(f"{what} id {ident!r} contains a comma, newline or padding")
    return ident


@dataclass(frozen=True)
class BaseStationGraph:
    stations: tuple[str, ...]
    weights: np.ndarray
    directed: bool = False

    @cached_property
    def index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.stations)}

    def __len__(self) -> int:
        return len(self.stations)

    def to_dict(self) -> dict:
        return {
            "stations": list(self.stations),
            "weights": [[_plain(x) for x in row] for row in self.weights],
            "directed": self.directed,
        }


def _plain(x: float) -> float | int:
    x = float(x)
    return int(x) if x.is_integer() else x


def validate_graph(stations: Sequence[str], weights, directed: bool = False) -> BaseStationGraph:
    """Check a station list and weight matrix and freeze them into a graph."""
    stations = tuple(check_identifier(s) for s in stations)
    if not stations:
        raise TopologyError("graph needs at least one station")
    if len(set(stations)) != len(stations):
        raise TopologyError("duplicate station ids")
    if CLOUD in stations:
        raise TopologyError(f"station id {CLOUD!r} is reserved")
    try:
        w = np.array(weights, dtype=float)
    except (TypeError, ValueError) as exc:
        raise TopologyError(f"weights are not a numeric matrix: {exc}") from None
    n = len(stations)
    if w.shape != (n, n):
        raise TopologyError(f"dimension mismatch: {n} stations but weight matrix has shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise TopologyError("weights must be finite")
    if np.any(w < 0):
        i, j = np.argwhere(w < 0)[0]
        raise TopologyError(f"negative weight {w[i, j]} between {stations[i]} and {stations[j]}")
    if np.any(np.diag(w) != 0):
        i = int(np.flatnonzero(np.diag(w))[0])
        raise TopologyError(f"nonzero diagonal at {stations[i]}")
    if not directed and not np.array_equal(w, w.T):
        i, j = np.argwhere(w != w.T)[0]
        raise TopologyError(
            f"asymmetric weights: {stations[i]}->{stations[j]}={w[i, j]} but "
            f"{stations[j]}->{stations[i]}={w[j, i]} (set directed to allow this)"
        )
    w.setflags(write=False)
    return BaseStationGraph(stations, w, bool(directed))


@dataclass(frozen=True)
class DistanceMatrix:
    """Shortest-path costs between every ordered pair of stations.

    ``next_hop[i][j]`` is the index of the first station after ``i`` on the
    chosen shortest path to ``j``. Among equal-cost paths the first hop with
    the smallest station id is taken, so reconstruction is deterministic.
    """

    stations: tuple[str, ...]
    dist: np.ndarray
    weights: np.ndarray = field(repr=False)
    _fw_next: np.ndarray = field(repr=False)

    @cached_property
    def index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.stations)}

    def __len__(self) -> int:
        return len(self.stations)

    def cost(self, a: str, b: str) -> float:
        return float(self.dist[self.index[a], self.index[b]])

    @cached_property
    def next_hop(self) -> np.ndarray:
        n = len(self.stations)
        order = np.array(sorted(range(n), key=lambda k: natural_key(self.stations[k])))
        w, d = self.weights, self.dist
        nxt = self._fw_next.copy()
        for i in range(n):
            # candidate first hops k: w[i,k] + d[k,j] == d[i,j], with w[i,k] > 0
            reach = w[i, order][:, None] + d[order, :]
            ok = np.abs(reach - d[i][None, :]) <= _TIE_TOL * np.maximum(1.0, np.abs(d[i][None, :]))
            ok &= (w[i, order] > _TIE_TOL)[:, None]
            has = ok.any(axis=0)
            first = order[np.argmax(ok, axis=0)]
            nxt[i] = np.where(has, first, nxt[i])
            nxt[i, i] = i
        nxt.setflags(write=False)
        return nxt

    def path(self, a: str, b: str) -> list[str]:
        i, j = self.index[a], self.index[b]
        hops = [i]
        nxt = self.next_hop
        while i != j:
            i = int(nxt[i, j])
            hops.append(i)
            if len(hops) > len(self.stations):
                raise RuntimeError(f"path reconstruction from {a} to {b} did not terminate")
        return [self.stations[k] for k in hops]

    def row_totals(self) -> dict[str, float]:
        return {s: math.fsum(self.dist[i]) for i, s in enumerate(self.stations)}


def all_pairs_shortest_paths(g: BaseStationGraph) -> DistanceMatrix:
    """Floyd-Warshall closure of the weight matrix."""
    n = len(g.stations)
    dist = np.array(g.weights, dtype=float)
    nxt = np.tile(np.arange(n), (n, 1))
    for k in range(n):
        via = dist[:, k, None] + dist[None, k, :]
        better = via < dist
        if better.any():
            dist = np.where(better, via, dist)
            nxt = np.where(better, nxt[:, k, None], nxt)
    dist.setflags(write=False)
    return DistanceMatrix(g.stations, dist, g.weights, nxt)


def distance_table(g: BaseStationGraph) -> DistanceMatrix:
    """Take the weights as already-computed path costs, without closing them.

    Useful for cost tables published as final results that do not satisfy
    the triangle inequality.
    """
    n = len(g.stations)
    dist = np.array(g.weights, dtype=float)
    dist.setflags(write=False)
    return DistanceMatrix(g.stations, dist, g.weights, np.tile(np.arange(n), (n, 1)))


@dataclass(frozen=True)
class PoolEntry:
    station: str
    total_cost: float
    rank: int


@dataclass(frozen=True)
class PoolRanking:
    entries: tuple[PoolEntry, ...]

    @property
    def order(self) -> list[str]:
        return [e.station for e in self.entries]

    def rank_of(self, station: str) -> int:
        for e in self.entries:
            if e.station == station:
                return e.rank
        raise KeyError(station)

    def totals(self) -> dict[str, float]:
        return {e.station: e.total_cost for e in self.entries}

    def to_list(self) -> list[dict]:
        return [{"station": e.station, "total_cost": _plain(e.total_cost), "rank": e.rank} for e in self.entries]


def rank_pools(d: DistanceMatrix) -> PoolRanking:
    """Rank cache pools by the sum of their shortest-path costs, cheapest first."""
    totals = d.row_totals()
    ordered = sorted(d.stations, key=lambda s: (totals[s], natural_key(s)))
    return PoolRanking(tuple(PoolEntry(s, totals[s], r) for r, s in enumerate(ordered, start=1)))


def route_request(d: DistanceMatrix, requester: str, holders: Iterable[str]) -> tuple[str, float]:
    """Pick the holder closest to ``requester``; ties go to the smaller station id."""
    holders = list(holders)
    if not holders:
        raise TopologyError("no holder to route the request to")
    row = d.dist[d.index[requester]]
    best = min(holders, key=lambda h: (row[d.index[h]], natural_key(h)))
    return best, float(row[d.index[best]])


def station_names(n: int) -> list[str]:
    return [f"bs{i}" for i in range(1, n + 1)]


def random_topology(n: int, low: int = 10, high: int = 100, seed: int = 0) -> BaseStationGraph:
    """Complete undirected graph with integer weights drawn uniformly from [low, high]."""
    if n < 1:
        raise TopologyError("need at least one station")
    if not 0 <= low <= high:
        raise TopologyError(f"bad weight range [{low}, {high}]")
    rng = np.random.default_rng(seed)
    w = rng.integers(low, high + 1, size=(n, n)).astype(float)
    w = np.triu(w, 1)
    w = w + w.T
    return validate_graph(station_names(n), w)


def topology_from_dict(doc: dict) -> BaseStationGraph:
    unknown = set(doc) - {"stations", "weights", "directed"}
    if unknown:
        raise TopologyError(f"unknown topology keys: {sorted(unknown)}")
    if "stations" not in doc or "weights" not in doc:
        raise TopologyError("topology needs 'stations' and 'weights'")
    return validate_graph(doc["stations"], doc["weights"], bool(doc.get("directed", False)))


def load_topology(path: str | Path) -> BaseStationGraph:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise TopologyError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise TopologyError(f"{path}: expected a JSON object")
    return topology_from_dict(doc)
