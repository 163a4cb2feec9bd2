"""Cost accrual, case-study closed forms and ECD-vs-CDN comparison."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .topology import DistanceMatrix, _plain, rank_pools

LEDGER_KINDS = ("serve_local", "serve_remote", "cloud_fetch", "migration", "upload", "replication")


def as_fraction(value) -> Fraction:
    """Exact fraction from an int, float, Fraction or a ``"a/b"`` string.

    Floats go through their shortest repr so ``0.1`` becomes ``1/10``.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not fractions")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite fraction {value}")
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot read {value!r} as a fraction")


@dataclass(frozen=True)
class DistanceParams:
    """Per-hop costs; defaults are the case-study distances."""

    d_user_cloud: float = 1000
    d_user_proxy: float = 500
    d_proxy_cloud: float = 500
    d_user_edge: float = 100
    d_edge_cloud: float = 900
    price_migrations: bool = True

    def __post_init__(self) -> None:
        for name in ("d_user_cloud", "d_user_proxy", "d_proxy_cloud", "d_user_edge", "d_edge_cloud"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be a finite number >= 0, got {v!r}")


@dataclass
class CostLedger:
    model: str
    accumulators: dict[str, float] = field(default_factory=lambda: dict.fromkeys(LEDGER_KINDS, 0.0))

    @property
    def total(self) -> float:
        return math.fsum(self.accumulators.values())

    def add(self, kind: str, amount: float) -> None:
        if amount < 0:
            raise ValueError("costs are nonnegative")
        self.accumulators[kind] += amount

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "total": _plain(self.total),
            "breakdown": {k: _plain(v) for k, v in self.accumulators.items()},
        }


def _field(obj, name):
    return obj[name] if isinstance(obj, Mapping) else getattr(obj, name)


def accrue(ledger: CostLedger, outcome, params: DistanceParams) -> CostLedger:
    """Book one served request or upload into ``ledger``.

    ``outcome`` is a ServeOutcome or its logged dict form; everything needed
    (source, transit cost, per-effect hop costs) is carried in the outcome, so
    a ledger can be rebuilt from an event log alone.
    """
    source = _field(outcome, "source")
    transit = float(_field(outcome, "transit_cost"))
    effects = _field(outcome, "side_effects")
    if ledger.model == "ecd":
        if source == "local-pool":
            ledger.add("serve_local", params.d_user_edge)
        elif source == "content-server":
            if transit == 0:
                ledger.add("serve_local", params.d_user_edge)
            else:
                ledger.add("serve_remote", params.d_user_edge + transit)
        elif source == "remote-pool":
            ledger.add("serve_remote", params.d_user_edge + transit)
        elif source == "cloud":
            ledger.add("cloud_fetch", params.d_user_edge + params.d_edge_cloud)
        elif source != "upload":
            raise ValueError(f"unknown ECD source {source!r}")
        for fx in effects:
            kind = _field(fx, "kind")
            kind = getattr(kind, "value", kind)
            if kind in ("promote", "demote", "admit"):
                if params.price_migrations:
                    ledger.add("migration", float(_field(fx, "hop_cost")))
            elif kind == "replicate":
                ledger.add("replication", params.d_edge_cloud)
            elif kind == "cloud_upload":
                ledger.add("upload", params.d_edge_cloud)
            elif kind == "upload":
                ledger.add("upload", params.d_user_edge)
    elif ledger.model == "cdn":
        if source == "proxy":
            ledger.add("serve_local", params.d_user_proxy)
        elif source == "cloud":
            ledger.add("cloud_fetch", params.d_user_proxy + params.d_proxy_cloud)
        elif source != "upload":
            raise ValueError(f"unknown CDN source {source!r}")
        for fx in effects:
            kind = _field(fx, "kind")
            if getattr(kind, "value", kind) == "upload":
                ledger.add("upload", params.d_user_cloud)
    else:
        raise ValueError(f"unknown model {ledger.model!r}")
    return ledger


def ledger_from_log(records: Iterable[Mapping], params: DistanceParams, model: str) -> CostLedger:
    ledger = CostLedger(model)
    for rec in records:
        accrue(ledger, rec, params)
    return ledger


@dataclass(frozen=True)
class ComparisonReport:
    ecd_total: float
    cdn_total: float
    saving_fraction: float
    ecd_breakdown: dict[str, float]
    cdn_breakdown: dict[str, float]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ecd_total"] = _plain(self.ecd_total)
        d["cdn_total"] = _plain(self.cdn_total)
        d["ecd_breakdown"] = {k: _plain(v) for k, v in self.ecd_breakdown.items()}
        d["cdn_breakdown"] = {k: _plain(v) for k, v in self.cdn_breakdown.items()}
        return d


def comparison_report(ecd_ledger: CostLedger, cdn_ledger: CostLedger) -> ComparisonReport:
    cdn_total = cdn_ledger.total
    if cdn_total <= 0:
        raise ValueError("saving is undefined when the CDN total is zero")
    return ComparisonReport(
        ecd_total=ecd_ledger.total,
        cdn_total=cdn_total,
        saving_fraction=1.0 - ecd_ledger.total / cdn_total,
        ecd_breakdown=dict(ecd_ledger.accumulators),
        cdn_breakdown=dict(cdn_ledger.accumulators),
    )


@dataclass(frozen=True)
class ServingCosts:
    cdn: float
    ecd_worst: float
    ecd_best: float
    saving_worst: float
    saving_best: float


def casestudy_serving_costs(
    dist: DistanceMatrix, n_videos: int = 10, params: DistanceParams = DistanceParams()
) -> ServingCosts:
    """Repeat-request costs written exactly as the case study prices them.

    CDN pays every station's row total twice at the proxy distance; ECD pays
    one row total per video at the edge distance, taking the worst (largest)
    or best (smallest) row.
    """
    totals = list(rank_pools(dist).totals().values())
    cdn = math.fsum(totals) * 2 * params.d_user_proxy
    worst = max(totals) * n_videos * params.d_user_edge
    best = min(totals) * n_videos * params.d_user_edge
    return ServingCosts(cdn, worst, best, 1 - worst / cdn, 1 - best / cdn)


@dataclass(frozen=True)
class UploadCosts:
    cdn: float
    ecd: float
    saving: float


def casestudy_upload_costs(params: DistanceParams = DistanceParams(), p_cloud_upload=0.2) -> UploadCosts:
    """Expected cost of one upload: CDN always goes to the cloud, ECD only with ``p_cloud_upload``."""
    p = as_fraction(p_cloud_upload)
    if not 0 <= p <= 1:
        raise ValueError(f"p_cloud_upload must lie in [0, 1], got {p_cloud_upload}")
    cdn = as_fraction(params.d_user_cloud)
    ecd = as_fraction(params.d_user_edge) + p * as_fraction(params.d_edge_cloud)
    saving = 1 - ecd / cdn if cdn else Fraction(0)
    return UploadCosts(float(cdn), float(ecd), float(saving))
