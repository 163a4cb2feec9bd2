"""Deterministic request/upload traces and their line-based file format.

File layout::

    # ecd-trace v1
    0,REQ,bs3,c17
    1,UPL,bs1,u1

Each line is ``time,kind,station,content`` with ``kind`` in {REQ, UPL}.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .topology import check_identifier

HEADER = "# ecd-trace v1"
REQ = "REQ"
UPL = "UPL"


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class RequestEvent:
    at: int
    kind: str
    station: str
    content: str

    def line(self) -> str:
        return f"{self.at},{self.kind},{self.station},{self.content}"


@dataclass
class Trace:
    events: list[RequestEvent] = field(default_factory=list)
    seed: int | None = field(default=None, compare=False)
    generator: dict | None = field(default=None, compare=False)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def stations(self) -> set[str]:
        return {e.station for e in self.events}

    def validate(self) -> None:
        prev = 0
        seen_uploads: set[str] = set()
        for n, e in enumerate(self.events):
            if e.at < prev:
                raise TraceError(f"event {n}: time {e.at} goes backwards")
            prev = e.at
            if e.kind == UPL:
                if e.content in seen_uploads:
                    raise TraceError(f"event {n}: upload id {e.content} reused")
                seen_uploads.add(e.content)


def zipf_weights(n: int, exponent: float) -> np.ndarray:
    ranks = np.arange(1, n + 1, dtype=float)
    w = ranks ** -exponent
    return w / w.sum()


def content_names(n: int, prefix: str = "c") -> list[str]:
    return [f"{prefix}{i}" for i in range(1, n + 1)]


def generate_zipf_trace(
    n_contents: int,
    n_requests: int,
    exponent: float,
    stations: Sequence[str],
    seed: int,
    *,
    prefix: str = "c",
    p_upload: float = 0.0,
    upload_request_share: float = 0.1,
) -> Trace:
    """Requests for ``prefix1..prefixN`` with P(rank i) proportional to i**-exponent.

    Stations are drawn uniformly. With ``p_upload`` > 0, each event is an
    upload of a fresh ``u<k>`` id with that probability, and once uploads
    exist a request targets one of them with probability
    ``upload_request_share`` (earlier uploads being the more popular).
    """
    if n_contents < 1:
        raise TraceError("n_contents must be >= 1")
    if n_requests < 0:
        raise TraceError("n_requests must be >= 0")
    if exponent < 0:
        raise TraceError("exponent must be >= 0")
    if not stations:
        raise TraceError("need at least one station")
    if not (0 <= p_upload <= 1 and 0 <= upload_request_share <= 1):
        raise TraceError("probabilities must lie in [0, 1]")
    stations = list(stations)
    rng = np.random.default_rng(seed)
    names = content_names(n_contents, prefix)
    picks = rng.choice(n_contents, size=n_requests, p=zipf_weights(n_contents, exponent))
    where = rng.integers(0, len(stations), size=n_requests)
    events = []
    if p_upload == 0:
        events = [RequestEvent(t, REQ, stations[s], names[c]) for t, (c, s) in enumerate(zip(picks, where))]
    else:
        is_upload = rng.random(n_requests) < p_upload
        to_upload = rng.random(n_requests) < upload_request_share
        draws = rng.random(n_requests)
        uploads: list[str] = []
        for t in range(n_requests):
            st = stations[where[t]]
            if is_upload[t]:
                uploads.append(f"u{len(uploads) + 1}")
                events.append(RequestEvent(t, UPL, st, uploads[-1]))
            elif uploads and to_upload[t]:
                cdf = np.cumsum(zipf_weights(len(uploads), exponent))
                k = min(int(np.searchsorted(cdf, draws[t], side="right")), len(uploads) - 1)
                events.append(RequestEvent(t, REQ, st, uploads[k]))
            else:
                events.append(RequestEvent(t, REQ, st, names[picks[t]]))
    descriptor = {
        "kind": "zipf", "n_contents": n_contents, "n_requests": n_requests, "exponent": exponent,
        "prefix": prefix, "p_upload": p_upload, "upload_request_share": upload_request_share,
    }
    return Trace(events, seed=seed, generator=descriptor)


def dumps_trace(trace: Trace) -> str:
    return "".join(f"{line}\n" for line in [HEADER, *(e.line() for e in trace.events)])


def save_trace(trace: Trace, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_trace(trace))


def parse_trace(text: str, source: str = "<trace>") -> Trace:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != HEADER:
        raise TraceError(f"{source}:1: missing header {HEADER!r}")
    events = []
    for lineno, raw in enumerate(lines[1:], start=2):
        parts = raw.split(",")
        if len(parts) != 4:
            raise TraceError(f"{source}:{lineno}: expected 4 comma-separated fields, got {len(parts)}")
        at, kind, station, content = parts
        if not at.isdigit():
            raise TraceError(f"{source}:{lineno}: time {at!r} is not a nonnegative integer")
        if kind not in (REQ, UPL):
            raise TraceError(f"{source}:{lineno}: kind {kind!r} is not REQ or UPL")
        try:
            check_identifier(station)
            check_identifier(content, "content")
        except ValueError as exc:
            raise TraceError(f"{source}:{lineno}: {exc}") from None
        events.append(RequestEvent(int(at), kind, station, content))
    trace = Trace(events)
    try:
        trace.validate()
    except TraceError as exc:
        raise TraceError(f"{source}: {exc}") from None
    return trace


def load_trace(path: str | Path) -> Trace:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_trace(fh.read(), str(path))
