import math
from collections import Counter
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecdsim.workload import (
    HEADER,
    REQ,
    UPL,
    RequestEvent,
    Trace,
    TraceError,
    dumps_trace,
    generate_zipf_trace,
    load_trace,
    parse_trace,
    save_trace,
)

from .oracles import zipf_head_share

DATA = Path(__file__).parent / "data"
STATIONS = ["bs1", "bs2", "bs3"]


def test_single_content():
    t = generate_zipf_trace(1, 500, 1.0, STATIONS, seed=0)
    assert {e.content for e in t} == {"c1"}
    assert [e.at for e in t] == list(range(500))


def test_uniform_within_three_sigma():
    n, m = 100_000, 10
    t = generate_zipf_trace(m, n, 0.0, STATIONS, seed=1)
    counts = Counter(e.content for e in t)
    p = 1 / m
    sigma = math.sqrt(n * p * (1 - p))
    assert all(abs(counts[f"c{i}"] - n * p) <= 3 * sigma for i in range(1, m + 1))
    st_counts = Counter(e.station for e in t)
    s_sigma = math.sqrt(n * (1 / 3) * (2 / 3))
    assert all(abs(st_counts[s] - n / 3) <= 3 * s_sigma for s in STATIONS)


def test_zipf_head_share():
    n, m = 100_000, 100
    t = generate_zipf_trace(m, n, 1.0, STATIONS, seed=2)
    head = {f"c{i}" for i in range(1, 21)}
    observed = sum(e.content in head for e in t) / n
    expected = zipf_head_share(m, 1.0, 20)
    sigma = math.sqrt(expected * (1 - expected) / n)
    assert expected == pytest.approx(0.6936, abs=1e-4)
    assert abs(observed - expected) <= 3 * sigma


def test_determinism():
    a = generate_zipf_trace(50, 1000, 1.0, STATIONS, seed=7, p_upload=0.05)
    b = generate_zipf_trace(50, 1000, 1.0, STATIONS, seed=7, p_upload=0.05)
    c = generate_zipf_trace(50, 1000, 1.0, STATIONS, seed=8, p_upload=0.05)
    assert a == b and a != c


def test_uploads_are_fresh_and_requested_after_creation():
    t = generate_zipf_trace(20, 5000, 1.0, STATIONS, seed=3, p_upload=0.02)
    t.validate()
    seen = set()
    for e in t:
        if e.kind == UPL:
            assert e.content not in seen
            seen.add(e.content)
        elif e.content.startswith("u"):
            assert e.content in seen
    assert seen


@pytest.mark.parametrize("kwargs", [
    dict(n_contents=0), dict(exponent=-1.0), dict(n_requests=-1), dict(stations=[]), dict(p_upload=2.0),
])
def test_invalid_parameters(kwargs):
    args = dict(n_contents=5, n_requests=10, exponent=1.0, stations=STATIONS, seed=0) | kwargs
    with pytest.raises(TraceError):
        generate_zipf_trace(**args)


class TestFiles:
    def test_round_trip(self, tmp_path):
        t = generate_zipf_trace(30, 2000, 1.0, STATIONS, seed=4, p_upload=0.01)
        path = tmp_path / "t.trace"
        save_trace(t, path)
        assert load_trace(path) == t
        assert path.read_bytes() == dumps_trace(load_trace(path)).encode()

    def test_empty(self, tmp_path):
        path = tmp_path / "empty.trace"
        save_trace(Trace(), path)
        assert path.read_text() == HEADER + "\n"
        assert len(load_trace(path)) == 0

    def test_fixture(self):
        t = load_trace(DATA / "three_events.trace")
        assert t.events == [
            RequestEvent(0, REQ, "A", "v1"),
            RequestEvent(0, UPL, "E", "u1"),
            RequestEvent(3, REQ, "C", "u1"),
        ]

    @pytest.mark.parametrize("body, lineno, message", [
        ("0,REQ,A\n", 2, "4 comma-separated"),
        ("0,REQ,A,v1\nx,REQ,A,v1\n", 3, "not a nonnegative integer"),
        ("0,GET,A,v1\n", 2, "REQ or UPL"),
        ("0,REQ, A,v1\n", 2, "padding"),
        ("0,REQ,A,v1,extra\n", 2, "4 comma-separated"),
    ])
    def test_malformed(self, body, lineno, message):
        with pytest.raises(TraceError, match=f":{lineno}: .*{message}"):
            parse_trace(HEADER + "\n" + body)

    def test_missing_header(self):
        with pytest.raises(TraceError, match=":1:"):
            parse_trace("0,REQ,A,v1\n")

    def test_time_backwards(self):
        with pytest.raises(TraceError, match="backwards"):
            parse_trace(HEADER + "\n5,REQ,A,v1\n4,REQ,A,v1\n")

    def test_reused_upload(self):
        with pytest.raises(TraceError, match="reused"):
            parse_trace(HEADER + "\n0,UPL,A,u1\n1,UPL,B,u1\n")


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(0, 300), st.floats(0, 2.5), st.integers(0, 2**32 - 1),
       st.sampled_from([0.0, 0.05, 0.5]))
def test_round_trip_property(n_contents, n_requests, exponent, seed, p_upload):
    t = generate_zipf_trace(n_contents, n_requests, exponent, STATIONS, seed, p_upload=p_upload)
    assert parse_trace(dumps_trace(t)) == t
