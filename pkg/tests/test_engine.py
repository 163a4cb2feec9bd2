import json
from pathlib import Path

import pytest

from ecdsim.ecd import InvariantViolation
from ecdsim.engine import GridPoint, Scenario, ScenarioError, point_scenario, run_scenario, sweep
from ecdsim.metrics import DistanceParams, ledger_from_log
from ecdsim.workload import REQ, RequestEvent, Trace, load_trace, save_trace

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"
DATA = Path(__file__).parent / "data"


@pytest.fixture
def small_doc():
    doc = json.loads((SCENARIOS / "sweep_base.json").read_text())
    doc["contents"]["n"] = 100
    doc["workload"]["zipf"]["n_requests"] = 300
    return doc


def test_case_study_scenario_places_like_the_example():
    report = run_scenario(Scenario.load(SCENARIOS / "casestudy.json"))
    spans = {"B": (1, 10), "A": (11, 20), "E": (21, 23), "C": (24, 26), "D": (27, 29)}
    assert report.initial_placement == {s: [f"v{i}" for i in range(a, b + 1)] for s, (a, b) in spans.items()}
    assert [r["station"] for r in report.ranking] == ["B", "A", "E", "C", "D"]
    assert report.ledgers["ecd"]["total"] == report.ledgers["cdn"]["total"] == 0
    assert report.comparison is None


def test_paper_mode_cdn_never_hits():
    doc = json.loads((SCENARIOS / "casestudy.json").read_text())
    doc["workload"] = {"zipf": {"n_requests": 200, "seed": 1}}
    report = run_scenario(Scenario.from_dict(doc))
    assert report.events["cdn"]["sources"] == {"cloud": 200}
    assert report.ledgers["cdn"]["total"] == 200 * 1000
    assert report.comparison["ecd_total"] < report.comparison["cdn_total"]


def test_determinism_and_replay(small_doc, tmp_path):
    sc = Scenario.from_dict(small_doc)
    a = run_scenario(sc).to_json()
    assert run_scenario(Scenario.from_dict(small_doc)).to_json() == a
    trace = sc.trace(list(sc.graph().stations))
    path = tmp_path / "t.trace"
    save_trace(trace, path)
    replay = dict(small_doc, workload={"trace": str(path)})
    b = run_scenario(Scenario.from_dict(replay)).to_dict()
    a_doc = json.loads(a)
    assert {k: v for k, v in b.items() if k != "scenario"} == {k: v for k, v in a_doc.items() if k != "scenario"}
    assert run_scenario(sc, trace=load_trace(path)).to_json() == a


def test_both_models_see_the_same_trace(small_doc):
    rep = run_scenario(Scenario.from_dict(small_doc))
    strip = lambda log: [(r["i"], r["op"], r["station"], r["content"]) for r in log]
    assert strip(rep.event_log["ecd"]) == strip(rep.event_log["cdn"])
    assert rep.invariants == {"checked": True, "events": 300, "violations": 0}


def test_ledgers_rebuild_from_log(small_doc):
    small_doc["workload"]["zipf"]["p_upload"] = 0.05
    rep = run_scenario(Scenario.from_dict(small_doc))
    for model in ("ecd", "cdn"):
        rebuilt = ledger_from_log(rep.event_log[model], DistanceParams(), model)
        assert rebuilt.to_dict() == rep.ledgers[model]


def test_unknown_trace_station():
    with pytest.raises(ScenarioError, match="Q"):
        run_scenario(Scenario.load(DATA / "bad_station.json"))


def test_unknown_content_in_trace_reports_event_index(small_doc):
    sc = Scenario.from_dict(small_doc)
    bad = Trace([RequestEvent(0, REQ, "bs1", "c1"), RequestEvent(1, REQ, "bs2", "nope")])
    with pytest.raises(InvariantViolation, match="event 1"):
        run_scenario(sc, trace=bad)


@pytest.mark.parametrize("mutate, message", [
    (lambda d: d.update(colour="red"), "colour"),
    (lambda d: d["params"].update(gamma=1), "gamma"),
    (lambda d: d["params"].update(K=0), "K"),
    (lambda d: d.update(models=[]), "models"),
    (lambda d: d.update(mode="fast"), "mode"),
    (lambda d: d["contents"].update(n=0), "contents.n"),
    (lambda d: d["topology"].update(stations=["a"]), "either"),
])
def test_schema_errors(small_doc, mutate, message):
    mutate(small_doc)
    with pytest.raises(ScenarioError, match=message):
        Scenario.from_dict(small_doc)


def test_k_larger_than_station_count(small_doc):
    small_doc["params"]["K"] = 9
    with pytest.raises(ValueError, match="exceeds"):
        run_scenario(Scenario.from_dict(small_doc))


def test_ecd_only(small_doc):
    small_doc["models"] = ["ECD"]
    rep = run_scenario(Scenario.from_dict(small_doc))
    assert set(rep.ledgers) == {"ecd"} and rep.comparison is None


class TestSweep:
    def test_single_point_matches_run(self, small_doc):
        base = Scenario.from_dict(small_doc)
        res = sweep(base, [5], [200], [3])
        pt = GridPoint(5, 200, 3)
        assert res.failures == {}
        assert res.reports[pt].to_json() == run_scenario(point_scenario(base, pt)).to_json()

    def test_seeds_isolated(self, small_doc):
        res = sweep(Scenario.from_dict(small_doc), [5], [200], [0, 1])
        rows = res.rows()
        assert [(r["stations"], r["requests"], r["seed"]) for r in rows] == [(5, 200, 0), (5, 200, 1)]
        assert rows[0]["ecd_total"] != rows[1]["ecd_total"]
        assert res.to_csv().splitlines()[0] == "stations,requests,seed,ecd_total,cdn_total,saving"

    def test_failing_point_does_not_abort(self, small_doc):
        res = sweep(Scenario.from_dict(small_doc), [0, 5], [100], [0])
        assert list(res.failures) == [GridPoint(0, 100, 0)]
        assert list(res.reports) == [GridPoint(5, 100, 0)]

    def test_parallel_equals_serial(self, small_doc):
        base = Scenario.from_dict(small_doc)
        serial = sweep(base, [5, 7], [150], [0, 1])
        parallel = sweep(base, [5, 7], [150], [0, 1], jobs=2)
        assert serial.to_csv() == parallel.to_csv()

    def test_empty_grid(self, small_doc):
        with pytest.raises(ScenarioError):
            sweep(Scenario.from_dict(small_doc), [], [1], [0])
