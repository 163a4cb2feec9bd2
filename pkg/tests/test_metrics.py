from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ecdsim.ecd import EffectKind, ServeOutcome, SideEffect
from ecdsim.metrics import (
    CostLedger,
    DistanceParams,
    accrue,
    as_fraction,
    casestudy_serving_costs,
    casestudy_upload_costs,
    comparison_report,
    ledger_from_log,
)


def book(model, *outcomes, params=DistanceParams()):
    ledger = CostLedger(model)
    for o in outcomes:
        accrue(ledger, o, params)
    return ledger


class TestAccrue:
    def test_ecd_local_hit(self):
        assert book("ecd", ServeOutcome("local-pool", "E", 0)).total == 100

    def test_ecd_remote_hit(self):
        assert book("ecd", ServeOutcome("remote-pool", "E", 50)).total == 150

    def test_ecd_cloud_fetch(self):
        assert book("ecd", ServeOutcome("cloud", None, 0)).total == 1000

    def test_cdn_miss_and_hit(self):
        assert book("cdn", ServeOutcome("cloud", None, 0)).total == 1000
        assert book("cdn", ServeOutcome("proxy", "A", 0)).total == 500

    def test_ecd_effects(self):
        out = ServeOutcome("local-pool", "C", 0, [
            SideEffect(EffectKind.PROMOTE, "v25", "C", "E", 50),
            SideEffect(EffectKind.DEMOTE, "v23", "E", "C", 50),
            SideEffect(EffectKind.REPLICATE, "v11", "cloud", "C"),
            SideEffect(EffectKind.CLOUD_UPLOAD, "u", "A", "cloud"),
            SideEffect(EffectKind.EVICT, "v29", "D", None),
        ])
        led = book("ecd", out)
        assert led.accumulators["migration"] == 100
        assert led.accumulators["replication"] == 900
        assert led.accumulators["upload"] == 900
        assert led.total == 100 + 100 + 900 + 900
        free = book("ecd", out, params=DistanceParams(price_migrations=False))
        assert free.accumulators["migration"] == 0

    def test_ecd_upload(self):
        up = {"source": "upload", "transit_cost": 0,
              "side_effects": [{"kind": "upload", "content": "u", "src": "E", "dst": "E", "hop_cost": 0}]}
        assert book("ecd", up).total == 100

    def test_log_round_trip(self):
        outs = [ServeOutcome("remote-pool", "E", 50, [SideEffect(EffectKind.PROMOTE, "x", "C", "E", 50)]),
                ServeOutcome("cloud", None, 0)]
        direct = book("ecd", *outs)
        rebuilt = ledger_from_log([o.to_dict() for o in outs], DistanceParams(), "ecd")
        assert rebuilt.to_dict() == direct.to_dict()

    def test_bad_source(self):
        with pytest.raises(ValueError):
            book("ecd", ServeOutcome("proxy", None, 0))
        with pytest.raises(ValueError):
            book("nope", ServeOutcome("cloud", None, 0))

    def test_negative_distance(self):
        with pytest.raises(ValueError):
            DistanceParams(d_user_edge=-1)

    @given(st.lists(st.sampled_from(["local-pool", "remote-pool", "cloud"]), max_size=30))
    def test_total_is_sum_and_monotone(self, sources):
        led = CostLedger("ecd")
        last = 0
        for s in sources:
            accrue(led, ServeOutcome(s, None, 25 if s == "remote-pool" else 0), DistanceParams())
            assert led.total >= last
            last = led.total
        assert led.total == sum(led.accumulators.values())

    def test_local_hit_cheaper_than_proxy_hit(self):
        assert book("ecd", ServeOutcome("local-pool", "A", 0)).total < book("cdn", ServeOutcome("proxy", "A", 0)).total


class TestCaseStudyForms:
    def test_serving(self, printed_table):
        sc = casestudy_serving_costs(printed_table)
        assert (sc.cdn, sc.ecd_worst, sc.ecd_best) == (775000, 235000, 105000)
        assert sc.saving_worst == pytest.approx(1 - 235000 / 775000)
        assert abs(sc.saving_worst - 0.6968) <= 0.0005
        assert abs(sc.saving_best - 0.8645) <= 0.0005

    @pytest.mark.parametrize("p, ecd, saving", [(0.2, 280, 0.72), (1, 1000, 0.0), (0, 100, 0.9)])
    def test_upload(self, p, ecd, saving):
        up = casestudy_upload_costs(DistanceParams(), p)
        assert (up.cdn, up.ecd, up.saving) == (1000, ecd, saving)

    def test_upload_affine(self):
        vals = [Fraction(str(casestudy_upload_costs(p_cloud_upload=f"{k}/10").ecd)) for k in range(11)]
        steps = {b - a for a, b in zip(vals, vals[1:])}
        assert steps == {90}

    def test_upload_bad_probability(self):
        with pytest.raises(ValueError):
            casestudy_upload_costs(p_cloud_upload=1.5)


class TestComparison:
    def test_upload_case(self):
        e, c = CostLedger("ecd"), CostLedger("cdn")
        e.add("upload", 280)
        c.add("upload", 1000)
        assert comparison_report(e, c).saving_fraction == pytest.approx(0.72)

    def test_equal(self):
        e, c = CostLedger("ecd"), CostLedger("cdn")
        e.add("serve_local", 500)
        c.add("serve_local", 500)
        assert comparison_report(e, c).saving_fraction == 0

    def test_zero_cdn(self):
        with pytest.raises(ValueError):
            comparison_report(CostLedger("ecd"), CostLedger("cdn"))


@pytest.mark.parametrize("raw, want", [(0.1, Fraction(1, 10)), ("1/3", Fraction(1, 3)), (2, Fraction(2))])
def test_as_fraction(raw, want):
    assert as_fraction(raw) == want
