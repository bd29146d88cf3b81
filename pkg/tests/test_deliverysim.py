import dataclasses

import numpy as np
import pytest

from adskew import deliverysim as ds
from adskew import intervention as iv
from adskew import metrics
from adskew.core import (
    LABEL_INDEX,
    LABELS,
    BiddingStrategy,
    CampaignConfig,
    GroupLabel,
    InvalidArgumentError,
    LatentGender,
    TargetingLevel,
)

M, F, U = GroupLabel.MALE, GroupLabel.FEMALE, GroupLabel.UNKNOWN


def flat_market(**overrides):
    """Symmetric market without noise; tests override one driver at a time."""
    base = dict(
        daily_opportunities=2000,
        latent_mix=(0.5, 0.5, 0.0),
        inference=ds.InferenceModel({LatentGender.MALE: 0.1, LatentGender.FEMALE: 0.1}, 1.0),
        cpc_base_usd=1.0,
        cpc_premium={M: 1.0, F: 1.0, U: 1.0},
        ctr={M: 0.05, F: 0.05, U: 0.05},
        cvr_given_click={M: 0.5, F: 0.5, U: 0.5},
        cpc_dispersion=0.3,
        relevance_elasticity=1.0,
    )
    base.update(overrides)
    return ds.MarketModel(**base)


def clicks_campaign(budget=2000, targeting=frozenset(LABELS), cid="c"):
    return CampaignConfig(cid, BiddingStrategy.MAX_CLICKS, budget, targeting=targeting)


# -- market validation ------------------------------------------------------------


def test_market_validation():
    with pytest.raises(InvalidArgumentError):
        flat_market(latent_mix=(0.5, 0.4, 0.0))
    with pytest.raises(InvalidArgumentError):
        flat_market(ctr={M: 1.2, F: 0.1, U: 0.1})
    with pytest.raises(InvalidArgumentError):
        flat_market(cpc_premium={M: -1, F: 1, U: 1})
    with pytest.raises(InvalidArgumentError):
        flat_market(ctr={M: 0.1, F: 0.1})
    with pytest.raises(InvalidArgumentError):
        flat_market(targeting_premium={TargetingLevel.SINGLE_GENDER: 0})
    with pytest.raises(InvalidArgumentError):
        ds.InferenceModel({LatentGender.OTHER: 0.5})


def test_targeting_premium_defaults_to_one():
    assert set(flat_market().targeting_premium.values()) == {1.0}


def test_implied_min_cpa():
    market = flat_market(cpc_dispersion=0.0, relevance_elasticity=0.0, cpc_base_usd=0.25)
    assert market.implied_min_cpa_usd() == pytest.approx(0.5)
    cal = ds.calibration_market()
    female_only = cal.implied_min_cpa_usd({F})
    assert female_only == pytest.approx(cal.expected_cpc_usd(F, TargetingLevel.SINGLE_GENDER) / 0.55)


# -- generate_day -------------------------------------------------------------------


def test_empty_day():
    assert len(ds.generate_day(flat_market(daily_opportunities=0), 1)) == 0


def test_degenerate_mix_all_male():
    market = flat_market(latent_mix=(1.0, 0.0, 0.0), inference=ds.InferenceModel({LatentGender.MALE: 0.0}, 1.0))
    batch = ds.generate_day(market, 5)
    assert (batch.label == LABEL_INDEX[M]).all()


def test_certain_click():
    batch = ds.generate_day(flat_market(ctr={M: 1.0, F: 0.05, U: 0.05}), 5)
    assert batch.will_click[batch.label == LABEL_INDEX[M]].all()


def test_opportunity_invariants():
    batch = ds.generate_day(ds.calibration_market(), 11)
    assert not (batch.will_convert & ~batch.will_click).any()
    assert (batch.cpc_cents >= 1).all()
    assert len(batch.to_list()) == len(batch)


def test_other_latent_always_unknown():
    market = flat_market(latent_mix=(0.0, 0.0, 1.0))
    assert (ds.generate_day(market, 2).label == LABEL_INDEX[U]).all()


def test_label_rates_follow_inference():
    market = ds.calibration_market(daily_opportunities=200_000)
    batch = ds.generate_day(market, 3)
    male = batch.latent == 0
    unknown = batch.label == LABEL_INDEX[U]
    assert unknown[male].mean() == pytest.approx(0.15, abs=0.005)
    assert unknown[~male].mean() == pytest.approx(0.25, abs=0.005)
    wrong = (batch.label != batch.latent) & ~unknown
    assert wrong[~unknown].mean() == pytest.approx(0.05, abs=0.003)


# -- run_day --------------------------------------------------------------------------


def test_budget_admits_exactly_five_clicks():
    market = flat_market(
        daily_opportunities=100,
        latent_mix=(1.0, 0.0, 0.0),
        inference=ds.InferenceModel({LatentGender.MALE: 0.0}, 1.0),
        ctr={M: 1.0, F: 1.0, U: 1.0},
        cpc_dispersion=0.0,
        relevance_elasticity=0.0,
    )
    records = ds.run_day([clicks_campaign(500, frozenset({M}))], market, 1)
    (r,) = records
    assert (r.impressions, r.clicks, r.spend_cents) == (5, 5, 500)


def test_targeting_respected_when_no_eligible_users():
    market = flat_market(latent_mix=(1.0, 0.0, 0.0), inference=ds.InferenceModel({LatentGender.MALE: 0.0}, 1.0))
    records = ds.run_day([clicks_campaign(10_000, frozenset({F}))], market, 1)
    assert [r.label for r in records] == [F]
    assert records[0].impressions == 0


def test_zero_budget_no_impressions():
    records = ds.run_day([clicks_campaign(0)], flat_market(), 1)
    assert sum(r.impressions for r in records) == 0


def test_first_campaign_id_wins_ties():
    market = flat_market()
    a = clicks_campaign(10**6, cid="a")
    b = clicks_campaign(10**6, cid="b")
    records = ds.run_day([b, a], market, 1)
    by_id = {cid: sum(r.impressions for r in records if r.campaign_id == cid) for cid in "ab"}
    assert by_id == {"a": market.daily_opportunities, "b": 0}


def test_max_conversions_respects_target_cpa():
    market = flat_market(cpc_dispersion=0.0, relevance_elasticity=0.0, cvr_given_click={M: 0.5, F: 0.1, U: 0.5})
    c = CampaignConfig("c", BiddingStrategy.MAX_CONVERSIONS, 10**6, target_cpa_cents=300)
    records = ds.run_day([c], market, 1)
    female = next(r for r in records if r.label is F)
    assert female.impressions == 0  # 100 / 0.1 = 1000 cents per conversion > 300
    assert sum(r.impressions for r in records) > 0


def test_cycled_campaign_needs_schedule():
    c = dataclasses.replace(clicks_campaign(), cycle=iv.Cycle.A)
    with pytest.raises(InvalidArgumentError):
        ds.run_day([c], flat_market(), 1)


def test_active_slot_budget():
    c = clicks_campaign(1625)
    assert ds.active_slot_budget(c, 1) == 1625
    assert ds.active_slot_budget(dataclasses.replace(c, cycle=iv.Cycle.A), 1) == 3250
    assert ds.active_slot_budget(c, 2) == 812
    assert ds.active_slot_budget(dataclasses.replace(c, cycle=iv.Cycle.B), 2) == 1625


def test_targeting_premium_raises_quotes():
    market = flat_market(targeting_premium={TargetingLevel.SINGLE_GENDER: 2.0})
    batch = ds.generate_day(market, 1)
    single = ds.quoted_cpc(clicks_campaign(targeting=frozenset({M})), batch, market)
    everyone = ds.quoted_cpc(clicks_campaign(), batch, market)
    assert np.array_equal(everyone, batch.cpc_cents)
    assert np.array_equal(single, batch.cpc_cents * 2)


# -- horizon ------------------------------------------------------------------------------


def test_horizon_deterministic_and_backend_independent():
    market = ds.calibration_market(500)
    c = clicks_campaign(1000)
    a = ds.run_horizon([c], market, 7, seed=3, backend="numba")
    b = ds.run_horizon([c], market, 7, seed=3, backend="numpy")
    assert a == b
    assert a != ds.run_horizon([c], market, 7, seed=4)


def test_replications_parallel_matches_sequential():
    market = ds.calibration_market(300)
    c = clicks_campaign(500)
    seq = ds.run_replications([c], market, 3, [1, 2, 3], workers=1)
    par = ds.run_replications([c], market, 3, [1, 2, 3], workers=2)
    assert seq == par


def test_doubling_opportunities_doubles_impressions():
    c = clicks_campaign(10**9)
    small = ds.run_horizon([c], flat_market(daily_opportunities=200), 30, seed=1)
    large = ds.run_horizon([c], flat_market(daily_opportunities=400), 30, seed=1)
    ratio = sum(r.impressions for r in large) / sum(r.impressions for r in small)
    assert ratio == pytest.approx(2.0, rel=0.10)


def test_dates_are_consecutive():
    ledger = ds.run_horizon([clicks_campaign()], flat_market(daily_opportunities=50), 3, seed=0)
    assert sorted({r.date for r in ledger}) == [ds.DEFAULT_START + ds.dt.timedelta(days=d) for d in range(3)]


def test_invalid_horizon():
    with pytest.raises(InvalidArgumentError):
        ds.run_horizon([clicks_campaign()], flat_market(), 0)


# -- mechanisms ------------------------------------------------------------------------------


def _skew(ledger):
    return metrics.skew(metrics.counts_by_label(ledger))


def test_ctr_gap_skews_max_clicks_toward_male():
    market = flat_market(ctr={M: 0.06, F: 0.04, U: 0.05})
    ledger = ds.run_horizon([clicks_campaign(2000)], market, 20, seed=2)
    estimate = metrics.estimate_from_counts(metrics.counts_by_label(ledger))
    assert estimate.ci_low > 0.5


def test_max_conversions_skew_not_above_max_clicks():
    market = flat_market(ctr={M: 0.06, F: 0.04, U: 0.05}, cvr_given_click={M: 0.4, F: 0.6, U: 0.5})
    clicks = ds.run_horizon([clicks_campaign(2000)], market, 20, seed=2)
    conv_campaign = CampaignConfig("c", BiddingStrategy.MAX_CONVERSIONS, 2000, target_cpa_cents=10_000)
    conversions = ds.run_horizon([conv_campaign], market, 20, seed=2)
    assert _skew(conversions) <= _skew(clicks)


def test_female_premium_raises_female_cpm_under_single_gender():
    market = flat_market(cpc_premium={M: 1.0, F: 1.3, U: 1.0})
    campaigns = [clicks_campaign(1000, frozenset({M}), "m"), clicks_campaign(1000, frozenset({F}), "f")]
    ledger = ds.run_horizon(campaigns, market, 10, seed=5)
    per_label = metrics.rates(ledger, by_label=True)
    assert per_label[F].cpm > per_label[M].cpm


def test_budget_never_exceeded_per_active_slot():
    market = ds.calibration_market(1000)
    plan = iv.build_split(clicks_campaign(6500, cid="o"), "unknown_aware_split", schedule=iv.make_schedule(1, 10))
    ledger = iv.run_plan(plan, market, 10, seed=1)
    caps = {c.campaign_id: ds.active_slot_budget(c, 1) for c in plan.campaigns}
    spend = {}
    for r in ledger:
        spend[(r.campaign_id, r.date)] = spend.get((r.campaign_id, r.date), 0) + r.spend_cents
    assert all(v <= caps[cid] for (cid, _), v in spend.items())


def test_single_gender_campaigns_never_see_unknown():
    plan = iv.build_split(clicks_campaign(6500, cid="o"), "direct_split")
    ledger = iv.run_plan(plan, ds.calibration_market(1000), 5, seed=1)
    assert all(r.label is not U for r in ledger)
    assert all(r.label in r.targeting.labels for r in ledger)


def test_day_keys_are_independent_of_horizon_length():
    market = ds.calibration_market(300)
    short = ds.run_horizon([clicks_campaign()], market, 2, seed=9)
    long = ds.run_horizon([clicks_campaign()], market, 4, seed=9)
    assert long[: len(short)] == short
