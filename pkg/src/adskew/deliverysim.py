"""Stylized paid-search delivery simulator.

Every day a stream of ad opportunities arrives. Each opportunity has a latent
gender, a platform label (which may be unknown), a quoted cost per click and
pre-sampled click / conversion outcomes. Active campaigns take the eligible
opportunities their bidding strategy ranks best until the next potential click
no longer fits in the remaining budget. Spend accrues per click.

Three skew drivers are modelled:

* baseline engagement: ``ctr`` and ``cvr_given_click`` differ by label;
* predicted relevance: the quoted CPC scales with ``(ctr_ref / ctr) **
  relevance_elasticity``, so users predicted to click more are cheaper per
  click (quality-adjusted pricing);
* competition: ``cpc_premium`` multiplies the CPC per label, and
  ``targeting_premium`` multiplies it per campaign targeting level (narrower
  targeting competes in thinner auctions).
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import math
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from adskew import kernels, rng
from adskew.core import (
    LABEL_INDEX,
    LABELS,
    LATENTS,
    BiddingStrategy,
    CampaignConfig,
    EngagementRecord,
    GroupLabel,
    InvalidArgumentError,
    LatentGender,
    Targeting,
    TargetingLevel,
)

DEFAULT_START = dt.date(2025, 1, 6)  # a Monday
_UNIFORMS_PER_OPPORTUNITY = 7
_LATENT_INDEX = {g: i for i, g in enumerate(LATENTS)}


def _label_map(values: Mapping, name: str) -> dict[GroupLabel, float]:
    out = {GroupLabel(k): float(v) for k, v in dict(values).items()}
    missing = set(LABELS) - set(out)
    if missing:
        raise InvalidArgumentError(f"{name} is missing labels {sorted(m.value for m in missing)}")
    return out


@dataclass(frozen=True)
class InferenceModel:
    """How the platform labels a user.

    A latent male or female user is labelled unknown with probability
    ``p_unknown[latent]``; otherwise the correct binary label is emitted with
    probability ``p_correct_given_known`` and the opposite one otherwise.
    Latent ``other`` users always surface as unknown.
    """

    p_unknown: Mapping[LatentGender, float]
    p_correct_given_known: float = 1.0

    def __post_init__(self):
        p = {LatentGender(k): float(v) for k, v in dict(self.p_unknown).items()}
        p.setdefault(LatentGender.MALE, 0.0)
        p.setdefault(LatentGender.FEMALE, 0.0)
        if p.get(LatentGender.OTHER, 1.0) != 1.0:
            raise InvalidArgumentError("latent 'other' users are always labelled unknown")
        p[LatentGender.OTHER] = 1.0
        if not all(0.0 <= v <= 1.0 for v in p.values()):
            raise InvalidArgumentError("p_unknown values must be probabilities")
        if not 0.0 <= self.p_correct_given_known <= 1.0:
            raise InvalidArgumentError("p_correct_given_known must be a probability")
        object.__setattr__(self, "p_unknown", p)


@dataclass(frozen=True)
class MarketModel:
    daily_opportunities: int
    latent_mix: tuple[float, float, float]
    inference: InferenceModel
    cpc_base_usd: float
    cpc_premium: Mapping[GroupLabel, float]
    ctr: Mapping[GroupLabel, float]
    cvr_given_click: Mapping[GroupLabel, float]
    cpc_dispersion: float = 0.0
    relevance_elasticity: float = 0.0
    targeting_premium: Mapping[TargetingLevel, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.daily_opportunities < 0:
            raise InvalidArgumentError("daily_opportunities must be >= 0")
        mix = tuple(float(x) for x in self.latent_mix)
        if len(mix) != 3 or any(not 0.0 <= x <= 1.0 for x in mix) or abs(sum(mix) - 1.0) > 1e-9:
            raise InvalidArgumentError(f"latent_mix must be three probabilities summing to 1, got {mix}")
        object.__setattr__(self, "latent_mix", mix)
        for name in ("cpc_premium", "ctr", "cvr_given_click"):
            object.__setattr__(self, name, _label_map(getattr(self, name), name))
        if any(v < 0 for v in self.cpc_premium.values()):
            raise InvalidArgumentError("cpc_premium multipliers must be >= 0")
        for name in ("ctr", "cvr_given_click"):
            if any(not 0.0 <= v <= 1.0 for v in getattr(self, name).values()):
                raise InvalidArgumentError(f"{name} values must be probabilities")
        if self.cpc_base_usd <= 0:
            raise InvalidArgumentError("cpc_base_usd must be positive")
        if self.cpc_dispersion < 0:
            raise InvalidArgumentError("cpc_dispersion must be >= 0")
        premium = {level: 1.0 for level in TargetingLevel}
        premium.update({TargetingLevel(k): float(v) for k, v in dict(self.targeting_premium).items()})
        if any(v <= 0 for v in premium.values()):
            raise InvalidArgumentError("targeting_premium multipliers must be positive")
        object.__setattr__(self, "targeting_premium", premium)
        if self.relevance_elasticity != 0 and min(self.ctr.values()) <= 0:
            raise InvalidArgumentError("relevance pricing needs every ctr > 0")

    @property
    def ctr_reference(self) -> float:
        return sum(self.ctr.values()) / len(self.ctr)

    def expected_cpc_usd(self, label: GroupLabel, level: TargetingLevel = TargetingLevel.ALL_USERS) -> float:
        """Median quoted CPC for ``label`` (before lognormal dispersion)."""
        relevance = 1.0
        if self.relevance_elasticity:
            relevance = (self.ctr_reference / self.ctr[label]) ** self.relevance_elasticity
        return self.cpc_base_usd * self.cpc_premium[label] * relevance * self.targeting_premium[level]

    def implied_min_cpa_usd(self, labels: Iterable[GroupLabel] = LABELS) -> float:
        """Cheapest expected cost per conversion over ``labels``, priced at the
        targeting level those labels imply."""
        labels = frozenset(labels)
        level = Targeting.from_labels(labels).level
        costs = [
            self.expected_cpc_usd(label, level) / self.cvr_given_click[label]
            for label in LABELS
            if label in labels and self.cvr_given_click[label] > 0
        ]
        return min(costs) if costs else math.inf


def calibration_market(daily_opportunities: int = 3000) -> MarketModel:
    """Synthetic market used by the calibration scenario and acceptance runs.

    Values are invented to exhibit the three skew drivers; they are not
    estimates of any real platform.
    """
    return MarketModel(
        daily_opportunities=daily_opportunities,
        latent_mix=(0.5, 0.5, 0.0),
        inference=InferenceModel(
            p_unknown={LatentGender.MALE: 0.15, LatentGender.FEMALE: 0.25, LatentGender.OTHER: 1.0},
            p_correct_given_known=0.95,
        ),
        cpc_base_usd=0.80,
        cpc_premium={GroupLabel.MALE: 1.10, GroupLabel.FEMALE: 1.30, GroupLabel.UNKNOWN: 1.00},
        ctr={GroupLabel.MALE: 0.060, GroupLabel.FEMALE: 0.045, GroupLabel.UNKNOWN: 0.050},
        cvr_given_click={GroupLabel.MALE: 0.45, GroupLabel.FEMALE: 0.55, GroupLabel.UNKNOWN: 0.50},
        cpc_dispersion=0.5,
        relevance_elasticity=1.0,
        targeting_premium={
            TargetingLevel.ALL_USERS: 1.00,
            TargetingLevel.SINGLE_GENDER_UNKNOWN: 1.25,
            TargetingLevel.SINGLE_GENDER: 1.35,
        },
    )


@dataclass(frozen=True)
class Opportunity:
    latent: LatentGender
    label: GroupLabel
    cpc_quote_cents: int
    will_click: bool
    will_convert: bool


@dataclass(frozen=True)
class OpportunityBatch:
    """Columnar opportunities; labels and latents are indices into
    ``core.LABELS`` / ``core.LATENTS``."""

    latent: np.ndarray = field(repr=False)
    label: np.ndarray = field(repr=False)
    cpc_cents: np.ndarray = field(repr=False)
    will_click: np.ndarray = field(repr=False)
    will_convert: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return int(self.label.size)

    def subset(self, idx) -> OpportunityBatch:
        return OpportunityBatch(*(a[idx] for a in (self.latent, self.label, self.cpc_cents, self.will_click, self.will_convert)))

    def to_list(self) -> list[Opportunity]:
        return [
            Opportunity(LATENTS[lt], LABELS[lb], int(c), bool(k), bool(v))
            for lt, lb, c, k, v in zip(self.latent, self.label, self.cpc_cents, self.will_click, self.will_convert)
        ]


def _by_label(values: Mapping[GroupLabel, float]) -> np.ndarray:
    return np.array([values[label] for label in LABELS], dtype=np.float64)


def generate_day(market: MarketModel, key: int) -> OpportunityBatch:
    """All opportunities for one day, drawn from the stream ``key``."""
    n = market.daily_opportunities
    if n == 0:
        empty = np.zeros(0, dtype=np.int64)
        return OpportunityBatch(empty, empty, empty, empty.astype(bool), empty.astype(bool))
    u = rng.uniform_block(key, 0, n * _UNIFORMS_PER_OPPORTUNITY).reshape(n, _UNIFORMS_PER_OPPORTUNITY)
    u_latent, u_unknown, u_correct, u_n1, u_n2, u_click, u_conv = u.T

    mix = market.latent_mix
    latent = (u_latent >= mix[0]).astype(np.int64) + (u_latent >= mix[0] + mix[1])

    p_unknown = np.array([market.inference.p_unknown[g] for g in LATENTS])
    is_unknown = u_unknown < p_unknown[latent]
    correct = u_correct < market.inference.p_correct_given_known
    # latent male=0/female=1 map to label male=0/female=1; flip when wrong
    label = np.where(correct, latent, 1 - latent)
    label = np.where(is_unknown | (latent == _LATENT_INDEX[LatentGender.OTHER]), LABEL_INDEX[GroupLabel.UNKNOWN], label)

    cpc = np.array([market.expected_cpc_usd(g) for g in LABELS])[label]
    sigma = market.cpc_dispersion
    if sigma > 0:
        z = rng.standard_normal_pairs(u_n1, u_n2)
        cpc = cpc * rng.libm_exp(sigma * z - 0.5 * sigma * sigma)
    cpc_cents = np.maximum(1, np.floor(cpc * 100.0 + 0.5)).astype(np.int64)

    will_click = u_click < _by_label(market.ctr)[label]
    will_convert = will_click & (u_conv < _by_label(market.cvr_given_click)[label])
    return OpportunityBatch(latent, label, cpc_cents, will_click, will_convert)


def quoted_cpc(campaign: CampaignConfig, batch: OpportunityBatch, market: MarketModel) -> np.ndarray:
    """Per-opportunity CPC in cents for ``campaign`` after its targeting premium."""
    premium = market.targeting_premium[campaign.targeting_kind.level]
    if premium == 1.0:
        return batch.cpc_cents
    return np.maximum(1, np.floor(batch.cpc_cents * premium + 0.5)).astype(np.int64)


def _scores(campaign: CampaignConfig, batch: OpportunityBatch, market: MarketModel) -> tuple[np.ndarray, np.ndarray]:
    """Ranking scores (lower is better) and the mask of opportunities the
    strategy is willing to bid on."""
    cpc = batch.cpc_cents.astype(np.float64)
    if campaign.bidding_strategy is BiddingStrategy.MAX_CLICKS:
        return cpc, np.ones(len(batch), dtype=bool)
    cvr = _by_label(market.cvr_given_click)[batch.label]
    with np.errstate(divide="ignore", over="ignore"):
        cost_per_conv = np.where(cvr > 0, cpc / np.where(cvr > 0, cvr, 1.0), np.inf)
    return cost_per_conv, cost_per_conv <= campaign.target_cpa_cents


def active_slot_budget(campaign: CampaignConfig, slots_per_day: int) -> int:
    """Budget available in one active slot.

    ``daily_budget_cents`` is an average over the schedule: an always-on
    campaign spreads it over ``slots_per_day`` slots, while a cycled campaign
    (active in half the slots) gets twice as much per active slot.
    """
    active_slots_per_two_days = 2 * slots_per_day if campaign.cycle is None else slots_per_day
    return (2 * campaign.daily_budget_cents) // active_slots_per_two_days


def run_day(
    campaigns: Sequence[CampaignConfig],
    market: MarketModel,
    key: int,
    date: dt.date = DEFAULT_START,
    day_index: int = 0,
    schedule=None,
    backend: str | None = None,
) -> list[EngagementRecord]:
    """Simulate one day and return one record per (active campaign, targeted label).

    Each opportunity goes to at most one campaign: the lowest ``campaign_id``
    among active campaigns targeting its label.
    """
    batch = generate_day(market, key)
    slots_per_day = schedule.slots_per_day if schedule is not None else 1
    ordered = sorted(campaigns, key=lambda c: c.campaign_id)
    totals: dict[str, np.ndarray] = {}
    n = len(batch)
    for s in range(slots_per_day):
        part = batch.subset(slice(s * n // slots_per_day, (s + 1) * n // slots_per_day))
        slot = day_index * slots_per_day + s
        active = []
        for c in ordered:
            if c.cycle is None:
                active.append(c)
            elif schedule is None:
                raise InvalidArgumentError(f"{c.campaign_id} is cycled but no schedule was given")
            elif schedule.cycle_of(slot) is c.cycle:
                active.append(c)
        taken = np.zeros(len(part), dtype=bool)
        for c in active:
            target_idx = np.array([LABEL_INDEX[g] for g in c.targeting])
            eligible = np.flatnonzero(~taken & np.isin(part.label, target_idx))
            taken[eligible] = True
            sub = part.subset(eligible)
            sub = dataclasses.replace(sub, cpc_cents=quoted_cpc(c, sub, market))
            scores, willing = _scores(c, sub, market)
            sub = sub.subset(willing)
            counts = kernels.allocate_campaign(
                scores[willing],
                sub.cpc_cents,
                sub.will_click,
                sub.will_convert,
                sub.label,
                active_slot_budget(c, slots_per_day),
                backend=backend,
            )
            totals[c.campaign_id] = totals.get(c.campaign_id, 0) + counts

    records = []
    for c in ordered:
        if c.campaign_id not in totals:
            continue
        counts = totals[c.campaign_id]
        for label in LABELS:
            if label not in c.targeting:
                continue
            impr, clicks, conv, spend = (int(x) for x in counts[LABEL_INDEX[label]])
            records.append(
                EngagementRecord(c.campaign_id, date, label, impr, clicks, conv, spend, c.targeting_kind)
            )
    return records


def run_horizon(
    campaigns: Sequence[CampaignConfig],
    market: MarketModel,
    days: int,
    seed: int = 0,
    schedule=None,
    start_date: dt.date = DEFAULT_START,
    backend: str | None = None,
) -> list[EngagementRecord]:
    """Run ``days`` consecutive days; day ``d`` draws from ``stream_key(seed, d)``."""
    if days < 1:
        raise InvalidArgumentError("days must be >= 1")
    ledger = []
    for d in range(days):
        ledger.extend(
            run_day(
                campaigns,
                market,
                rng.stream_key(seed, d),
                date=start_date + dt.timedelta(days=d),
                day_index=d,
                schedule=schedule,
                backend=backend,
            )
        )
    return ledger


def _run_one(args):
    campaigns, market, days, seed, schedule, start_date, backend = args
    return run_horizon(campaigns, market, days, seed, schedule, start_date, backend)


def run_replications(
    campaigns: Sequence[CampaignConfig],
    market: MarketModel,
    days: int,
    seeds: Iterable[int],
    schedule=None,
    start_date: dt.date = DEFAULT_START,
    workers: int = 1,
    backend: str | None = None,
) -> dict[int, list[EngagementRecord]]:
    """Independent replications keyed by seed; ``workers > 1`` uses processes."""
    seeds = list(seeds)
    jobs = [(list(campaigns), market, days, s, schedule, start_date, backend) for s in seeds]
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(job) for job in jobs]
    return dict(zip(seeds, results))
