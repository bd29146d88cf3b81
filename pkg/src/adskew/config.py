"""Scenario configuration: YAML file -> validated pydantic models -> domain objects.

Every section rejects unknown keys. Money keys carry their unit (``_usd``)
and are converted to integer cents once, here.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from adskew import deliverysim, intervention
from adskew.core import (
    LABELS,
    BiddingStrategy,
    CampaignConfig,
    Cycle,
    GroupLabel,
    InvalidArgumentError,
    LatentGender,
    Targeting,
    TargetingLevel,
    parse_usd,
)
from adskew.metrics import Granularity
from adskew.unknownsim import PriorKind, PriorModel

log = logging.getLogger(__name__)


class ConfigError(InvalidArgumentError):
    """Invalid scenario file. ``problems`` lists ``(path, reason)`` pairs."""

    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        super().__init__("; ".join(f"{path}: {reason}" for path, reason in problems))


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


Probability = float


class LabelValues(_Section):
    male: float
    female: float
    unknown: float

    def as_map(self) -> dict[GroupLabel, float]:
        return {label: getattr(self, label.value) for label in LABELS}


class LatentMix(_Section):
    male: Probability = Field(0.5, ge=0, le=1)
    female: Probability = Field(0.5, ge=0, le=1)
    other: Probability = Field(0.0, ge=0, le=1)

    @model_validator(mode="after")
    def _sums_to_one(self):
        if abs(self.male + self.female + self.other - 1.0) > 1e-9:
            raise ValueError("latent mix must sum to 1")
        return self


class UnknownRates(_Section):
    male: Probability = Field(0.15, ge=0, le=1)
    female: Probability = Field(0.25, ge=0, le=1)


class TargetingPremium(_Section):
    all_users: float = Field(1.00, gt=0)
    single_gender_unknown: float = Field(1.25, gt=0)
    single_gender: float = Field(1.35, gt=0)


class MarketSection(_Section):
    daily_opportunities: int = Field(3000, ge=0)
    latent_mix: LatentMix = LatentMix()
    p_unknown: UnknownRates = UnknownRates()
    p_correct_given_known: Probability = Field(0.95, ge=0, le=1)
    cpc_base_usd: float = Field(0.80, gt=0)
    cpc_premium: LabelValues = LabelValues(male=1.10, female=1.30, unknown=1.00)
    targeting_premium: TargetingPremium = TargetingPremium()
    ctr: LabelValues = LabelValues(male=0.060, female=0.045, unknown=0.050)
    cvr_given_click: LabelValues = LabelValues(male=0.45, female=0.55, unknown=0.50)
    cpc_dispersion: float = Field(0.5, ge=0)
    relevance_elasticity: float = 1.0

    @field_validator("ctr", "cvr_given_click")
    @classmethod
    def _probabilities(cls, v: LabelValues):
        if any(not 0.0 <= x <= 1.0 for x in v.as_map().values()):
            raise ValueError("values must be probabilities in [0, 1]")
        return v

    @field_validator("cpc_premium")
    @classmethod
    def _non_negative(cls, v: LabelValues):
        if any(x < 0 for x in v.as_map().values()):
            raise ValueError("premiums must be >= 0")
        return v

    def to_model(self) -> deliverysim.MarketModel:
        mix = self.latent_mix
        return deliverysim.MarketModel(
            daily_opportunities=self.daily_opportunities,
            latent_mix=(mix.male, mix.female, mix.other),
            inference=deliverysim.InferenceModel(
                p_unknown={LatentGender.MALE: self.p_unknown.male, LatentGender.FEMALE: self.p_unknown.female},
                p_correct_given_known=self.p_correct_given_known,
            ),
            cpc_base_usd=self.cpc_base_usd,
            cpc_premium=self.cpc_premium.as_map(),
            ctr=self.ctr.as_map(),
            cvr_given_click=self.cvr_given_click.as_map(),
            cpc_dispersion=self.cpc_dispersion,
            relevance_elasticity=self.relevance_elasticity,
            targeting_premium={level: getattr(self.targeting_premium, level.value) for level in TargetingLevel},
        )


class CampaignSection(_Section):
    campaign_id: str = Field("campaign", min_length=1)
    bidding_strategy: BiddingStrategy = BiddingStrategy.MAX_CLICKS
    daily_budget_usd: Decimal = Field(Decimal("65.00"), ge=0)
    targeting: Targeting = Targeting.ALL
    target_cpa_usd: Decimal | None = Field(None, gt=0)
    label: str = ""
    creative_ref: str = ""

    @model_validator(mode="after")
    def _cpa_matches_strategy(self):
        has_cpa = self.target_cpa_usd is not None
        if has_cpa != (self.bidding_strategy is BiddingStrategy.MAX_CONVERSIONS):
            raise ValueError("target_cpa_usd must be set iff bidding_strategy is max_conversions")
        return self

    def to_campaign(self) -> CampaignConfig:
        return CampaignConfig(
            campaign_id=self.campaign_id,
            bidding_strategy=self.bidding_strategy,
            daily_budget_cents=parse_usd(self.daily_budget_usd),
            targeting=self.targeting.labels,
            target_cpa_cents=None if self.target_cpa_usd is None else parse_usd(self.target_cpa_usd),
            label=self.label,
            creative_ref=self.creative_ref,
        )


class InterventionSection(_Section):
    campaign_id: str | None = None
    variants: tuple[intervention.SplitVariant, ...] = (
        intervention.SplitVariant.ALL_USERS,
        intervention.SplitVariant.DIRECT_SPLIT,
        intervention.SplitVariant.UNKNOWN_AWARE_SPLIT,
    )
    male_share: Probability = Field(0.5, ge=0, le=1)
    cycle_period_slots: int = Field(1, ge=1)
    phase: intervention.Phase = intervention.Phase.A_FIRST
    rebalance_iterations: int = Field(0, ge=0)

    @field_validator("variants")
    @classmethod
    def _non_empty(cls, v):
        if not v:
            raise ValueError("at least one variant is required")
        if len(set(v)) != len(v):
            raise ValueError("variants must be distinct")
        return v


class PlatformSection(_Section):
    supports_exclusion: bool = True


class SimulationSection(_Section):
    days: int = Field(42, ge=1)
    warmup_days: int = Field(7, ge=0)
    slots_per_day: Literal[1, 2] = 1
    seed: int = Field(0, ge=0, lt=2**64)
    replications: int = Field(1, ge=1)
    workers: int = Field(1, ge=1)


class AuditSection(_Section):
    level: float = Field(0.99, gt=0, lt=1)
    window: Granularity = Granularity.WEEKLY
    focal: Literal["male", "female"] = "male"


class MonteCarloSection(_Section):
    priors: tuple[PriorKind, ...] = tuple(PriorKind)
    draws: int = Field(1000, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    bins: int = Field(50, ge=1)
    sigma_p: float | None = Field(None, ge=0)

    def prior_models(self) -> list[PriorModel]:
        return [
            PriorModel(kind, sigma_p=self.sigma_p if kind is PriorKind.NORMAL_INFORMATIVE else None)
            for kind in self.priors
        ]


class OutputSection(_Section):
    directory: str = "out"
    formats: tuple[Literal["csv", "json"], ...] = ("csv", "json")


class ScenarioConfig(_Section):
    name: str = "scenario"
    market: MarketSection = MarketSection()
    campaigns: tuple[CampaignSection, ...] = (CampaignSection(),)
    intervention: InterventionSection = InterventionSection()
    platform: PlatformSection = PlatformSection()
    simulation: SimulationSection = SimulationSection()
    audit: AuditSection = AuditSection()
    montecarlo: MonteCarloSection = MonteCarloSection()
    output: OutputSection = OutputSection()

    @model_validator(mode="after")
    def _campaigns(self):
        if not self.campaigns:
            raise ValueError("at least one campaign is required")
        ids = [c.campaign_id for c in self.campaigns]
        if len(set(ids)) != len(ids):
            raise ValueError("campaign ids must be unique")
        target = self.intervention.campaign_id
        if target is not None and target not in ids:
            raise ValueError(f"intervention.campaign_id {target!r} is not a configured campaign")
        original = self.original_campaign()
        if original.targeting is not Targeting.ALL:
            raise ValueError(f"intervened campaign {original.campaign_id!r} must target all users")
        return self

    def original_campaign(self) -> CampaignSection:
        target = self.intervention.campaign_id
        if target is None:
            return self.campaigns[0]
        return next(c for c in self.campaigns if c.campaign_id == target)

    def schedule(self) -> intervention.CycleSchedule:
        sim = self.simulation
        return intervention.CycleSchedule(
            self.intervention.cycle_period_slots,
            sim.days * sim.slots_per_day,
            self.intervention.phase,
            sim.slots_per_day,
        )

    def digest(self) -> str:
        """sha256 of the canonical JSON form (defaults filled in, keys sorted)."""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _problems(exc: ValidationError) -> list[tuple[str, str]]:
    out = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        out.append((path, err["msg"]))
    return out


def parse_config(data: Any) -> ScenarioConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError([("<root>", "scenario file must contain a mapping")])
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_problems(exc)) from None


def load_config(path: str | Path) -> ScenarioConfig:
    """Read and validate a YAML scenario. OSError propagates for I/O problems."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([("<file>", f"not valid YAML: {exc}")]) from None
    return parse_config(data)


# -- lints --------------------------------------------------------------------


@dataclass(frozen=True)
class Advisory:
    code: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"


def _split_campaigns(cfg: ScenarioConfig) -> list[CampaignConfig]:
    original = cfg.original_campaign().to_campaign()
    ratio = intervention.DesiredRatio(cfg.intervention.male_share)
    out = []
    for variant in cfg.intervention.variants:
        if variant is intervention.SplitVariant.ALL_USERS:
            continue
        if variant is intervention.SplitVariant.UNKNOWN_AWARE_SPLIT and not cfg.platform.supports_exclusion:
            continue
        plan = intervention.build_split(original, variant, ratio, schedule=cfg.schedule())
        out.extend(plan.campaigns)
    return out


def _overlap(a: CampaignSection, b: CampaignSection) -> bool:
    return bool(a.targeting.labels & b.targeting.labels)


def lint_config(cfg: ScenarioConfig) -> list[Advisory]:
    """Advisory checks for configurations known to distort delivery."""
    advisories = []
    market = cfg.market.to_model()

    campaigns = [c.to_campaign() for c in cfg.campaigns] + _split_campaigns(cfg)
    for c in campaigns:
        if c.bidding_strategy is not BiddingStrategy.MAX_CONVERSIONS:
            continue
        implied = market.implied_min_cpa_usd(c.targeting)
        if c.target_cpa_cents / 100.0 < implied:
            advisories.append(
                Advisory(
                    "low-cpa",
                    f"{c.campaign_id}: target CPA {c.target_cpa_cents / 100:.2f} is below the market-implied "
                    f"minimum cost per conversion {implied:.2f} for {c.targeting_kind.value}; "
                    "some labels may never be bid on",
                )
            )

    sim = cfg.simulation
    if sim.days < sim.warmup_days:
        advisories.append(
            Advisory("cold-start", f"horizon of {sim.days} days is shorter than the {sim.warmup_days}-day warm-up")
        )

    configured = cfg.campaigns
    for i, a in enumerate(configured):
        for b in configured[i + 1 :]:
            if _overlap(a, b):
                shared = sorted(label.value for label in a.targeting.labels & b.targeting.labels)
                advisories.append(
                    Advisory(
                        "self-competition",
                        f"{a.campaign_id} and {b.campaign_id} are both eligible for {', '.join(shared)}",
                    )
                )

    if intervention.SplitVariant.UNKNOWN_AWARE_SPLIT in cfg.intervention.variants:
        schedule = cfg.schedule()
        if not schedule.balanced:
            counts = schedule.slot_counts()
            advisories.append(
                Advisory(
                    "uneven-cycles",
                    f"cycle A gets {counts[Cycle.A]} slots and cycle B gets {counts[Cycle.B]}; "
                    "split campaigns will not spend evenly",
                )
            )
    return advisories
