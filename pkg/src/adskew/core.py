"""Shared domain types: labels, engagement records, campaign configs, estimates."""

from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation

Cents = int


class AdSkewError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgumentError(AdSkewError, ValueError):
    pass


class UndefinedSkewError(AdSkewError, ZeroDivisionError):
    """Raised when male + female counts are zero."""


class UndefinedRateError(AdSkewError, ZeroDivisionError):
    """Raised when a rate is requested for a group with zero impressions."""


class InsufficientDataError(AdSkewError):
    pass


class GroupLabel(str, enum.Enum):
    """Platform-inferred gender label. UNKNOWN is a label in its own right."""

    MALE = "male"
    FEMALE = "female"
    UNKNOWN = "unknown"

    @property
    def complement(self) -> GroupLabel:
        if self is GroupLabel.MALE:
            return GroupLabel.FEMALE
        if self is GroupLabel.FEMALE:
            return GroupLabel.MALE
        raise InvalidArgumentError("unknown has no binary complement")


# fixed array index order used by the simulator and kernels
LABELS: tuple[GroupLabel, ...] = (GroupLabel.MALE, GroupLabel.FEMALE, GroupLabel.UNKNOWN)
LABEL_INDEX = {label: i for i, label in enumerate(LABELS)}


class LatentGender(str, enum.Enum):
    """Simulation ground truth. Never written to audit outputs."""

    MALE = "male"
    FEMALE = "female"
    OTHER = "other"


LATENTS: tuple[LatentGender, ...] = (LatentGender.MALE, LatentGender.FEMALE, LatentGender.OTHER)


class Targeting(str, enum.Enum):
    """Targeting sets a campaign may legally use, with their CSV spelling."""

    ALL = "all"
    MALE = "male"
    FEMALE = "female"
    MALE_UNKNOWN = "male_unknown"
    FEMALE_UNKNOWN = "female_unknown"

    @property
    def labels(self) -> frozenset[GroupLabel]:
        return _TARGETING_LABELS[self]

    @classmethod
    def from_labels(cls, labels) -> Targeting:
        key = frozenset(labels)
        for targeting, members in _TARGETING_LABELS.items():
            if members == key:
                return targeting
        names = sorted(label.value for label in key)
        if key == frozenset({GroupLabel.UNKNOWN}):
            raise InvalidArgumentError("unknown users cannot be targeted on their own")
        raise InvalidArgumentError(f"unsupported targeting set {names}")

    @property
    def level(self) -> TargetingLevel:
        if self is Targeting.ALL:
            return TargetingLevel.ALL_USERS
        if self in (Targeting.MALE, Targeting.FEMALE):
            return TargetingLevel.SINGLE_GENDER
        return TargetingLevel.SINGLE_GENDER_UNKNOWN

    @property
    def gendered_side(self) -> GroupLabel | None:
        """The binary label a split campaign is steering toward (None for ALL)."""
        if self in (Targeting.MALE, Targeting.MALE_UNKNOWN):
            return GroupLabel.MALE
        if self in (Targeting.FEMALE, Targeting.FEMALE_UNKNOWN):
            return GroupLabel.FEMALE
        return None


class TargetingLevel(str, enum.Enum):
    """Targeting granularity, coarsest first."""

    ALL_USERS = "all_users"
    SINGLE_GENDER_UNKNOWN = "single_gender_unknown"
    SINGLE_GENDER = "single_gender"


_TARGETING_LABELS = {
    Targeting.ALL: frozenset(LABELS),
    Targeting.MALE: frozenset({GroupLabel.MALE}),
    Targeting.FEMALE: frozenset({GroupLabel.FEMALE}),
    Targeting.MALE_UNKNOWN: frozenset({GroupLabel.MALE, GroupLabel.UNKNOWN}),
    Targeting.FEMALE_UNKNOWN: frozenset({GroupLabel.FEMALE, GroupLabel.UNKNOWN}),
}


class BiddingStrategy(str, enum.Enum):
    MAX_CLICKS = "max_clicks"
    MAX_CONVERSIONS = "max_conversions"


class Cycle(str, enum.Enum):
    A = "A"
    B = "B"


class Metric(str, enum.Enum):
    IMPRESSIONS = "impressions"
    SPEND = "spend"
    CLICKS = "clicks"
    CONVERSIONS = "conversions"


# -- currency -----------------------------------------------------------------


def parse_usd(text: str | float | int | Decimal) -> Cents:
    """Parse a dollar amount into integer cents (half-up rounding)."""
    try:
        value = Decimal(str(text).strip())
    except InvalidOperation as exc:
        raise InvalidArgumentError(f"not a currency amount: {text!r}") from exc
    if not value.is_finite():
        raise InvalidArgumentError(f"not a currency amount: {text!r}")
    return int((value * 100).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def format_usd(cents: Cents) -> str:
    sign = "-" if cents < 0 else ""
    cents = abs(int(cents))
    return f"{sign}{cents // 100}.{cents % 100:02d}"


def to_usd(cents: Cents) -> float:
    return cents / 100.0


# -- records ------------------------------------------------------------------


@dataclass(frozen=True)
class EngagementRecord:
    """One (campaign, date, label) row of the engagement ledger.

    ``targeting`` is carried so the canonical CSV round-trips; it names the
    targeting set of the campaign that produced the row.
    """

    campaign_id: str
    date: dt.date
    label: GroupLabel
    impressions: int
    clicks: int
    conversions: int
    spend_cents: Cents
    targeting: Targeting = Targeting.ALL

    @property
    def spend(self) -> float:
        return to_usd(self.spend_cents)

    def count(self, metric: Metric) -> int:
        if metric is Metric.IMPRESSIONS:
            return self.impressions
        if metric is Metric.SPEND:
            return self.spend_cents
        if metric is Metric.CLICKS:
            return self.clicks
        return self.conversions


def validate_record(record: EngagementRecord) -> list[str]:
    """Return every invariant violation in ``record``; empty means valid."""
    problems = []
    for name in ("impressions", "clicks", "conversions", "spend_cents"):
        if getattr(record, name) < 0:
            problems.append(f"negative {name}")
    if record.clicks > record.impressions:
        problems.append("clicks>impressions")
    if record.conversions > record.clicks:
        problems.append("conversions>clicks")
    if record.spend_cents > 0 and record.clicks == 0:
        problems.append("spend without clicks")
    return problems


# -- campaigns ----------------------------------------------------------------


@dataclass(frozen=True)
class CampaignConfig:
    """An advertiser campaign as configured on the platform.

    ``daily_budget_cents`` is the average daily budget. A campaign that only
    runs in one of two alternating cycles spends twice that on each active day
    (see ``deliverysim``).
    """

    campaign_id: str
    bidding_strategy: BiddingStrategy
    daily_budget_cents: Cents
    targeting: frozenset[GroupLabel] = field(default_factory=lambda: frozenset(LABELS))
    target_cpa_cents: Cents | None = None
    cycle: Cycle | None = None
    label: str = ""
    creative_ref: str = ""

    def __post_init__(self):
        object.__setattr__(self, "targeting", frozenset(GroupLabel(t) for t in self.targeting))
        if not self.targeting:
            raise InvalidArgumentError(f"{self.campaign_id}: targeting is empty")
        Targeting.from_labels(self.targeting)  # rejects {unknown} and odd sets
        if self.daily_budget_cents < 0:
            raise InvalidArgumentError(f"{self.campaign_id}: negative daily budget")
        has_cpa = self.target_cpa_cents is not None
        if has_cpa != (self.bidding_strategy is BiddingStrategy.MAX_CONVERSIONS):
            raise InvalidArgumentError(
                f"{self.campaign_id}: target CPA must be set iff strategy is max_conversions"
            )
        if has_cpa and self.target_cpa_cents <= 0:
            raise InvalidArgumentError(f"{self.campaign_id}: target CPA must be positive")

    @property
    def targeting_kind(self) -> Targeting:
        return Targeting.from_labels(self.targeting)


# -- estimates ----------------------------------------------------------------


@dataclass(frozen=True)
class RateMetrics:
    ctr: float
    cvr: float
    cpm: float
    impressions: int = 0


@dataclass(frozen=True)
class SkewEstimate:
    point: float
    ci_low: float
    ci_high: float
    level: float
    n_focal: int
    n_total: int
    metric: Metric = Metric.IMPRESSIONS
    focal: GroupLabel = GroupLabel.MALE
