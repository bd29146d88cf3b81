"""Budget split interventions: campaign sets, cycle schedules, budget allocation
and CPM-driven rebalancing toward a desired male/female delivery ratio."""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from fractions import Fraction

from adskew import deliverysim, metrics
from adskew.core import (
    LABELS,
    CampaignConfig,
    Cycle,
    EngagementRecord,
    GroupLabel,
    InsufficientDataError,
    InvalidArgumentError,
    Targeting,
)

log = logging.getLogger(__name__)

SIDES = (GroupLabel.MALE, GroupLabel.FEMALE)


class SplitVariant(str, enum.Enum):
    ALL_USERS = "all_users"
    DIRECT_SPLIT = "direct_split"
    UNKNOWN_AWARE_SPLIT = "unknown_aware_split"


class Phase(str, enum.Enum):
    A_FIRST = "a_first"
    B_FIRST = "b_first"


@dataclass(frozen=True)
class DesiredRatio:
    male_share: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.male_share <= 1.0:
            raise InvalidArgumentError(f"male_share must be in [0, 1], got {self.male_share}")

    def share(self, side: GroupLabel) -> Fraction:
        male = Fraction(self.male_share)
        return male if side is GroupLabel.MALE else 1 - male


@dataclass(frozen=True)
class CycleSchedule:
    """Alternating A/B assignment over ``horizon`` slots.

    Slot ``s`` is in cycle A when ``s // period`` is even (``A_FIRST``) or odd
    (``B_FIRST``). A slot is a day unless ``slots_per_day`` is 2.
    """

    period: int
    horizon: int
    phase: Phase = Phase.A_FIRST
    slots_per_day: int = 1

    def __post_init__(self):
        if self.period < 1 or self.horizon < 1:
            raise InvalidArgumentError("period and horizon must be >= 1")
        if self.slots_per_day not in (1, 2):
            raise InvalidArgumentError("slots_per_day must be 1 or 2")
        object.__setattr__(self, "phase", Phase(self.phase))

    def cycle_of(self, slot: int) -> Cycle:
        even = (slot // self.period) % 2 == 0
        if self.phase is Phase.B_FIRST:
            even = not even
        return Cycle.A if even else Cycle.B

    def assignment(self) -> list[Cycle]:
        return [self.cycle_of(s) for s in range(self.horizon)]

    def slot_counts(self) -> dict[Cycle, int]:
        full, rem = divmod(self.horizon, 2 * self.period)
        first = full * self.period + min(rem, self.period)
        second = self.horizon - first
        lead, trail = (Cycle.A, Cycle.B) if self.phase is Phase.A_FIRST else (Cycle.B, Cycle.A)
        return {lead: first, trail: second}

    @property
    def balanced(self) -> bool:
        counts = self.slot_counts()
        return counts[Cycle.A] == counts[Cycle.B]


def make_schedule(period: int, horizon: int, phase: Phase | str = Phase.A_FIRST, slots_per_day: int = 1) -> CycleSchedule:
    schedule = CycleSchedule(period, horizon, Phase(phase), slots_per_day)
    if not schedule.balanced:
        counts = schedule.slot_counts()
        log.warning("uneven cycle slots: A=%d, B=%d", counts[Cycle.A], counts[Cycle.B])
    return schedule


@dataclass(frozen=True)
class SplitPlan:
    variant: SplitVariant
    campaigns: tuple[CampaignConfig, ...]
    budgets: Mapping[str, int]
    schedule: CycleSchedule | None = None
    ratio: DesiredRatio = DesiredRatio()
    original_id: str = ""
    basis_cpm: Mapping[GroupLabel, Fraction] | None = field(default=None, compare=False)

    @property
    def total_cents(self) -> int:
        return sum(self.budgets.values())

    def side_of(self, campaign_id: str) -> GroupLabel | None:
        for c in self.campaigns:
            if c.campaign_id == campaign_id:
                return c.targeting_kind.gendered_side
        raise KeyError(campaign_id)

    def side_budgets(self) -> dict[GroupLabel, int]:
        out = {side: 0 for side in SIDES}
        for c in self.campaigns:
            side = c.targeting_kind.gendered_side
            if side is not None:
                out[side] += self.budgets[c.campaign_id]
        return out


def _as_fraction(value) -> Fraction:
    return value if isinstance(value, Fraction) else Fraction(value)


def allocate_budgets(
    total_cents: int,
    ratio: DesiredRatio,
    cpm_by_side: Mapping[GroupLabel, float | Fraction] | None = None,
) -> dict[GroupLabel, int]:
    """Split ``total_cents`` between the male and female sides.

    Without CPMs each side gets its desired share. With CPMs the budget is
    proportional to share * CPM, so purchased impressions follow the desired
    ratio. Arithmetic is exact; the female side is floored to the cent and the
    male side takes the remainder.
    """
    if total_cents < 0:
        raise InvalidArgumentError("total budget must be >= 0")
    weights = {side: ratio.share(side) for side in SIDES}
    if cpm_by_side is not None:
        for side in SIDES:
            cpm = _as_fraction(cpm_by_side[side])
            if cpm <= 0:
                raise InvalidArgumentError(f"CPM for the {side.value} side must be positive")
            weights[side] *= cpm
    norm = sum(weights.values())
    female = math.floor(total_cents * weights[GroupLabel.FEMALE] / norm)
    return {GroupLabel.MALE: total_cents - female, GroupLabel.FEMALE: female}


# (cycle, targeting) per side; the first entry of each side takes odd-cent remainders
_UNKNOWN_AWARE_LAYOUT = {
    GroupLabel.MALE: ((Cycle.A, Targeting.MALE_UNKNOWN), (Cycle.B, Targeting.MALE)),
    GroupLabel.FEMALE: ((Cycle.A, Targeting.FEMALE), (Cycle.B, Targeting.FEMALE_UNKNOWN)),
}


def _child(original: CampaignConfig, suffix: str, targeting: Targeting, budget: int, cycle: Cycle | None) -> CampaignConfig:
    return dataclasses.replace(
        original,
        campaign_id=f"{original.campaign_id}:{suffix}",
        daily_budget_cents=budget,
        targeting=targeting.labels,
        cycle=cycle,
        label=f"{original.label or original.campaign_id} [{suffix}]",
    )


def _assemble(
    original_id: str,
    template: CampaignConfig,
    variant: SplitVariant,
    side_budgets: Mapping[GroupLabel, int],
    ratio: DesiredRatio,
    schedule: CycleSchedule | None,
    basis_cpm,
) -> SplitPlan:
    campaigns = []
    if variant is SplitVariant.DIRECT_SPLIT:
        for side in SIDES:
            targeting = Targeting.MALE if side is GroupLabel.MALE else Targeting.FEMALE
            campaigns.append(_child(template, targeting.value, targeting, side_budgets[side], None))
    else:
        for side in SIDES:
            (c1, t1), (c2, t2) = _UNKNOWN_AWARE_LAYOUT[side]
            half = side_budgets[side] // 2
            rest = side_budgets[side] - half
            campaigns.append(_child(template, f"{c1.value}:{t1.value}", t1, rest, c1))
            campaigns.append(_child(template, f"{c2.value}:{t2.value}", t2, half, c2))
    budgets = {c.campaign_id: c.daily_budget_cents for c in campaigns}
    return SplitPlan(variant, tuple(campaigns), budgets, schedule, ratio, original_id, basis_cpm)


def build_split(
    original: CampaignConfig,
    variant: SplitVariant | str,
    ratio: DesiredRatio = DesiredRatio(),
    *,
    supports_exclusion: bool = True,
    schedule: CycleSchedule | None = None,
    cpm_by_side: Mapping[GroupLabel, float] | None = None,
) -> SplitPlan:
    """Replace an all-users campaign with a budget split.

    ``ALL_USERS`` returns the original unchanged. ``DIRECT_SPLIT`` makes one
    male and one female campaign running side by side. ``UNKNOWN_AWARE_SPLIT``
    makes four campaigns in two alternating cycles: A runs {female} and
    {male, unknown}, B runs {male} and {female, unknown}. Unknown users can
    only be reached by excluding the other binary label, so the platform must
    support exclusion targeting.
    """
    variant = SplitVariant(variant)
    if original.targeting != frozenset(LABELS) or original.cycle is not None:
        raise InvalidArgumentError("the original campaign must be always-on and target all users")
    if variant is SplitVariant.ALL_USERS:
        return SplitPlan(variant, (original,), {original.campaign_id: original.daily_budget_cents}, None, ratio, original.campaign_id)
    if variant is SplitVariant.UNKNOWN_AWARE_SPLIT:
        if not supports_exclusion:
            raise InvalidArgumentError("unknown-aware split needs exclusion targeting, which this platform lacks")
        if schedule is None:
            schedule = make_schedule(1, 42)
    else:
        schedule = None
    sides = allocate_budgets(original.daily_budget_cents, ratio, cpm_by_side)
    basis = {s: _as_fraction(cpm_by_side[s]) for s in SIDES} if cpm_by_side is not None else None
    return _assemble(original.campaign_id, original, variant, sides, ratio, schedule, basis)


def side_cpm(plan: SplitPlan, ledger: Iterable[EngagementRecord]) -> dict[GroupLabel, Fraction]:
    """Exact per-side CPM (dollars per 1,000 impressions) from a ledger.

    Unknown-label engagement counts toward the side of the campaign that
    bought it.
    """
    sides = {c.campaign_id: c.targeting_kind.gendered_side for c in plan.campaigns}
    impressions = {side: 0 for side in SIDES}
    spend = {side: 0 for side in SIDES}
    for r in ledger:
        side = sides.get(r.campaign_id)
        if side is None:
            continue
        impressions[side] += r.impressions
        spend[side] += r.spend_cents
    out = {}
    for side in SIDES:
        if impressions[side] == 0:
            raise InsufficientDataError(f"no impressions on the {side.value} side")
        if spend[side] == 0:
            raise InsufficientDataError(f"no spend on the {side.value} side")
        out[side] = Fraction(10 * spend[side], impressions[side])
    return out


def rebalance(plan: SplitPlan, ledger: Iterable[EngagementRecord], ratio: DesiredRatio | None = None) -> SplitPlan:
    """Re-split the same total using per-side CPMs observed in ``ledger``."""
    if plan.variant is SplitVariant.ALL_USERS:
        raise InvalidArgumentError("rebalance needs a split plan")
    ratio = ratio or plan.ratio
    cpm = side_cpm(plan, ledger)
    sides = allocate_budgets(plan.total_cents, ratio, cpm)
    template = dataclasses.replace(plan.campaigns[0], campaign_id=plan.original_id, label="")
    return _assemble(plan.original_id, template, plan.variant, sides, ratio, plan.schedule, cpm)


def run_plan(plan: SplitPlan, market, days: int, seed: int = 0, backend: str | None = None) -> list[EngagementRecord]:
    schedule = plan.schedule
    if schedule is not None and schedule.horizon < days * schedule.slots_per_day:
        schedule = dataclasses.replace(schedule, horizon=days * schedule.slots_per_day)
    return deliverysim.run_horizon(list(plan.campaigns), market, days, seed, schedule, backend=backend)


@dataclass(frozen=True)
class RebalanceStep:
    iteration: int
    budgets: Mapping[str, int]
    side_budgets: Mapping[GroupLabel, int]
    cpm: Mapping[GroupLabel, Fraction]
    skew: float


def iterate_rebalance(
    plan: SplitPlan,
    market,
    days: int,
    iterations: int = 10,
    seed: int = 0,
    vary_seed: bool = False,
    backend: str | None = None,
) -> list[RebalanceStep]:
    """Alternate run -> rebalance. Step ``i`` records the plan that was run,
    the CPMs it produced, and its delivered impression skew.

    By default every run reuses ``seed`` (common random numbers), so in a
    stationary market the sequence is a deterministic fixed-point iteration.
    """
    steps = []
    for i in range(iterations):
        ledger = run_plan(plan, market, days, seed + i if vary_seed else seed, backend)
        cpm = side_cpm(plan, ledger)
        delivered = metrics.skew(metrics.counts_by_label(ledger))
        steps.append(RebalanceStep(i, dict(plan.budgets), plan.side_budgets(), cpm, delivered))
        plan = rebalance(plan, ledger)
    return steps
