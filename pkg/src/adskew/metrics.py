"""Skew, Agresti-Coull intervals, parity verdicts, engagement rates, and
windowed aggregation of an engagement ledger."""

from __future__ import annotations

import datetime as dt
import enum
import math
from collections import defaultdict
from collections.abc import Callable, Hashable, Iterable, Mapping
from dataclasses import dataclass
from statistics import NormalDist

from adskew.core import (
    LABELS,
    EngagementRecord,
    GroupLabel,
    InvalidArgumentError,
    Metric,
    RateMetrics,
    SkewEstimate,
    UndefinedRateError,
    UndefinedSkewError,
)

DEFAULT_LEVEL = 0.99


class Granularity(str, enum.Enum):
    DAILY = "daily"
    WEEKLY = "weekly"
    WHOLE = "whole"


def z_quantile(level: float) -> float:
    """Two-sided standard normal quantile for a confidence level.

    ``statistics.NormalDist.inv_cdf`` implements Wichura's AS241 rational
    approximation (relative error ~1e-16), which is deterministic across
    platforms.
    """
    if not 0.0 < level < 1.0:
        raise InvalidArgumentError(f"confidence level must be in (0, 1), got {level}")
    return NormalDist().inv_cdf(0.5 + level / 2.0)


def _check_focal(focal: GroupLabel) -> GroupLabel:
    focal = GroupLabel(focal)
    if focal is GroupLabel.UNKNOWN:
        raise InvalidArgumentError("skew is defined for male or female focal groups only")
    return focal


def skew(counts_by_label: Mapping[GroupLabel, float], focal: GroupLabel = GroupLabel.MALE) -> float:
    """Focal share of male + female counts. Unknown counts are ignored."""
    focal = _check_focal(focal)
    n_male = counts_by_label.get(GroupLabel.MALE, 0)
    n_female = counts_by_label.get(GroupLabel.FEMALE, 0)
    total = n_male + n_female
    if total == 0:
        raise UndefinedSkewError("male + female count is zero")
    return (n_male if focal is GroupLabel.MALE else n_female) / total


def agresti_coull_ci(successes: int, trials: int, level: float = DEFAULT_LEVEL) -> tuple[float, float]:
    """Agresti-Coull interval for a binomial proportion, clamped to [0, 1].

    Adds z^2/2 pseudo-successes and z^2/2 pseudo-failures, then applies the
    Wald formula to the adjusted proportion.
    """
    if trials < 1:
        raise InvalidArgumentError("trials must be >= 1")
    if not 0 <= successes <= trials:
        raise InvalidArgumentError(f"successes must be in [0, trials], got {successes}/{trials}")
    z = z_quantile(level)
    z2 = z * z
    n_adj = trials + z2
    p_adj = (successes + z2 / 2.0) / n_adj
    half = z * math.sqrt(p_adj * (1.0 - p_adj) / n_adj)
    return max(0.0, p_adj - half), min(1.0, p_adj + half)


def skew_estimate(
    n_focal: int,
    n_total: int,
    level: float = DEFAULT_LEVEL,
    metric: Metric = Metric.IMPRESSIONS,
    focal: GroupLabel = GroupLabel.MALE,
) -> SkewEstimate:
    if n_total <= 0:
        raise UndefinedSkewError("male + female count is zero")
    low, high = agresti_coull_ci(n_focal, n_total, level)
    point = n_focal / n_total
    # AC intervals always cover the raw proportion; guard the last ulp anyway
    return SkewEstimate(
        point=point,
        ci_low=min(low, point),
        ci_high=max(high, point),
        level=level,
        n_focal=int(n_focal),
        n_total=int(n_total),
        metric=Metric(metric),
        focal=_check_focal(focal),
    )


def estimate_from_counts(
    counts_by_label: Mapping[GroupLabel, int],
    focal: GroupLabel = GroupLabel.MALE,
    level: float = DEFAULT_LEVEL,
    metric: Metric = Metric.IMPRESSIONS,
) -> SkewEstimate:
    focal = _check_focal(focal)
    n_focal = int(counts_by_label.get(focal, 0))
    n_total = n_focal + int(counts_by_label.get(focal.complement, 0))
    return skew_estimate(n_focal, n_total, level, metric, focal)


def parity_test(estimate: SkewEstimate | tuple[float, float], target: float = 0.5) -> bool:
    """True iff the interval contains ``target`` (bounds inclusive)."""
    if isinstance(estimate, SkewEstimate):
        low, high = estimate.ci_low, estimate.ci_high
    else:
        low, high = estimate
    return low <= target <= high


def scaled_reach_delta(skew_before: float, skew_after: float, n_mf: int) -> int:
    """Impressions moved to the complement group when the focal share drops.

    Positive values are additional complement-group (e.g. female-labeled)
    impressions at a male + female reach of ``n_mf``; negative values mean
    the focal group gained.
    """
    if n_mf <= 0:
        raise InvalidArgumentError("n_mf must be positive")
    for value in (skew_before, skew_after):
        if not 0.0 <= value <= 1.0:
            raise InvalidArgumentError(f"skew must be in [0, 1], got {value}")
    raw = (skew_before - skew_after) * n_mf
    return int(math.copysign(math.floor(abs(raw) + 0.5), raw))


# -- ledger aggregation ---------------------------------------------------------


def counts_by_label(records: Iterable[EngagementRecord], metric: Metric = Metric.IMPRESSIONS) -> dict[GroupLabel, int]:
    totals = {label: 0 for label in LABELS}
    for record in records:
        totals[record.label] += record.count(metric)
    return totals


def _rate(impressions: int, clicks: int, conversions: int, spend_cents: int) -> RateMetrics:
    if impressions <= 0:
        raise UndefinedRateError("rates need at least one impression")
    return RateMetrics(
        ctr=clicks / impressions,
        cvr=conversions / impressions,
        cpm=1000.0 * (spend_cents / 100.0) / impressions,
        impressions=impressions,
    )


def rates(records: Iterable[EngagementRecord], by_label: bool = False):
    """CTR, CVR (conversions per impression) and CPM.

    With ``by_label`` returns a dict keyed by every label that appears in
    ``records``; any such label with zero impressions raises
    ``UndefinedRateError``.
    """
    sums: dict[GroupLabel | None, list[int]] = defaultdict(lambda: [0, 0, 0, 0])
    for record in records:
        key = record.label if by_label else None
        acc = sums[key]
        acc[0] += record.impressions
        acc[1] += record.clicks
        acc[2] += record.conversions
        acc[3] += record.spend_cents
    if not by_label:
        return _rate(*sums[None])
    out = {}
    for label in LABELS:
        if label in sums:
            try:
                out[label] = _rate(*sums[label])
            except UndefinedRateError:
                raise UndefinedRateError(f"no impressions for label {label.value}") from None
    return out


@dataclass(frozen=True)
class WindowSkew:
    """Skew over one aggregation window. ``estimate`` is None when undefined."""

    index: int
    start: dt.date
    end: dt.date
    estimate: SkewEstimate | None
    partial: bool = False
    n_unknown: int = 0

    @property
    def defined(self) -> bool:
        return self.estimate is not None


def _window_of(granularity: Granularity, origin: dt.date) -> Callable[[dt.date], int]:
    if granularity is Granularity.DAILY:
        return lambda d: (d - origin).days
    if granularity is Granularity.WEEKLY:
        return lambda d: (d - origin).days // 7
    return lambda d: 0


def skew_series(
    records: Iterable[EngagementRecord],
    window: Granularity | str = Granularity.WEEKLY,
    metric: Metric | str = Metric.IMPRESSIONS,
    focal: GroupLabel | str = GroupLabel.MALE,
    level: float = DEFAULT_LEVEL,
) -> list[WindowSkew]:
    """One skew estimate per window, contiguous from the first record date.

    Weekly windows are consecutive 7-day blocks anchored at the first date; a
    trailing block shorter than 7 days is emitted with ``partial=True``.
    Windows whose male + female count is zero carry ``estimate=None``.
    """
    records = list(records)
    if not records:
        raise InvalidArgumentError("skew_series needs at least one record")
    window, metric, focal = Granularity(window), Metric(metric), _check_focal(focal)
    first = min(r.date for r in records)
    last = max(r.date for r in records)
    which = _window_of(window, first)
    n_windows = which(last) + 1
    sums = [{label: 0 for label in LABELS} for _ in range(n_windows)]
    for record in records:
        sums[which(record.date)][record.label] += record.count(metric)

    out = []
    for i, counts in enumerate(sums):
        if window is Granularity.DAILY:
            start = end = first + dt.timedelta(days=i)
            partial = False
        elif window is Granularity.WEEKLY:
            start = first + dt.timedelta(days=7 * i)
            end = min(start + dt.timedelta(days=6), last)
            partial = (end - start).days < 6
        else:
            start, end, partial = first, last, False
        n_focal = counts[focal]
        n_total = n_focal + counts[focal.complement]
        estimate = skew_estimate(n_focal, n_total, level, metric, focal) if n_total > 0 else None
        out.append(WindowSkew(i, start, end, estimate, partial, counts[GroupLabel.UNKNOWN]))
    return out


def cpm_table(
    records: Iterable[EngagementRecord],
    key: Callable[[EngagementRecord], Hashable],
) -> dict[Hashable, dict[GroupLabel, RateMetrics]]:
    """Pooled per-label rates for each group defined by ``key``.

    Labels with no impressions in a group are omitted for that group.
    """
    groups: dict[Hashable, list[EngagementRecord]] = defaultdict(list)
    for record in records:
        groups[key(record)].append(record)
    table = {}
    for group, rows in groups.items():
        per_label = {}
        for label in LABELS:
            subset = [r for r in rows if r.label is label]
            if subset and sum(r.impressions for r in subset) > 0:
                per_label[label] = rates(subset)
        table[group] = per_label
    return table


def weekly_mean_cpm(records: Iterable[EngagementRecord]) -> tuple[float, float, int]:
    """Mean of weekly CPMs with its standard error and the number of weeks.

    Weeks are anchored at the first record date; weeks without impressions
    are skipped.
    """
    records = list(records)
    if not records:
        raise UndefinedRateError("no records")
    first = min(r.date for r in records)
    weeks: dict[int, list[int]] = defaultdict(lambda: [0, 0])
    for r in records:
        acc = weeks[(r.date - first).days // 7]
        acc[0] += r.impressions
        acc[1] += r.spend_cents
    values = [10.0 * spend / impr for impr, spend in weeks.values() if impr > 0]
    if not values:
        raise UndefinedRateError("no impressions")
    mean = sum(values) / len(values)
    if len(values) < 2:
        return mean, float("nan"), len(values)
    var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return mean, math.sqrt(var / len(values)), len(values)
