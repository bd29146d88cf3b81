import datetime as dt
import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adskew import metrics
from adskew.core import (
    EngagementRecord,
    GroupLabel,
    InvalidArgumentError,
    Metric,
    UndefinedRateError,
    UndefinedSkewError,
)
from oracles import agresti_coull_mp

M, F, U = GroupLabel.MALE, GroupLabel.FEMALE, GroupLabel.UNKNOWN
START = dt.date(2025, 1, 6)


def rec(day, label, impr, clicks=0, conv=0, spend=0, cid="c"):
    return EngagementRecord(cid, START + dt.timedelta(days=day), label, impr, clicks, conv, spend)


# -- skew ---------------------------------------------------------------------


def test_skew_ignores_unknown():
    assert metrics.skew({M: 563, F: 437, U: 900}) == 0.563


def test_skew_symmetric_and_empty_focal():
    assert metrics.skew({M: 500, F: 500}) == 0.5
    assert metrics.skew({M: 0, F: 100}) == 0.0


def test_skew_undefined():
    with pytest.raises(UndefinedSkewError):
        metrics.skew({M: 0, F: 0, U: 10})


def test_skew_rejects_unknown_focal():
    with pytest.raises(InvalidArgumentError):
        metrics.skew({M: 1, F: 1}, focal=U)


@given(st.integers(0, 10**9), st.integers(0, 10**9))
def test_skew_male_plus_female_is_one(m, f):
    if m + f == 0:
        return
    assert metrics.skew({M: m, F: f}, M) + metrics.skew({M: m, F: f}, F) == pytest.approx(1.0, abs=1e-15)


# -- Agresti-Coull ------------------------------------------------------------


def test_z_quantile_99():
    assert metrics.z_quantile(0.99) == pytest.approx(2.5758293035489008, abs=1e-12)


@pytest.mark.parametrize(
    "x, n, low, high",
    [
        # frozen from a 50-digit evaluation in tests/oracles.py
        (50, 100, 0.37527962504483982, 0.62472037495516018),
        (550, 1000, 0.50927824182700109, 0.59006264168265822),
        (0, 10, 0.0, 0.45177484062335089),
    ],
)
def test_agresti_coull_frozen(x, n, low, high):
    lo, hi = metrics.agresti_coull_ci(x, n, 0.99)
    assert lo == pytest.approx(low, abs=1e-12)
    assert hi == pytest.approx(high, abs=1e-12)


def test_agresti_coull_symmetry_at_half():
    lo, hi = metrics.agresti_coull_ci(50, 100, 0.99)
    assert lo + hi == pytest.approx(1.0, abs=1e-15)


def test_agresti_coull_random_against_oracle():
    rnd = random.Random(11)
    for _ in range(200):
        n = rnd.randint(1, 10**6)
        x = rnd.randint(0, n)
        level = rnd.uniform(0.5, 0.999)
        lo, hi = metrics.agresti_coull_ci(x, n, level)
        olo, ohi = agresti_coull_mp(x, n, level)
        assert abs(lo - olo) < 1e-9 and abs(hi - ohi) < 1e-9


@pytest.mark.parametrize("args", [(0, 0, 0.99), (5, 4, 0.99), (-1, 4, 0.99), (1, 4, 1.0), (1, 4, 0.0)])
def test_agresti_coull_invalid(args):
    with pytest.raises(InvalidArgumentError):
        metrics.agresti_coull_ci(*args)


def test_width_scales_inverse_sqrt():
    lo1, hi1 = metrics.agresti_coull_ci(500, 1000, 0.99)
    lo2, hi2 = metrics.agresti_coull_ci(50_000, 100_000, 0.99)
    ratio = (hi1 - lo1) / (hi2 - lo2)
    assert abs(ratio / 10.0 - 1.0) < 0.10


@given(st.floats(0.0, 1.0), st.integers(1, 5000), st.sampled_from([0.9, 0.95, 0.99]))
def test_width_non_increasing_in_trials(frac, n, level):
    x1, x2 = round(frac * n), round(frac * 4 * n)
    lo1, hi1 = metrics.agresti_coull_ci(x1, n, level)
    lo2, hi2 = metrics.agresti_coull_ci(x2, 4 * n, level)
    assert hi2 - lo2 <= hi1 - lo1 + 1e-12


@given(st.integers(1, 10**7).flatmap(lambda n: st.tuples(st.integers(0, n), st.just(n))))
def test_estimate_contains_point(xn):
    x, n = xn
    e = metrics.skew_estimate(x, n)
    assert 0.0 <= e.ci_low <= e.point <= e.ci_high <= 1.0
    assert e.point == x / n


# -- parity -------------------------------------------------------------------


def test_parity_on_published_intervals():
    assert metrics.parity_test((0.495, 0.568)) is True
    assert metrics.parity_test((0.550, 0.576)) is False
    assert metrics.parity_test((0.5, 0.5)) is True


@given(st.floats(0, 1), st.floats(0, 1))
def test_parity_reflection_invariant(a, b):
    lo, hi = min(a, b), max(a, b)
    assert metrics.parity_test((lo, hi)) == metrics.parity_test((1 - hi, 1 - lo))


def test_parity_on_estimate():
    e = metrics.skew_estimate(563, 1000)
    assert metrics.parity_test(e) is False


# -- rates --------------------------------------------------------------------


def test_rates_definitions():
    r = metrics.rates([rec(0, M, 1000, spend=500, clicks=1)])
    assert r.cpm == pytest.approx(5.0)
    assert metrics.rates([rec(0, M, 400, clicks=20)]).ctr == 0.05
    assert metrics.rates([rec(0, M, 100)]).cvr == 0.0


def test_rates_by_label():
    rows = [rec(0, M, 100, 5, 1, 50), rec(0, F, 200, 4, 2, 100), rec(1, M, 100, 5, 1, 50)]
    out = metrics.rates(rows, by_label=True)
    assert set(out) == {M, F}
    assert out[M].impressions == 200 and out[M].ctr == 0.05
    assert out[F].cvr == 0.01


def test_rates_zero_impressions():
    with pytest.raises(UndefinedRateError):
        metrics.rates([rec(0, M, 0)])
    with pytest.raises(UndefinedRateError, match="female"):
        metrics.rates([rec(0, M, 10), rec(0, F, 0)], by_label=True)


# -- series -------------------------------------------------------------------


def test_weekly_series_counts_windows():
    rows = [rec(d, lab, 10) for d in range(14) for lab in (M, F)]
    series = metrics.skew_series(rows, "weekly")
    assert len(series) == 2
    assert all(not w.partial for w in series)
    assert series[1].start == START + dt.timedelta(days=7)


def test_whole_window_equals_skew():
    rows = [rec(0, M, 563), rec(3, F, 437), rec(5, U, 999)]
    (w,) = metrics.skew_series(rows, "whole")
    assert w.estimate.point == 0.563
    assert w.n_unknown == 999


def test_undefined_week_marked():
    rows = [rec(0, M, 10), rec(0, F, 10), rec(8, U, 5), rec(15, M, 3)]
    series = metrics.skew_series(rows, "weekly")
    assert [w.defined for w in series] == [True, False, True]
    assert series[2].partial


def test_daily_series_fills_gaps():
    rows = [rec(0, M, 1), rec(3, F, 1)]
    series = metrics.skew_series(rows, "daily")
    assert len(series) == 4
    assert [w.defined for w in series] == [True, False, False, True]


def test_series_metric_spend():
    rows = [rec(0, M, 10, 2, 0, 300), rec(0, F, 10, 1, 0, 100)]
    (w,) = metrics.skew_series(rows, "whole", Metric.SPEND)
    assert w.estimate.point == 0.75 and w.estimate.n_total == 400


def test_series_needs_records():
    with pytest.raises(InvalidArgumentError):
        metrics.skew_series([], "weekly")


@given(st.lists(st.tuples(st.integers(0, 30), st.sampled_from([M, F, U]), st.integers(0, 1000)), min_size=1, max_size=40), st.randoms())
def test_series_order_independent(rows, rnd):
    records = [rec(d, lab, n) for d, lab, n in rows]
    shuffled = records[:]
    rnd.shuffle(shuffled)
    assert metrics.skew_series(records, "weekly") == metrics.skew_series(shuffled, "weekly")
    counts = metrics.counts_by_label(records)
    (whole,) = metrics.skew_series(records, "whole")
    if counts[M] + counts[F] > 0:
        assert whole.estimate.point == metrics.skew(counts)
    else:
        assert not whole.defined


# -- reach delta ----------------------------------------------------------------


@pytest.mark.parametrize(
    "before, after, n, expected",
    [(0.55, 0.52, 100_000, 3000), (0.5, 0.5, 10_000, 0), (0.48, 0.50, 10_000, -200)],
)
def test_scaled_reach_delta(before, after, n, expected):
    assert metrics.scaled_reach_delta(before, after, n) == expected


def test_scaled_reach_delta_invalid():
    with pytest.raises(InvalidArgumentError):
        metrics.scaled_reach_delta(0.5, 0.4, 0)
    with pytest.raises(InvalidArgumentError):
        metrics.scaled_reach_delta(1.5, 0.4, 10)


# -- CPM aggregation ------------------------------------------------------------


def test_cpm_table_and_weekly_mean():
    rows = [rec(0, M, 1000, 10, 0, 400, "a"), rec(0, F, 1000, 10, 0, 600, "a"), rec(7, M, 1000, 10, 0, 200, "b")]
    table = metrics.cpm_table(rows, key=lambda r: r.campaign_id)
    assert table["a"][F].cpm == pytest.approx(6.0)
    assert set(table["b"]) == {M}
    mean, se, weeks = metrics.weekly_mean_cpm(rows)
    assert weeks == 2
    assert mean == pytest.approx((5.0 + 2.0) / 2)
    assert se == pytest.approx(np.std([5.0, 2.0], ddof=1) / math.sqrt(2))
