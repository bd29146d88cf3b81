"""``adskew`` command line: audit, simulate, montecarlo, plan, lint.

Exit codes: 0 success, 1 validation failure, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import datetime as dt
import logging
import sys
from collections import defaultdict
from fractions import Fraction
from pathlib import Path

from adskew import __version__, deliverysim, intervention, io, metrics, unknownsim
from adskew.config import ConfigError, ScenarioConfig, lint_config, load_config, parse_config
from adskew.core import (
    AdSkewError,
    BiddingStrategy,
    CampaignConfig,
    GroupLabel,
    InvalidArgumentError,
    Metric,
    format_usd,
    parse_usd,
)

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2

SPEND_CI_NOTE = (
    "spend intervals treat each cent as an independent trial; they are a heuristic, "
    "not a calibrated interval"
)

log = logging.getLogger("adskew")


def _common(parser: argparse.ArgumentParser, *names: str) -> None:
    if "input" in names:
        parser.add_argument("--input", help="canonical ledger CSV")
    if "config" in names:
        parser.add_argument("--config", help="scenario YAML file")
    if "seed" in names:
        parser.add_argument("--seed", type=int, help="base seed (overrides the config)")
    if "out" in names:
        parser.add_argument("--out", help="output directory")
    if "level" in names:
        parser.add_argument("--level", type=float, default=None, help="confidence level (default 0.99)")
    if "draws" in names:
        parser.add_argument("--draws", type=int, default=None, help="Monte Carlo draws (default 1000)")
    if "window" in names:
        parser.add_argument("--window", choices=[g.value for g in metrics.Granularity], default=None)


def _load(path: str | None) -> ScenarioConfig:
    return load_config(path) if path else parse_config({})


def _out_dir(args, cfg: ScenarioConfig | None = None) -> Path | None:
    path = args.out if args.out else None
    if path is None:
        return None
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _estimate_dict(e) -> dict:
    return {
        "point": e.point,
        "ci_low": e.ci_low,
        "ci_high": e.ci_high,
        "level": e.level,
        "n_focal": e.n_focal,
        "n_total": e.n_total,
        "parity": metrics.parity_test(e),
    }


def _rates_dict(per_label) -> dict:
    return {
        label.value: {"impressions": m.impressions, "ctr": m.ctr, "cvr": m.cvr, "cpm": m.cpm}
        for label, m in per_label.items()
    }


def _group_level(record) -> str:
    return record.targeting.level.value


# -- audit --------------------------------------------------------------------


def audit_ledger(records, level: float, window: metrics.Granularity, focal: GroupLabel, baseline_skew: float | None = None):
    """Skew series, parity verdicts and rates for ``records``, overall and per
    targeting level. Returns (series, cpm table, summary body)."""
    groups = {"all": list(records)}
    by_level = defaultdict(list)
    for r in records:
        by_level[_group_level(r)].append(r)
    if len(by_level) > 1:
        groups.update(sorted(by_level.items()))

    series, table, body = {}, {}, {"groups": {}, "notes": [SPEND_CI_NOTE]}
    for name, rows in groups.items():
        entry = {}
        for metric in (Metric.IMPRESSIONS, Metric.SPEND):
            windows = metrics.skew_series(rows, window, metric, focal, level)
            series[f"{name}/{metric.value}"] = windows
            entry[metric.value] = {
                "windows": len(windows),
                "undefined_windows": sum(not w.defined for w in windows),
                "parity_verdicts": [None if w.estimate is None else metrics.parity_test(w.estimate) for w in windows],
            }
            whole = metrics.skew_series(rows, metrics.Granularity.WHOLE, metric, focal, level)[0]
            entry[metric.value]["whole"] = None if whole.estimate is None else _estimate_dict(whole.estimate)
        try:
            per_label = metrics.rates(rows, by_label=True)
            table[name] = per_label
            entry["rates"] = _rates_dict(per_label)
        except metrics.UndefinedRateError as exc:
            entry["rates"] = {"error": str(exc)}
        counts = metrics.counts_by_label(rows)
        n_mf = counts[GroupLabel.MALE] + counts[GroupLabel.FEMALE]
        if baseline_skew is not None and n_mf > 0:
            after = metrics.skew(counts, focal)
            entry["scaled_reach_delta"] = metrics.scaled_reach_delta(baseline_skew, after, n_mf)
        body["groups"][name] = entry
    return series, table, body


def cmd_audit(args) -> int:
    if not args.input:
        raise InvalidArgumentError("audit needs --input")
    cfg = _load(args.config)
    records, warnings = io.ingest_csv(args.input)
    for w in warnings:
        log.warning("%s", w)
    if not records:
        raise InvalidArgumentError("ledger has no rows")
    level = args.level if args.level is not None else cfg.audit.level
    window = metrics.Granularity(args.window or cfg.audit.window)
    focal = GroupLabel(args.focal or cfg.audit.focal)
    series, table, body = audit_ledger(records, level, window, focal, args.baseline_skew)
    body["input_warnings"] = [str(w) for w in warnings]
    body["window"] = window.value
    body["focal"] = focal.value

    for name, entry in body["groups"].items():
        whole = entry["impressions"]["whole"]
        if whole is None:
            print(f"{name}: impression skew undefined")
            continue
        verdict = "parity" if whole["parity"] else "skewed"
        print(f"{name}: {focal.value} share {whole['point']:.4f} [{whole['ci_low']:.4f}, {whole['ci_high']:.4f}] {verdict}")
    out = _out_dir(args)
    if out is not None:
        io.write_skew_series(out / "skew_series.csv", series)
        io.write_cpm_table(out / "cpm_table.csv", table)
        digest = cfg.digest() if args.config else None
        io.write_summary(out / "summary.json", io.summary_document("audit", body, None, digest))
    return EXIT_OK


# -- simulate -----------------------------------------------------------------


def run_scenario(cfg: ScenarioConfig, seed: int, backend: str | None = None) -> dict:
    """Run every configured variant for one seed; returns variant -> (plan, ledger)."""
    market = cfg.market.to_model()
    original_section = cfg.original_campaign()
    original = original_section.to_campaign()
    others = [c.to_campaign() for c in cfg.campaigns if c.campaign_id != original.campaign_id]
    ratio = intervention.DesiredRatio(cfg.intervention.male_share)
    days = cfg.simulation.days
    results = {}
    for variant in cfg.intervention.variants:
        plan = intervention.build_split(
            original,
            variant,
            ratio,
            supports_exclusion=cfg.platform.supports_exclusion,
            schedule=cfg.schedule() if variant is intervention.SplitVariant.UNKNOWN_AWARE_SPLIT else None,
        )
        if variant is not intervention.SplitVariant.ALL_USERS:
            for _ in range(cfg.intervention.rebalance_iterations):
                ledger = _run(plan, others, market, days, seed, backend)
                plan = intervention.rebalance(plan, [r for r in ledger if r.campaign_id in plan.budgets])
        results[variant] = (plan, _run(plan, others, market, days, seed, backend))
    return results


def _run(plan, others, market, days, seed, backend):
    schedule = plan.schedule
    if schedule is not None and schedule.horizon < days * schedule.slots_per_day:
        schedule = intervention.CycleSchedule(schedule.period, days * schedule.slots_per_day, schedule.phase, schedule.slots_per_day)
    return deliverysim.run_horizon(list(plan.campaigns) + others, market, days, seed, schedule, backend=backend)


def cmd_simulate(args) -> int:
    cfg = _load(args.config)
    seed = args.seed if args.seed is not None else cfg.simulation.seed
    level = args.level if args.level is not None else cfg.audit.level
    window = metrics.Granularity(args.window or cfg.audit.window)
    focal = GroupLabel(cfg.audit.focal)
    out = _out_dir(args)
    seeds = [seed + i for i in range(cfg.simulation.replications)]

    # warm-up days are simulated and kept in the ledgers but not scored
    warmup = cfg.simulation.warmup_days if cfg.simulation.days > cfg.simulation.warmup_days else 0
    first_scored = deliverysim.DEFAULT_START + dt.timedelta(days=warmup)

    pooled = defaultdict(list)
    per_seed = defaultdict(dict)
    series = {}
    plans = {}
    for s in seeds:
        for variant, (plan, full) in run_scenario(cfg, s).items():
            plans[variant] = plan
            if out is not None:
                io.write_ledger(out / f"ledger_{variant.value}_seed{s}.csv", full)
            ledger = [r for r in full if r.date >= first_scored]
            pooled[variant].extend(ledger)
            est = metrics.estimate_from_counts(metrics.counts_by_label(ledger), focal, level)
            per_seed[variant.value][str(s)] = _estimate_dict(est)
            for lvl, rows in _by_level(ledger).items():
                series[f"{variant.value}/{lvl}/seed{s}"] = metrics.skew_series(rows, window, Metric.IMPRESSIONS, focal, level)

    table = {}
    body = {"scenario": cfg.name, "seeds": seeds, "days": cfg.simulation.days, "warmup_days_discarded": warmup, "variants": {}, "notes": [SPEND_CI_NOTE]}
    for variant, ledger in pooled.items():
        levels = {}
        for lvl, rows in _by_level(ledger).items():
            per_label = metrics.rates(rows, by_label=True)
            table[f"{variant.value}/{lvl}"] = per_label
            levels[lvl] = {"cpm": metrics.rates(rows).cpm, "by_label": _rates_dict(per_label)}
        skews = [v["point"] for v in per_seed[variant.value].values()]
        mean = sum(skews) / len(skews)
        body["variants"][variant.value] = {
            "skew_by_seed": per_seed[variant.value],
            "mean_skew": mean,
            "budgets_usd": {k: format_usd(v) for k, v in plans[variant].budgets.items()},
            "levels": levels,
        }
        level_cpm = ", ".join(f"{k} CPM {v['cpm']:.2f}" for k, v in levels.items())
        print(f"{variant.value}: mean {focal.value} share {mean:.4f}; {level_cpm}")

    if out is not None:
        io.write_skew_series(out / "skew_series.csv", series)
        io.write_cpm_table(out / "cpm_table.csv", table)
        io.write_summary(out / "summary.json", io.summary_document("simulate", body, seed, cfg.digest()))
    return EXIT_OK


def _by_level(records) -> dict[str, list]:
    out = defaultdict(list)
    for r in records:
        out[_group_level(r)].append(r)
    return dict(sorted(out.items()))


# -- montecarlo ---------------------------------------------------------------


def cmd_montecarlo(args) -> int:
    cfg = _load(args.config)
    if args.counts:
        observed = unknownsim.ObservedCounts(*args.counts)
    elif args.input:
        records, warnings = io.ingest_csv(args.input)
        for w in warnings:
            log.warning("%s", w)
        c = metrics.counts_by_label(records)
        observed = unknownsim.ObservedCounts(c[GroupLabel.MALE], c[GroupLabel.FEMALE], c[GroupLabel.UNKNOWN])
    else:
        raise InvalidArgumentError("montecarlo needs --counts M F U or --input")
    draws = args.draws if args.draws is not None else cfg.montecarlo.draws
    seed = args.seed if args.seed is not None else cfg.montecarlo.seed
    priors = [unknownsim.PriorModel(k) for k in args.prior] if args.prior else cfg.montecarlo.prior_models()

    summaries, results, errors = {}, {}, {}
    for prior in priors:
        try:
            dist = unknownsim.simulate_unknown_skew(observed, prior, draws, seed)
        except InvalidArgumentError as exc:
            errors[prior.name] = str(exc)
            print(f"{prior.name}: error: {exc}")
            continue
        s = unknownsim.summarize_distribution(dist, cfg.montecarlo.bins)
        summaries[prior.name] = s
        results[prior.name] = s.as_dict()
        print(f"{prior.name}: mean {s.mean:.4f} mode {s.mode:.3f} [q01 {s.q01:.4f}, q99 {s.q99:.4f}]")

    known = observed.n_male + observed.n_female
    body = {
        "observed": {"male": observed.n_male, "female": observed.n_female, "unknown": observed.n_unknown},
        "draws": draws,
        "reference": {"known_only_skew": observed.n_male / known if known else None, "target": 0.5},
        "priors": results,
        "errors": errors,
    }
    out = _out_dir(args)
    if out is not None:
        io.write_histogram(out / "histogram.csv", summaries)
        io.write_summary(out / "summary.json", io.summary_document("montecarlo", body, seed, cfg.digest() if args.config else None))
    return EXIT_OK if results else EXIT_VALIDATION


# -- plan ---------------------------------------------------------------------


def cmd_plan(args) -> int:
    cfg = _load(args.config)
    if args.budget_usd is not None:
        strategy = BiddingStrategy(args.strategy)
        original = CampaignConfig(
            args.campaign_id,
            strategy,
            parse_usd(args.budget_usd),
            target_cpa_cents=parse_usd(args.target_cpa_usd) if args.target_cpa_usd else None,
        )
    else:
        original = cfg.original_campaign().to_campaign()
    ratio = intervention.DesiredRatio(args.male_share if args.male_share is not None else cfg.intervention.male_share)
    cpm = None
    if (args.cpm_male is None) != (args.cpm_female is None):
        raise InvalidArgumentError("give both --cpm-male and --cpm-female, or neither")
    if args.cpm_male is not None:
        cpm = {GroupLabel.MALE: Fraction(args.cpm_male), GroupLabel.FEMALE: Fraction(args.cpm_female)}
    supports_exclusion = cfg.platform.supports_exclusion and not args.no_exclusion
    variant = intervention.SplitVariant(args.variant)
    schedule = None
    if variant is intervention.SplitVariant.UNKNOWN_AWARE_SPLIT:
        schedule = intervention.make_schedule(args.period, args.horizon, args.phase, cfg.simulation.slots_per_day)
    plan = intervention.build_split(original, variant, ratio, supports_exclusion=supports_exclusion, schedule=schedule, cpm_by_side=cpm)

    rows = []
    print(f"{'campaign':34} {'targeting':15} {'cycle':5} {'daily budget':>12}")
    for c in plan.campaigns:
        cycle = c.cycle.value if c.cycle else "-"
        print(f"{c.campaign_id:34} {c.targeting_kind.value:15} {cycle:5} {format_usd(plan.budgets[c.campaign_id]):>12}")
        rows.append(
            {
                "campaign_id": c.campaign_id,
                "targeting": c.targeting_kind.value,
                "cycle": c.cycle.value if c.cycle else None,
                "daily_budget_usd": format_usd(plan.budgets[c.campaign_id]),
                "bidding_strategy": c.bidding_strategy.value,
                "target_cpa_usd": None if c.target_cpa_cents is None else format_usd(c.target_cpa_cents),
            }
        )
    print(f"{'total':55} {format_usd(plan.total_cents):>12}")
    body = {
        "variant": variant.value,
        "male_share": ratio.male_share,
        "total_usd": format_usd(plan.total_cents),
        "campaigns": rows,
    }
    if plan.schedule is not None:
        cycles = plan.schedule.assignment()
        unit = "day" if plan.schedule.slots_per_day == 1 else "half-day"
        print("schedule: " + " ".join(c.value for c in cycles))
        body["schedule"] = {"slot_unit": unit, "cycles": [c.value for c in cycles], "balanced": plan.schedule.balanced}
    out = _out_dir(args)
    if out is not None:
        io.write_summary(out / "plan.json", io.summary_document("plan", body, None, cfg.digest() if args.config else None))
    return EXIT_OK


# -- lint ---------------------------------------------------------------------


def cmd_lint(args) -> int:
    cfg = _load(args.config)
    advisories = lint_config(cfg)
    for a in advisories:
        print(a)
    if not advisories:
        print("no advisories")
    return EXIT_OK


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adskew", description="Audit and simulate gender skew in ad delivery.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("audit", help="skew and rates for an engagement ledger")
    _common(p, "input", "config", "out", "level", "window")
    p.add_argument("--focal", choices=["male", "female"], default=None)
    p.add_argument("--baseline-skew", type=float, default=None, help="earlier skew for the scaled reach delta")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("simulate", help="run a scenario through the delivery simulator")
    _common(p, "config", "seed", "out", "level", "window")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("montecarlo", help="skew distributions under priors for unknown users")
    _common(p, "input", "config", "seed", "out", "draws")
    p.add_argument("--counts", type=int, nargs=3, metavar=("MALE", "FEMALE", "UNKNOWN"))
    p.add_argument("--prior", action="append", choices=[k.value for k in unknownsim.PriorKind])
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("plan", help="print a budget split plan")
    _common(p, "config", "out")
    p.add_argument("--variant", choices=[v.value for v in intervention.SplitVariant], default="unknown_aware_split")
    p.add_argument("--budget-usd", default=None)
    p.add_argument("--campaign-id", default="campaign")
    p.add_argument("--strategy", choices=[s.value for s in BiddingStrategy], default="max_clicks")
    p.add_argument("--target-cpa-usd", default=None)
    p.add_argument("--male-share", type=float, default=None)
    p.add_argument("--cpm-male", default=None, help="observed male-side CPM in dollars")
    p.add_argument("--cpm-female", default=None, help="observed female-side CPM in dollars")
    p.add_argument("--no-exclusion", action="store_true", help="platform cannot exclude labels")
    p.add_argument("--period", type=int, default=1, help="slots per cycle block")
    p.add_argument("--horizon", type=int, default=42, help="slots in the schedule")
    p.add_argument("--phase", choices=[ph.value for ph in intervention.Phase], default="a_first")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("lint", help="advisory checks for a scenario file")
    _common(p, "config")
    p.set_defaults(func=cmd_lint)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for path, reason in exc.problems:
            print(f"config error: {path}: {reason}", file=sys.stderr)
        return EXIT_VALIDATION
    except (AdSkewError, ValueError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
