"""Canonical ledger CSV and report writers.

Ledger schema (UTF-8, comma separated, ISO dates, spend with two decimals)::

    date,campaign_id,targeting,label,impressions,clicks,conversions,spend

Reports carry labels only; latent (ground-truth) gender never leaves the
simulator.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from pathlib import Path

from adskew import __version__
from adskew.core import (
    LABELS,
    EngagementRecord,
    GroupLabel,
    InvalidArgumentError,
    RateMetrics,
    Targeting,
    format_usd,
    validate_record,
)
from adskew.metrics import WindowSkew
from adskew.unknownsim import DistributionSummary

LEDGER_HEADER = ("date", "campaign_id", "targeting", "label", "impressions", "clicks", "conversions", "spend")


class SchemaError(InvalidArgumentError):
    """The file does not follow the canonical ledger schema."""


@dataclass(frozen=True)
class IngestWarning:
    line: int
    campaign_id: str
    problems: tuple[str, ...]

    def __str__(self) -> str:
        return f"line {self.line} ({self.campaign_id}): {', '.join(self.problems)}"


def _parse_int(text: str, column: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise SchemaError(f"line {line}: {column} is not an integer: {text!r}") from None


def _parse_spend(text: str, line: int) -> int:
    try:
        value = Decimal(text)
    except InvalidOperation:
        raise SchemaError(f"line {line}: spend is not a decimal amount: {text!r}") from None
    if not value.is_finite() or value.as_tuple().exponent != -2:
        raise SchemaError(f"line {line}: spend must have exactly two decimals: {text!r}")
    return int(value * 100)


def parse_ledger(text: str) -> tuple[list[EngagementRecord], list[IngestWarning]]:
    """Parse canonical ledger CSV text.

    Rows that violate record invariants (e.g. clicks > impressions) are kept
    and reported as warnings. Schema problems raise ``SchemaError``.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty file: missing header") from None
    if tuple(header) != LEDGER_HEADER:
        missing = [c for c in LEDGER_HEADER if c not in header]
        extra = [c for c in header if c not in LEDGER_HEADER]
        detail = []
        if missing:
            detail.append(f"missing {missing}")
        if extra:
            detail.append(f"unexpected {extra}")
        if not detail:
            detail.append("columns out of order")
        raise SchemaError(f"bad header ({'; '.join(detail)}); expected {','.join(LEDGER_HEADER)}")

    records, warnings = [], []
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(LEDGER_HEADER):
            raise SchemaError(f"line {line}: expected {len(LEDGER_HEADER)} fields, got {len(row)}")
        date_s, campaign_id, targeting_s, label_s, impr_s, clicks_s, conv_s, spend_s = row
        try:
            date = dt.date.fromisoformat(date_s)
        except ValueError:
            raise SchemaError(f"line {line}: bad date {date_s!r}") from None
        try:
            targeting = Targeting(targeting_s)
        except ValueError:
            raise SchemaError(f"line {line}: bad targeting {targeting_s!r}") from None
        try:
            label = GroupLabel(label_s)
        except ValueError:
            raise SchemaError(f"line {line}: bad label {label_s!r}") from None
        record = EngagementRecord(
            campaign_id=campaign_id,
            date=date,
            label=label,
            impressions=_parse_int(impr_s, "impressions", line),
            clicks=_parse_int(clicks_s, "clicks", line),
            conversions=_parse_int(conv_s, "conversions", line),
            spend_cents=_parse_spend(spend_s, line),
            targeting=targeting,
        )
        problems = validate_record(record)
        if label not in targeting.labels:
            problems.append(f"label {label.value} outside targeting {targeting.value}")
        if problems:
            warnings.append(IngestWarning(line, campaign_id, tuple(problems)))
        records.append(record)
    return records, warnings


def ingest_csv(path: str | Path) -> tuple[list[EngagementRecord], list[IngestWarning]]:
    """Read a ledger file. ``OSError`` propagates; schema errors raise ``SchemaError``."""
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_ledger(fh.read())


def format_ledger(records: Iterable[EngagementRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LEDGER_HEADER)
    for r in records:
        writer.writerow(
            [
                r.date.isoformat(),
                r.campaign_id,
                r.targeting.value,
                r.label.value,
                r.impressions,
                r.clicks,
                r.conversions,
                format_usd(r.spend_cents),
            ]
        )
    return buf.getvalue()


def write_ledger(path: str | Path, records: Iterable[EngagementRecord]) -> None:
    Path(path).write_text(format_ledger(records), encoding="utf-8", newline="")


# -- reports ------------------------------------------------------------------


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def write_skew_series(path: str | Path, series: Mapping[str, Sequence[WindowSkew]]) -> None:
    """One row per (group, window). Undefined windows have empty estimate fields."""
    header = ("group", "window", "start", "end", "partial", "metric", "focal", "point", "ci_low", "ci_high", "level", "n_focal", "n_total", "n_unknown", "parity")
    rows = []
    for group, windows in series.items():
        for w in windows:
            e = w.estimate
            if e is None:
                rows.append((group, w.index, w.start, w.end, int(w.partial), "", "", "", "", "", "", "", "", w.n_unknown, "undefined"))
                continue
            parity = "true" if e.ci_low <= 0.5 <= e.ci_high else "false"
            rows.append(
                (group, w.index, w.start, w.end, int(w.partial), e.metric.value, e.focal.value, _fmt(e.point), _fmt(e.ci_low), _fmt(e.ci_high), e.level, e.n_focal, e.n_total, w.n_unknown, parity)
            )
    _write_rows(Path(path), header, rows)


def write_cpm_table(path: str | Path, table: Mapping[str, Mapping[GroupLabel, RateMetrics]]) -> None:
    header = ("group", "label", "impressions", "ctr", "cvr", "cpm")
    rows = []
    for group, per_label in table.items():
        for label in LABELS:
            if label in per_label:
                m = per_label[label]
                rows.append((group, label.value, m.impressions, _fmt(m.ctr), _fmt(m.cvr), _fmt(m.cpm)))
    _write_rows(Path(path), header, rows)


def write_histogram(path: str | Path, summaries: Mapping[str, DistributionSummary]) -> None:
    header = ("prior", "bin", "bin_low", "bin_high", "count")
    rows = []
    for name, s in summaries.items():
        for k, count in enumerate(s.counts):
            rows.append((name, k, _fmt(s.bin_edges[k]), _fmt(s.bin_edges[k + 1]), int(count)))
    _write_rows(Path(path), header, rows)


_FORBIDDEN_KEYS = ("latent",)


def _check_no_latent(obj, path="") -> None:
    if isinstance(obj, Mapping):
        for k, v in obj.items():
            if any(f in str(k).lower() for f in _FORBIDDEN_KEYS):
                raise InvalidArgumentError(f"report field {path}{k} would expose ground truth")
            _check_no_latent(v, f"{path}{k}.")
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            _check_no_latent(v, path)


def summary_document(command: str, body: Mapping, seed: int | None = None, config_digest: str | None = None) -> dict:
    doc = {
        "tool": "adskew",
        "version": __version__,
        "command": command,
        "seed": seed,
        "config_digest": config_digest,
        **body,
    }
    _check_no_latent(doc)
    return doc


def write_summary(path: str | Path, doc: Mapping) -> None:
    _check_no_latent(doc)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
