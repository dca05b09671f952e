"""Scoring of alert streams against ground truth.

Point-wise metrics walk the evaluation stream record by record: a record
is predicted positive when its id appears in a point alert or its
timestamp lies inside an interval alert, and the confusion table plus the
derived rates follow.  A ratio whose denominator is zero is reported as
an undefined marker (rendered "-"), not as 0.

Scenario-wise metrics first merge all alerts into maximal contiguous
alarm intervals (point alerts widened to a configurable width, one record
period by default).  Detected attacks counts the scenarios touched by at
least one alarm, false alarms the alarm intervals touching no scenario,
the penalty score the seconds true-positive alarms spend outside every
scenario, and the coverage percentage the share of total scenario time
covered by alarms.  Intervals are closed: a shared endpoint counts as
overlap.  There is no detection grace window after an attack ends unless
one is requested explicitly.
"""

from __future__ import annotations

import hashlib
import json
import logging
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import DataError
from .model import AlertEvent, IpalMessage

log = logging.getLogger(__name__)

UNDEFINED = None  # rendered as "-" in tables


@dataclass
class Scenario:
    name: str
    start: float
    end: float

    def validate(self) -> None:
        if self.start > self.end:
            raise DataError(f"scenario {self.name!r}: start after end")


def load_scenarios(path: str) -> list[Scenario]:
    with open(path, "r", encoding="utf-8") as fp:
        raw = json.load(fp)
    if isinstance(raw, dict):
        raw = raw.get("scenarios", [])
    scenarios = []
    for entry in raw:
        try:
            scenarios.append(Scenario(entry["name"], entry["start"], entry["end"]))
        except (KeyError, TypeError) as exc:
            raise DataError(f"bad scenario entry {entry!r}: {exc}") from None
    validate_scenarios(scenarios)
    return scenarios


def validate_scenarios(scenarios: Sequence[Scenario]) -> None:
    for s in scenarios:
        s.validate()
    ordered = sorted(scenarios, key=lambda s: (s.start, s.end))
    for a, b in zip(ordered, ordered[1:]):
        if b.start < a.end:
            raise DataError(f"scenarios {a.name!r} and {b.name!r} overlap")
        if b.start == a.end:
            log.warning("scenarios %r and %r share an endpoint", a.name, b.name)


def scenarios_from_labels(records: Sequence) -> list[Scenario]:
    """Derive scenarios from contiguous malicious-labeled record runs."""
    scenarios = []
    start = end = None
    for rec in records:
        if rec.malicious is True:
            if start is None:
                start = rec.timestamp
            end = rec.timestamp
        elif start is not None:
            scenarios.append(Scenario(f"attack-{len(scenarios) + 1}", start, end))
            start = None
    if start is not None:
        scenarios.append(Scenario(f"attack-{len(scenarios) + 1}", start, end))
    return scenarios


def merge_intervals(intervals: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    """Union of closed intervals; touching intervals merge."""
    merged: list[list[float]] = []
    for start, end in sorted(intervals):
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    return [(a, b) for a, b in merged]


def _overlaps(a: tuple[float, float], b: tuple[float, float]) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]


def _overlap_len(a: tuple[float, float], b: tuple[float, float]) -> float:
    return max(0.0, min(a[1], b[1]) - max(a[0], b[0]))


def alarm_intervals(alerts: Sequence[AlertEvent], records: Sequence,
                    point_width: float) -> list[tuple[float, float]]:
    """Merge alerts into maximal contiguous alarm intervals."""
    id_to_ts = {rec.id: rec.timestamp for rec in records
                if isinstance(rec, IpalMessage)}
    spans = []
    for alert in alerts:
        if alert.kind == "interval":
            spans.append((alert.start, alert.end))
        else:
            for mid in alert.message_ids:
                if mid not in id_to_ts:
                    raise DataError(f"alert references unknown message id {mid}")
                spans.append((id_to_ts[mid], id_to_ts[mid] + point_width))
    return merge_intervals(spans)


def point_alert_times(alerts: Sequence[AlertEvent], records: Sequence) -> list[float]:
    id_to_ts = {rec.id: rec.timestamp for rec in records
                if isinstance(rec, IpalMessage)}
    times = []
    for alert in alerts:
        if alert.kind == "point":
            for mid in alert.message_ids:
                if mid in id_to_ts:
                    times.append(id_to_ts[mid])
    return sorted(times)


def _ratio(num: float, den: float) -> float | None:
    return num / den if den > 0 else UNDEFINED


def point_metrics(alerts: Sequence[AlertEvent], records: Sequence) -> dict:
    """Per-record confusion table and derived rates.

    Unlabeled records count as negatives; a stream with no labels at all
    is an error.
    """
    if all(rec.malicious is None for rec in records):
        raise DataError("truth stream is unlabeled throughout")

    point_ids: set[int] = set()
    intervals = []
    for alert in alerts:
        if alert.kind == "point":
            point_ids.update(alert.message_ids)
        else:
            intervals.append((alert.start, alert.end))
    intervals = merge_intervals(intervals)

    def predicted(rec) -> bool:
        if isinstance(rec, IpalMessage) and rec.id in point_ids:
            return True
        ts = rec.timestamp
        # intervals are few; linear scan with early exit on sorted list
        for start, end in intervals:
            if start > ts:
                return False
            if ts <= end:
                return True
        return False

    tp = fp = tn = fn = 0
    for rec in records:
        positive = rec.malicious is True
        if predicted(rec):
            tp += positive
            fp += not positive
        else:
            fn += positive
            tn += not positive

    total = tp + fp + tn + fn
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = UNDEFINED
    if precision is not None and recall is not None and precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    return {
        "records": total,
        "tp": tp, "fp": fp, "tn": tn, "fn": fn,
        "accuracy": _ratio(tp + tn, total),
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "tpr": recall,
        "fpr": _ratio(fp, fp + tn),
    }


def scenario_metrics(alarms: Sequence[tuple[float, float]],
                     scenarios: Sequence[Scenario]) -> dict:
    """Detected attacks, false alarms, penalty score, coverage percent."""
    spans = [(s.start, s.end) for s in scenarios]
    merged_scenarios = merge_intervals(spans)

    detected = sum(
        1 for span in spans if any(_overlaps(span, alarm) for alarm in alarms)
    )
    false_alarms = sum(
        1 for alarm in alarms if not any(_overlaps(alarm, span) for span in spans)
    )
    penalty = 0.0
    for alarm in alarms:
        if any(_overlaps(alarm, span) for span in spans):
            inside = sum(_overlap_len(alarm, span) for span in merged_scenarios)
            penalty += (alarm[1] - alarm[0]) - inside
    total_attack_time = sum(end - start for start, end in spans)
    covered = sum(
        _overlap_len(span, alarm) for span in merged_scenarios for alarm in alarms
    )
    return {
        "scenarios": len(scenarios),
        "detected_attacks": detected,
        "false_alarms": false_alarms,
        "penalty_score": penalty,
        "coverage_percent": _ratio(covered * 100.0, total_attack_time),
        "odr": _ratio(detected * 100.0, len(scenarios)),
    }


_REPORT_FIELDS = (
    "detector", "mode", "records", "tp", "fp", "tn", "fn",
    "accuracy", "precision", "recall", "f1", "tpr", "fpr", "odr",
    "scenarios", "detected_attacks", "false_alarms", "penalty_score",
    "coverage_percent",
)


@dataclass
class EvalReport:
    detector: str = "unknown"
    mode: str = "both"
    records: int | None = None
    tp: int | None = None
    fp: int | None = None
    tn: int | None = None
    fn: int | None = None
    accuracy: float | None = None
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    tpr: float | None = None
    fpr: float | None = None
    odr: float | None = None
    scenarios: int | None = None
    detected_attacks: int | None = None
    false_alarms: int | None = None
    penalty_score: float | None = None
    coverage_percent: float | None = None
    alarms: list = field(default_factory=list)
    points: list = field(default_factory=list)
    scenario_spans: list = field(default_factory=list)
    truth_digest: str = ""

    def to_json(self) -> str:
        record = {name: getattr(self, name) for name in _REPORT_FIELDS}
        record["alarms"] = [[a, b] for a, b in self.alarms]
        record["points"] = list(self.points)
        record["scenario_spans"] = [
            {"name": s.name, "start": s.start, "end": s.end} for s in self.scenario_spans
        ]
        record["truth_digest"] = self.truth_digest
        return json.dumps(record, separators=(",", ":"), ensure_ascii=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        raw = json.loads(text)
        report = cls()
        for name in _REPORT_FIELDS:
            if name in raw:
                setattr(report, name, raw[name])
        report.alarms = [tuple(a) for a in raw.get("alarms", [])]
        report.points = list(raw.get("points", []))
        report.scenario_spans = [
            Scenario(s["name"], s["start"], s["end"])
            for s in raw.get("scenario_spans", [])
        ]
        report.truth_digest = raw.get("truth_digest", "")
        return report


def truth_digest(scenarios: Sequence[Scenario]) -> str:
    """Identify a ground truth by its attack scenarios.

    Message- and state-based detectors legitimately score against
    different record streams of the same experiment, so the digest
    deliberately covers only the scenario intervals.
    """
    h = hashlib.sha256()
    for s in scenarios:
        h.update(f"{s.name}|{s.start!r}|{s.end!r}\n".encode("utf-8"))
    return h.hexdigest()


def default_point_width(records: Sequence) -> float:
    gaps = [b.timestamp - a.timestamp for a, b in zip(records, records[1:])
            if b.timestamp > a.timestamp]
    return statistics.median(gaps) if gaps else 1.0


def build_report(alerts: Sequence[AlertEvent], records: Sequence,
                 scenarios: Sequence[Scenario] | None = None,
                 mode: str = "both", point_width: float | None = None,
                 grace: float = 0.0, detector: str | None = None) -> EvalReport:
    """Score one detector's alerts against one truth stream."""
    if mode not in ("point", "scenario", "both"):
        raise DataError(f"unknown evaluation mode {mode!r}")
    records = list(records)
    if not records:
        raise DataError("empty truth stream")
    names = {a.detector for a in alerts}
    if detector is None:
        detector = names.pop() if len(names) == 1 else "unknown"

    if scenarios is None:
        scenarios = scenarios_from_labels(records)
    validate_scenarios(scenarios)
    stray = sum(
        1 for rec in records
        if rec.malicious is True
        and not any(s.start <= rec.timestamp <= s.end for s in scenarios)
    )
    if stray:
        log.warning("%d malicious records fall outside every scenario", stray)

    if grace:
        scenarios = [Scenario(s.name, s.start, s.end + grace) for s in scenarios]
    if point_width is None:
        point_width = default_point_width(records)

    report = EvalReport(detector=detector, mode=mode)
    report.truth_digest = truth_digest(scenarios)
    report.scenario_spans = list(scenarios)
    report.alarms = alarm_intervals(alerts, records, point_width)
    report.points = point_alert_times(alerts, records)

    if mode in ("point", "both"):
        for key, value in point_metrics(alerts, records).items():
            setattr(report, key, value)
    scen = scenario_metrics(report.alarms, scenarios)
    if mode in ("scenario", "both"):
        for key, value in scen.items():
            setattr(report, key, value)
    else:
        # the overall detection rate belongs to the point-wise tables too
        report.scenarios = scen["scenarios"]
        report.odr = scen["odr"]
    return report


def render_value(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def comparison_table(reports: Sequence[EvalReport]) -> str:
    """CSV, one row per detector, columns shared with the report format."""
    if not reports:
        raise DataError("nothing to compare")
    digests = {r.truth_digest for r in reports}
    if len(digests) > 1:
        raise DataError("mixed ground truths across reports")
    lines = [",".join(_REPORT_FIELDS)]
    for report in reports:
        lines.append(",".join(render_value(getattr(report, name))
                              for name in _REPORT_FIELDS))
    return "\n".join(lines) + "\n"


def timeline_export(reports: Sequence[EvalReport]) -> dict:
    """Alarm intervals and scenario bands for external plotting tools."""
    if not reports:
        raise DataError("nothing to export")
    scenarios = [
        {"name": s.name, "start": s.start, "end": s.end}
        for s in reports[0].scenario_spans
    ]
    return {
        "scenarios": scenarios,
        "detectors": {
            report.detector: {
                "alarms": [[a, b] for a, b in report.alarms],
                "points": list(report.points),
            }
            for report in reports
        },
    }
