import math
import random

import pytest

from conftest import make_message
from ipal.errors import DataError
from ipal.evaluate import (
    EvalReport,
    Scenario,
    alarm_intervals,
    build_report,
    comparison_table,
    merge_intervals,
    point_metrics,
    render_value,
    scenario_metrics,
    scenarios_from_labels,
    timeline_export,
    validate_scenarios,
)
from ipal.model import AlertEvent


def _records(labels, t0=0.0, step=1.0):
    return [make_message(id=i, timestamp=t0 + i * step, malicious=bool(b))
            for i, b in enumerate(labels)]


def _interval(start, end, detector="d"):
    return AlertEvent(detector=detector, kind="interval", start=float(start),
                      end=float(end), score=1.0)


def _point(ids, detector="d"):
    return AlertEvent(detector=detector, kind="point", message_ids=list(ids),
                      score=1.0)


def test_penalty_example():
    metrics = scenario_metrics([(15.0, 25.0)], [Scenario("a", 10.0, 20.0)])
    assert metrics["detected_attacks"] == 1
    assert metrics["false_alarms"] == 0
    assert metrics["penalty_score"] == 5.0


def test_disjoint_alarm_is_a_false_alarm():
    metrics = scenario_metrics([(30.0, 35.0)], [Scenario("a", 10.0, 20.0)])
    assert metrics["detected_attacks"] == 0
    assert metrics["false_alarms"] == 1
    assert metrics["penalty_score"] == 0.0


def test_shared_endpoint_counts_as_overlap():
    metrics = scenario_metrics([(20.0, 30.0)], [Scenario("a", 10.0, 20.0)])
    assert metrics["detected_attacks"] == 1
    assert metrics["penalty_score"] == 10.0


def test_penalty_zero_when_alarms_contained():
    metrics = scenario_metrics([(11.0, 14.0), (16.0, 19.0)],
                               [Scenario("a", 10.0, 20.0)])
    assert metrics["penalty_score"] == 0.0
    assert metrics["coverage_percent"] == pytest.approx(60.0)


def _sweepline_oracle(alarms, scenarios, resolution=1):
    """Second-granularity timeline enumeration (integer endpoints only)."""
    def covered(intervals, t):
        return any(s <= t <= e for s, e in intervals)

    spans = [(s.start, s.end) for s in scenarios]
    detected = sum(1 for s, e in spans
                   if any(a <= e and s <= b for a, b in alarms))
    false_alarms = sum(1 for a, b in alarms
                       if not any(a <= e and s <= b for s, e in spans))
    penalty = 0
    for a, b in merge_intervals(alarms):
        if not any(a <= e and s <= b for s, e in spans):
            continue
        for tick in range(int(a), int(b)):
            seg = (tick, tick + 1)
            if not any(s <= seg[0] and seg[1] <= e for s, e in spans):
                # count the uncovered fraction of this unit segment
                inside = sum(max(0, min(e, seg[1]) - max(s, seg[0]))
                             for s, e in merge_intervals(spans))
                penalty += 1 - inside
    return detected, false_alarms, penalty


def test_random_intervals_match_sweepline_oracle():
    rng = random.Random(13)
    for trial in range(50):
        scenarios = []
        t = 0
        for k in range(rng.randrange(1, 5)):
            t += rng.randrange(2, 10)
            start = t
            t += rng.randrange(1, 8)
            scenarios.append(Scenario(f"s{k}", float(start), float(t)))
            t += 1  # keep them disjoint
        alarms = []
        for _ in range(rng.randrange(0, 6)):
            a = rng.randrange(0, 60)
            alarms.append((float(a), float(a + rng.randrange(1, 10))))
        alarms = merge_intervals(alarms)
        got = scenario_metrics(alarms, scenarios)
        want = _sweepline_oracle(alarms, scenarios)
        assert (got["detected_attacks"], got["false_alarms"]) == want[:2], trial
        assert got["penalty_score"] == pytest.approx(want[2]), trial


def test_point_metrics_exact_when_alerts_equal_labels():
    records = _records([0, 1, 1, 0, 0, 1])
    alerts = [_point([i for i, r in enumerate(records) if r.malicious])]
    m = point_metrics(alerts, records)
    assert m["precision"] == 1.0 and m["recall"] == 1.0
    assert m["tp"] == 3 and m["fp"] == 0 and m["fn"] == 0 and m["tn"] == 3


def test_undefined_precision_marker():
    """No alerts on a stream with attacks: precision undefined (rendered
    "-"), recall zero."""
    records = _records([0, 1, 1, 0])
    m = point_metrics([], records)
    assert m["precision"] is None
    assert m["recall"] == 0.0
    assert m["f1"] is None
    assert render_value(m["precision"]) == "-"


def test_unlabeled_stream_is_an_error():
    records = [make_message(id=i, timestamp=float(i), malicious=None)
               for i in range(4)]
    with pytest.raises(DataError, match="unlabeled"):
        point_metrics([], records)


def test_point_metrics_match_bruteforce_recount():
    rng = random.Random(99)
    records = [make_message(id=i, timestamp=i * 0.5,
                            malicious=rng.random() < 0.3)
               for i in range(1000)]
    point_ids = rng.sample(range(1000), 120)
    intervals = []
    for _ in range(5):
        a = rng.uniform(0, 480)
        intervals.append(_interval(a, a + rng.uniform(1, 30)))
    alerts = [_point(point_ids)] + intervals

    got = point_metrics(alerts, records)
    tp = fp = tn = fn = 0
    for rec in records:
        predicted = rec.id in point_ids or any(
            iv.start <= rec.timestamp <= iv.end for iv in intervals)
        if predicted and rec.malicious:
            tp += 1
        elif predicted:
            fp += 1
        elif rec.malicious:
            fn += 1
        else:
            tn += 1
    assert (got["tp"], got["fp"], got["tn"], got["fn"]) == (tp, fp, tn, fn)
    assert got["accuracy"] == pytest.approx((tp + tn) / 1000)
    assert got["tpr"] == got["recall"]


def test_point_alerts_widen_to_record_period():
    records = _records([0] * 10)
    alarms = alarm_intervals([_point([2]), _point([3])], records, point_width=1.0)
    assert alarms == [(2.0, 4.0)]  # touching intervals merge


def test_alert_with_unknown_id():
    records = _records([0, 0])
    with pytest.raises(DataError, match="unknown message id"):
        alarm_intervals([_point([99])], records, 1.0)


def test_detected_attacks_monotone_under_union():
    scenarios = [Scenario("a", 0.0, 10.0), Scenario("b", 20.0, 30.0)]
    alarms_a = [(1.0, 2.0)]
    alarms_b = [(21.0, 22.0)]
    da = scenario_metrics(alarms_a, scenarios)["detected_attacks"]
    db = scenario_metrics(alarms_b, scenarios)["detected_attacks"]
    union = scenario_metrics(merge_intervals(alarms_a + alarms_b),
                             scenarios)["detected_attacks"]
    assert union >= max(da, db)
    assert union == 2


def test_scenarios_from_labels():
    records = _records([0, 1, 1, 0, 1, 0])
    scenarios = scenarios_from_labels(records)
    assert [(s.start, s.end) for s in scenarios] == [(1.0, 2.0), (4.0, 4.0)]


def test_overlapping_scenarios_rejected():
    with pytest.raises(DataError, match="overlap"):
        validate_scenarios([Scenario("a", 0.0, 10.0), Scenario("b", 5.0, 15.0)])


def test_build_report_and_grace_window():
    records = _records([0, 0, 1, 1, 0, 0, 0, 0])
    alerts = [_interval(4.5, 5.0)]  # fires just after the attack [2, 3]
    strict = build_report(alerts, records, mode="both")
    assert strict.detected_attacks == 0
    assert strict.false_alarms == 1
    lenient = build_report(alerts, records, mode="both", grace=2.0)
    assert lenient.detected_attacks == 1
    assert lenient.false_alarms == 0


def test_report_round_trip_and_table():
    records = _records([0, 1, 0, 1, 0])
    alerts = [_point([1, 3], detector="x")]
    report = build_report(alerts, records, mode="both")
    again = EvalReport.from_json(report.to_json())
    assert again.to_json() == report.to_json()

    table = comparison_table([report, report])
    lines = table.strip().split("\n")
    assert len(lines) == 3
    assert lines[1] == lines[2]  # identical alerts, identical rows
    assert lines[0].startswith("detector,")


def test_compare_rejects_mixed_ground_truths():
    r1 = build_report([_point([1])], _records([0, 1, 0]), mode="both")
    r2 = build_report([_point([1])], _records([0, 1, 1]), mode="both")
    with pytest.raises(DataError, match="mixed ground truths"):
        comparison_table([r1, r2])


def test_timeline_export_shape():
    records = _records([0, 1, 0])
    r = build_report([_point([1], detector="iat-mean")], records, mode="both")
    tl = timeline_export([r])
    assert "iat-mean" in tl["detectors"]
    assert tl["detectors"]["iat-mean"]["alarms"]
    assert tl["scenarios"][0]["name"] == "attack-1"


def test_mode_point_reports_odr_but_no_penalty():
    records = _records([0, 1, 1, 0])
    report = build_report([_point([1])], records, mode="point")
    assert report.odr == 100.0
    assert report.penalty_score is None
    assert report.tp == 1
