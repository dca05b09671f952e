import pytest

import ipal.detectors  # noqa: F401
from ipal.detect import detect, train
from ipal.model import StateMessage


def _states(values, var="v", t0=0.0, extra=None):
    out = []
    for k, v in enumerate(values):
        state = {var: v}
        if extra:
            state.update(extra)
        out.append(StateMessage(timestamp=t0 + k, state=state, malicious=False))
    return out


def test_boundaries_with_zero_margin():
    model = train("ooa", _states([0, 2, 10, 5]), {"delta": 0.0})
    assert list(detect(model, _states([10.0], t0=100.0))) == []
    alerts = list(detect(model, _states([10.01], t0=100.0)))
    assert len(alerts) == 1


def test_margin_widens_by_span_fraction():
    model = train("ooa", _states([0, 10]), {"delta": 0.1})
    # span 10 -> allowed [-1, 11]
    assert list(detect(model, _states([10.5, -1.0, 11.0], t0=50.0))) == []
    alerts = list(detect(model, _states([11.01], t0=50.0)))
    assert len(alerts) == 1
    alerts = list(detect(model, _states([-1.01], t0=50.0)))
    assert len(alerts) == 1


def test_unseen_categorical_value_alerts():
    model = train("ooa", _states(["0", "1", "0", "1"]), {})
    assert list(detect(model, _states(["0", "1"], t0=10.0))) == []
    alerts = list(detect(model, _states(["2"], t0=10.0)))
    assert len(alerts) == 1


def test_booleans_are_categorical():
    model = train("ooa", _states([True, True]), {})
    assert model.payload["variables"]["v"]["kind"] == "categorical"
    alerts = list(detect(model, _states([False], t0=10.0)))
    assert len(alerts) == 1


def test_no_alerts_on_training_stream():
    states = _states([0, 1, 2, 3, 2, 1], extra={"mode": "auto"})
    model = train("ooa", states, {})
    assert list(detect(model, states)) == []


def test_interval_per_contiguous_violation():
    model = train("ooa", _states([0, 1, 2]), {})
    stream = _states([1, 99, 99, 1, 99, 1], t0=10.0)
    alerts = list(detect(model, stream))
    assert [(a.start, a.end) for a in alerts] == [(11.0, 12.0), (14.0, 14.0)]
    assert all(a.kind == "interval" for a in alerts)


def test_unknown_variable_alerts():
    model = train("ooa", _states([0, 1]), {})
    stream = [StateMessage(timestamp=10.0, state={"v": 1, "new": 5},
                           malicious=False)]
    alerts = list(detect(model, stream))
    assert len(alerts) == 1


def test_mixed_type_variable_falls_back_to_categorical():
    states = _states([1, "on", 1, "on"])
    model = train("ooa", states, {})
    assert model.payload["variables"]["v"]["kind"] == "categorical"
    assert list(detect(model, states)) == []
    alerts = list(detect(model, _states([2], t0=50.0)))
    assert len(alerts) == 1


def test_score_counts_violating_variables():
    states = [StateMessage(timestamp=float(k), state={"a": 0, "b": 0},
                           malicious=False) for k in range(4)]
    model = train("ooa", states, {})
    bad = [StateMessage(timestamp=10.0, state={"a": 9, "b": 9}, malicious=False)]
    (alert,) = detect(model, bad)
    assert alert.score == 2.0
