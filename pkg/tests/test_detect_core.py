import pytest

import ipal.detectors  # noqa: F401  (registers detectors)
from conftest import make_message
from ipal.detect import detect, detector_names, load_model, save_model, train
from ipal.errors import DataError, UsageError
from ipal.model import StateMessage, serialize_alert


def _periodic(n=20, period=1.0, label=False):
    msgs = []
    for i in range(n):
        msgs.append(make_message(id=2 * i, timestamp=i * period, activity="request"))
        msgs.append(make_message(id=2 * i + 1, timestamp=i * period,
                                 activity="response", responds_to=[2 * i],
                                 process_data={"v": i % 3},
                                 malicious=label))
    return msgs


def test_all_five_detectors_registered():
    assert detector_names() == ["dtmc", "iat-mean", "iat-range", "ooa", "pasad"]


def test_training_on_empty_stream():
    with pytest.raises(DataError, match="insufficient data"):
        train("iat-mean", [], {})


def test_training_twice_yields_identical_models():
    msgs = _periodic()
    a = train("iat-mean", msgs, {})
    b = train("iat-mean", msgs, {})
    assert a.to_json() == b.to_json()


def test_training_refuses_malicious_records():
    msgs = _periodic()
    msgs[7] = make_message(id=msgs[7].id, timestamp=msgs[7].timestamp,
                           malicious=True)
    with pytest.raises(DataError, match=f"id {msgs[7].id}"):
        train("iat-mean", msgs, {})


def test_unlabeled_training_records_are_accepted():
    msgs = [make_message(id=i, timestamp=float(i), malicious=None)
            for i in range(10)]
    train("iat-mean", msgs, {})


def test_persistence_round_trip_preserves_behavior(tmp_path):
    msgs = _periodic()
    model = train("dtmc", msgs, {})
    path = tmp_path / "m.json"
    save_model(model, str(path))
    loaded = load_model(str(path))
    test_stream = _periodic(n=30)
    before = [serialize_alert(a) for a in detect(model, test_stream)]
    after = [serialize_alert(a) for a in detect(loaded, test_stream)]
    assert before == after


def test_kind_mismatch_is_an_error():
    msgs = _periodic()
    model = train("iat-mean", msgs, {})
    states = [StateMessage(timestamp=1.0, state={"a": 1}, malicious=False)]
    with pytest.raises(DataError, match="kind mismatch"):
        list(detect(model, states))
    with pytest.raises(DataError, match="kind mismatch"):
        train("ooa", msgs, {})


def test_detect_is_pure():
    msgs = _periodic()
    model = train("iat-mean", msgs, {})
    stream = _periodic(n=40)
    stream[31] = make_message(id=stream[31].id, timestamp=stream[31].timestamp + 0.4,
                              activity=stream[31].activity,
                              responds_to=stream[31].responds_to)
    runs = [[serialize_alert(a) for a in detect(model, stream)] for _ in range(2)]
    assert runs[0] == runs[1]


def test_causality_truncation_invariance():
    """Alerts up to time t do not change when the stream is cut at t."""
    msgs = _periodic(n=50)
    model = train("iat-mean", msgs, {})
    stream = _periodic(n=50)
    # perturb two arrivals to provoke alerts
    for idx in (40, 80):
        m = stream[idx]
        stream[idx] = make_message(id=m.id, timestamp=m.timestamp + 0.33,
                                   activity=m.activity, responds_to=m.responds_to,
                                   process_data=m.process_data)
    stream.sort(key=lambda m: (m.timestamp, m.id))
    full = [serialize_alert(a) for a in detect(model, stream)]
    cutoff = 30.0
    id_ts = {m.id: m.timestamp for m in stream}
    truncated_stream = [m for m in stream if m.timestamp <= cutoff]
    truncated = [serialize_alert(a) for a in detect(model, truncated_stream)]
    full_before_cut = [s for s in full
                       if max(id_ts[i] for i in __import__("json").loads(s)["message_ids"]) <= cutoff]
    assert truncated == full_before_cut


def test_unknown_detector_and_hyperparameter():
    with pytest.raises(UsageError, match="unknown detector"):
        train("nope", _periodic(), {})
    with pytest.raises(UsageError, match="unknown hyperparameter"):
        train("iat-mean", _periodic(), {"bogus": 1})


def test_unordered_stream_is_rejected():
    msgs = _periodic()
    msgs[3], msgs[5] = msgs[5], msgs[3]
    with pytest.raises(DataError, match="not time-ordered"):
        train("iat-mean", msgs, {})
