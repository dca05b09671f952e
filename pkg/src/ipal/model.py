"""Abstract message and state formats plus their wire serialization.

A message stream is a text file with one JSON record per line (extension
``.ipal``), a state stream likewise (extension ``.state``), and alert
streams (extension ``.alerts``) hold one alert record per line.  Keys are
emitted in a fixed order and maps are emitted with sorted keys, so the
same record always serializes to the same bytes.

The ``malicious`` label is tri-state: ``true`` (malicious), ``false``
(benign), or ``null`` (unlabeled).  Unknown keys found while parsing are
kept verbatim and re-emitted (sorted, after the known keys), so files
produced by newer tools survive a round trip through older ones.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator

from .errors import ValidationError

ACTIVITIES = ("request", "response", "command", "command_response")

#: key order of the message wire format (protocol is a toolkit field and
#: rides between timestamp and length; the rest keep their table order)
_MESSAGE_KEYS = (
    "id",
    "timestamp",
    "protocol",
    "length",
    "malicious",
    "source",
    "destination",
    "message_type",
    "activity",
    "responds_to",
    "process_data",
)

_STATE_KEYS = ("timestamp", "state", "malicious")

ProcessValue = Any  # number | bool | str


@dataclass
class IpalMessage:
    """One transcribed industrial packet."""

    id: int
    timestamp: float
    protocol: str
    length: int
    malicious: bool | None
    source: str
    destination: str
    message_type: int | str
    activity: str
    responds_to: list[int] = field(default_factory=list)
    process_data: dict[str, ProcessValue] = field(default_factory=dict)
    extra: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        """Raise ValidationError on the first violated invariant."""
        if not isinstance(self.id, int) or isinstance(self.id, bool) or self.id < 0:
            raise ValidationError("invalid id", f"got {self.id!r}")
        _check_timestamp(self.timestamp)
        if not isinstance(self.protocol, str):
            raise ValidationError("invalid protocol", f"got {self.protocol!r}")
        if not isinstance(self.length, int) or isinstance(self.length, bool) or self.length < 0:
            raise ValidationError("invalid length", f"got {self.length!r}")
        if self.malicious not in (True, False, None):
            raise ValidationError("invalid malicious", f"got {self.malicious!r}")
        if not isinstance(self.source, str) or not self.source:
            raise ValidationError("empty source", f"message {self.id}")
        if not isinstance(self.destination, str):
            raise ValidationError("invalid destination", f"message {self.id}")
        if not isinstance(self.message_type, (int, str)) or isinstance(self.message_type, bool):
            raise ValidationError("invalid message_type", f"got {self.message_type!r}")
        if self.activity not in ACTIVITIES:
            raise ValidationError("invalid activity", f"got {self.activity!r}")
        if not isinstance(self.responds_to, list):
            raise ValidationError("invalid responds_to", f"message {self.id}")
        for ref in self.responds_to:
            if not isinstance(ref, int) or isinstance(ref, bool):
                raise ValidationError("invalid responds_to", f"message {self.id}: {ref!r}")
            if ref >= self.id:
                raise ValidationError(
                    "responds_to < id", f"message {self.id} references {ref}"
                )
        _check_process_data(self.process_data, self.id)


@dataclass
class StateMessage:
    """A timestamped snapshot of all known process variables."""

    timestamp: float
    state: dict[str, ProcessValue]
    malicious: bool | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        _check_timestamp(self.timestamp)
        if self.malicious not in (True, False, None):
            raise ValidationError("invalid malicious", f"got {self.malicious!r}")
        _check_process_data(self.state, None)


@dataclass
class AlertEvent:
    """A detector verdict: a point alert over message ids or a time interval."""

    detector: str
    kind: str  # "point" | "interval"
    message_ids: list[int] = field(default_factory=list)
    start: float | None = None
    end: float | None = None
    score: float = 0.0
    violation_class: str | None = None

    def validate(self) -> None:
        if self.kind == "point":
            if not self.message_ids:
                raise ValidationError("point alert without ids", self.detector)
        elif self.kind == "interval":
            if self.start is None or self.end is None or self.start > self.end:
                raise ValidationError(
                    "invalid alert interval", f"{self.start!r}..{self.end!r}"
                )
        else:
            raise ValidationError("invalid alert kind", f"got {self.kind!r}")


@dataclass
class Violation:
    """One invariant violation found while validating a stream."""

    message_id: int | None
    rule: str
    detail: str = ""


def _check_timestamp(value: Any) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError("invalid timestamp", f"got {value!r}")
    if isinstance(value, float) and not math.isfinite(value):
        raise ValidationError("invalid timestamp", f"got {value!r}")


def _check_process_data(data: Any, msg_id: int | None) -> None:
    where = "" if msg_id is None else f"message {msg_id}: "
    if not isinstance(data, dict):
        raise ValidationError("invalid process_data", f"{where}not a map")
    for name, value in data.items():
        if not isinstance(name, str):
            raise ValidationError("invalid process_data", f"{where}key {name!r}")
        if isinstance(value, (bool, int, float, str)):
            if isinstance(value, float) and not math.isfinite(value):
                raise ValidationError(
                    "invalid process_data", f"{where}non-finite value for {name!r}"
                )
            continue
        raise ValidationError(
            "invalid process_data", f"{where}unsupported value for {name!r}"
        )


def _canonical(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _canonical(value[k]) for k in sorted(value)}
    if isinstance(value, list):
        return [_canonical(v) for v in value]
    return value


def _dump(record: dict[str, Any]) -> str:
    return json.dumps(record, separators=(",", ":"), ensure_ascii=True)


def serialize_message(msg: IpalMessage) -> str:
    """Render one validated message as its canonical one-line record."""
    msg.validate()
    record: dict[str, Any] = {}
    for key in _MESSAGE_KEYS:
        record[key] = _canonical(getattr(msg, key))
    for key in sorted(msg.extra):
        if key in _MESSAGE_KEYS:
            raise ValidationError("invalid extra key", f"shadows {key!r}")
        record[key] = _canonical(msg.extra[key])
    return _dump(record)


def parse_message(line: str) -> IpalMessage:
    """Parse and validate one message record; unknown keys are preserved."""
    raw = _parse_object(line)
    known = {}
    for key in _MESSAGE_KEYS:
        if key not in raw:
            raise ValidationError("missing key", key)
        known[key] = raw.pop(key)
    if isinstance(known["timestamp"], int):
        known["timestamp"] = float(known["timestamp"])
    msg = IpalMessage(**known, extra=raw)
    msg.validate()
    return msg


def serialize_state(state: StateMessage) -> str:
    state.validate()
    record: dict[str, Any] = {key: _canonical(getattr(state, key)) for key in _STATE_KEYS}
    for key in sorted(state.extra):
        record[key] = _canonical(state.extra[key])
    return _dump(record)


def parse_state(line: str) -> StateMessage:
    raw = _parse_object(line)
    known = {}
    for key in _STATE_KEYS:
        if key not in raw:
            raise ValidationError("missing key", key)
        known[key] = raw.pop(key)
    if isinstance(known["timestamp"], int):
        known["timestamp"] = float(known["timestamp"])
    state = StateMessage(**known, extra=raw)
    state.validate()
    return state


_ALERT_KEYS = ("detector", "kind", "message_ids", "start", "end", "score", "violation_class")


def serialize_alert(alert: AlertEvent) -> str:
    alert.validate()
    record: dict[str, Any] = {"detector": alert.detector, "kind": alert.kind}
    if alert.kind == "point":
        record["message_ids"] = list(alert.message_ids)
    else:
        record["start"] = alert.start
        record["end"] = alert.end
    record["score"] = alert.score
    if alert.violation_class is not None:
        record["violation_class"] = alert.violation_class
    return _dump(record)


def parse_alert(line: str) -> AlertEvent:
    raw = _parse_object(line)
    alert = AlertEvent(
        detector=raw.get("detector", ""),
        kind=raw.get("kind", ""),
        message_ids=raw.get("message_ids", []),
        start=raw.get("start"),
        end=raw.get("end"),
        score=raw.get("score", 0.0),
        violation_class=raw.get("violation_class"),
    )
    alert.validate()
    return alert


def _parse_object(line: str) -> dict[str, Any]:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValidationError("malformed record", str(exc)) from None
    if not isinstance(raw, dict):
        raise ValidationError("malformed record", "not an object")
    return raw


def validate_stream(msgs: Iterable[IpalMessage]) -> list[Violation]:
    """Collect every stream-level invariant violation.

    Violations are data, not errors: the empty list means the stream is
    well-formed.  Checked rules: per-message validity, strict id
    monotonicity, and responds_to references resolving to earlier ids.
    """
    violations: list[Violation] = []
    seen: set[int] = set()
    last_id: int | None = None
    for msg in msgs:
        try:
            msg.validate()
        except ValidationError as exc:
            violations.append(Violation(getattr(msg, "id", None), exc.rule, exc.detail))
        if last_id is not None and msg.id <= last_id:
            violations.append(
                Violation(msg.id, "id monotonicity", f"{msg.id} after {last_id}")
            )
        for ref in msg.responds_to:
            if isinstance(ref, int) and ref < msg.id and ref not in seen:
                violations.append(
                    Violation(msg.id, "dangling responds_to", f"references {ref}")
                )
        seen.add(msg.id)
        last_id = msg.id
    return violations


# --- stream file helpers -------------------------------------------------

def write_messages(path_or_fp, msgs: Iterable[IpalMessage]) -> int:
    return _write_lines(path_or_fp, (serialize_message(m) for m in msgs))


def read_messages(path_or_fp) -> Iterator[IpalMessage]:
    yield from _read_lines(path_or_fp, parse_message)


def write_states(path_or_fp, states: Iterable[StateMessage]) -> int:
    return _write_lines(path_or_fp, (serialize_state(s) for s in states))


def read_states(path_or_fp) -> Iterator[StateMessage]:
    yield from _read_lines(path_or_fp, parse_state)


def write_alerts(path_or_fp, alerts: Iterable[AlertEvent]) -> int:
    return _write_lines(path_or_fp, (serialize_alert(a) for a in alerts))


def read_alerts(path_or_fp) -> Iterator[AlertEvent]:
    yield from _read_lines(path_or_fp, parse_alert)


def _write_lines(path_or_fp, lines: Iterable[str]) -> int:
    if isinstance(path_or_fp, (str, bytes)) or hasattr(path_or_fp, "__fspath__"):
        with open(path_or_fp, "w", encoding="ascii", newline="\n") as fp:
            return _write_lines(fp, lines)
    count = 0
    for line in lines:
        path_or_fp.write(line)
        path_or_fp.write("\n")
        count += 1
    return count


def _read_lines(path_or_fp, parse) -> Iterator[Any]:
    if isinstance(path_or_fp, (str, bytes)) or hasattr(path_or_fp, "__fspath__"):
        with open(path_or_fp, "r", encoding="utf-8") as fp:
            yield from _read_lines(fp, parse)
        return
    for lineno, line in enumerate(path_or_fp, 1):
        line = line.strip()
        if not line:
            continue
        try:
            yield parse(line)
        except ValidationError as exc:
            raise ValidationError(exc.rule, f"line {lineno}: {exc.detail}") from None


def content_hash(process_data: dict[str, ProcessValue]) -> str:
    """Canonical short hash of a process_data map (used as a content key)."""
    blob = json.dumps(_canonical(process_data), separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(blob.encode("ascii")).hexdigest()[:16]


def stream_digest(msgs: Iterable[IpalMessage | StateMessage]) -> str:
    """Digest over the serialized records, for manifests and truth checks."""
    h = hashlib.sha256()
    for rec in msgs:
        if isinstance(rec, IpalMessage):
            h.update(serialize_message(rec).encode("ascii"))
        else:
            h.update(serialize_state(rec).encode("ascii"))
        h.update(b"\n")
    return h.hexdigest()
