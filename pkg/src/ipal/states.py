"""Process-state aggregation and import.

Aggregation is last-value-hold with fixed-interval emission: each emitted
snapshot carries, for every variable seen so far, the most recently
communicated value.  A snapshot is labeled malicious exactly when at
least one message in the interval it closes was malicious; an interval
whose messages are all unlabeled yields an unlabeled snapshot, and an
empty interval yields a benign one.  Snapshots before the first message
carrying any variable are suppressed rather than emitted empty.

``import_state_csv`` restores pre-computed state logs shipped with
datasets.  Numeric parsing is strict: a value like ``1,234.5`` is an
error unless a thousands separator is configured, never a silently wrong
number.
"""

from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Iterator

from .errors import DataError
from .model import IpalMessage, StateMessage

log = logging.getLogger(__name__)


@dataclass
class AggregatorConfig:
    interval: float = 1.0
    start_policy: str = "aligned-to-epoch"  # or "first-message"

    def validate(self) -> None:
        if not (self.interval > 0):
            raise DataError("aggregation interval must be > 0")
        if self.start_policy not in ("aligned-to-epoch", "first-message"):
            raise DataError(f"unknown start policy {self.start_policy!r}")


def aggregate(msgs: Iterable[IpalMessage],
              cfg: AggregatorConfig | None = None) -> Iterator[StateMessage]:
    """Emit one snapshot per elapsed interval over a time-ordered stream.

    With the aligned-to-epoch policy, boundaries sit on multiples of the
    interval; with first-message, the grid is anchored at the first
    message (which then lands exactly on the first emitted snapshot).
    A message with timestamp t belongs to the interval ending at the
    first boundary >= t.
    """
    cfg = cfg or AggregatorConfig()
    cfg.validate()
    step = cfg.interval

    state: dict = {}
    boundary: float | None = None
    saw_malicious = saw_benign = saw_unlabeled = False
    started = False
    prev_ts: float | None = None

    def close_interval(ts: float) -> StateMessage | None:
        nonlocal saw_malicious, saw_benign, saw_unlabeled, started
        if saw_malicious:
            label: bool | None = True
        elif saw_unlabeled and not saw_benign:
            label = None
        else:
            label = False
        saw_malicious = saw_benign = saw_unlabeled = False
        if not state and not started:
            return None
        started = True
        return StateMessage(timestamp=ts, state=dict(state), malicious=label)

    for msg in msgs:
        ts = msg.timestamp
        if prev_ts is not None and ts < prev_ts:
            raise DataError(f"non-monotone timestamp at message {msg.id}")
        prev_ts = ts
        if boundary is None:
            if cfg.start_policy == "first-message":
                boundary = ts
            else:
                boundary = math.ceil(ts / step) * step
        while ts > boundary:
            emitted = close_interval(boundary)
            if emitted is not None:
                yield emitted
            boundary += step
        state.update(msg.process_data)
        if msg.malicious is True:
            saw_malicious = True
        elif msg.malicious is False:
            saw_benign = True
        else:
            saw_unlabeled = True

    if boundary is not None:
        emitted = close_interval(boundary)
        if emitted is not None:
            yield emitted


def states_to_messages(states: Iterable[StateMessage],
                       protocol: str = "state") -> Iterator[IpalMessage]:
    """Wrap snapshots as messages, e.g. to feed imported state logs back
    through the aggregator or the message pipeline."""
    for i, st in enumerate(states):
        yield IpalMessage(
            id=i,
            timestamp=st.timestamp,
            protocol=protocol,
            length=0,
            malicious=st.malicious,
            source="state",
            destination="",
            message_type="state",
            activity="response",
            responds_to=[],
            process_data=dict(st.state),
        )


@dataclass
class ColumnMap:
    """How to read a delimited state log."""

    timestamp: str
    label: str | None = None
    malicious_tokens: list[str] = field(default_factory=lambda: ["Attack", "attack", "1"])
    benign_tokens: list[str] = field(default_factory=lambda: ["Normal", "normal", "0"])
    timestamp_format: str | None = None  # strptime format; default epoch/ISO
    thousands_sep: str | None = None
    decimal_sep: str = "."
    delimiter: str = ","
    drop: list[str] = field(default_factory=list)


_THOUSANDS_RE = re.compile(r"^[+-]?\d{1,3}(?:[,.]\d{3})+(?:[.,]\d+)?$")


def _parse_value(raw: str, cmap: ColumnMap):
    raw = raw.strip()
    if raw == "":
        return ""
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    if cmap.thousands_sep or cmap.decimal_sep != ".":
        cooked = raw
        if cmap.thousands_sep:
            cooked = cooked.replace(cmap.thousands_sep, "")
        if cmap.decimal_sep != ".":
            cooked = cooked.replace(cmap.decimal_sep, ".")
        try:
            return float(cooked)
        except ValueError:
            pass
    if _THOUSANDS_RE.match(raw):
        raise DataError(
            f"ambiguous grouped number {raw!r}: configure thousands_sep/decimal_sep"
        )
    return raw


def _parse_timestamp(raw: str, cmap: ColumnMap) -> float:
    raw = raw.strip()
    if cmap.timestamp_format:
        try:
            dt = datetime.strptime(raw, cmap.timestamp_format)
        except ValueError as exc:
            raise DataError(f"unparseable timestamp {raw!r}: {exc}") from None
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return dt.timestamp()
    try:
        return float(raw)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(raw)
    except ValueError:
        raise DataError(f"unparseable timestamp {raw!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def import_state_csv(path: str, cmap: ColumnMap) -> Iterator[StateMessage]:
    """One snapshot per row of a delimited state log."""
    with open(path, "r", encoding="utf-8-sig", newline="") as fp:
        reader = csv.DictReader(fp, delimiter=cmap.delimiter)
        fields = [f.strip() for f in reader.fieldnames or []]
        if cmap.timestamp not in fields:
            raise DataError(f"missing timestamp column {cmap.timestamp!r}")
        if cmap.label is not None and cmap.label not in fields:
            raise DataError(f"missing label column {cmap.label!r}")
        skip = {cmap.timestamp, cmap.label, *cmap.drop}
        warned_tokens: set[str] = set()
        for row in reader:
            row = {(k or "").strip(): v for k, v in row.items()}
            ts = _parse_timestamp(row[cmap.timestamp], cmap)
            label: bool | None = None
            if cmap.label is not None:
                token = (row[cmap.label] or "").strip()
                if token in cmap.malicious_tokens:
                    label = True
                elif token in cmap.benign_tokens:
                    label = False
                elif token not in warned_tokens:
                    warned_tokens.add(token)
                    log.warning("unmapped label token %r treated as unlabeled", token)
            values = {
                name: _parse_value(raw, cmap)
                for name, raw in row.items()
                if name not in skip and name
            }
            yield StateMessage(timestamp=ts, state=values, malicious=label)


def load_column_map(data: dict | str) -> ColumnMap:
    if isinstance(data, str):
        import json

        with open(data, "r", encoding="utf-8") as fp:
            data = json.load(fp)
    if not isinstance(data, dict) or "timestamp" not in data:
        raise DataError("column map must be an object naming the timestamp column")
    try:
        return ColumnMap(**data)
    except TypeError as exc:
        raise DataError(f"bad column map: {exc}") from None
