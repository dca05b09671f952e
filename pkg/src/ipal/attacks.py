"""Attack injection for controlled experiments.

Seven families over an already-ordered message stream:

* flooding    -- burst-duplicate the most recent packet at a fixed rate
                 (packets/second) inside the window,
* injection   -- insert well-formed clones of observed data packets at
                 off-schedule offsets (0.15..0.85 of the learned period),
* prediction  -- insert clones exactly on the learned schedule: one
                 period after a genuine packet, minus an optional ``lead``
                 (the attacker's transmission-precision knob, default 0),
* copy        -- duplicate each in-window packet with probability rate,
* remove      -- drop each in-window packet with probability rate; no
                 surviving packet is labeled, but the gap timestamps are
                 recorded for scenario-level evaluation,
* swap        -- exchange adjacent in-window packets (and their
                 timestamps, so the stream stays ordered),
* value-manipulation -- overwrite one variable in every in-window data
                 packet.

Every inserted or mutated packet is labeled malicious.  Ids are
reassigned and responds_to references remapped afterwards, dropping refs
to removed or reordered packets, so the output always validates.

Randomness protocol (what an independent replay has to mimic): a single
``random.Random(seed)`` generator; copy and remove draw one uniform per
in-window packet in stream order; swap draws one uniform per in-window
packet not consumed by a previous swap; injection draws an anchor index
and an offset per insertion.
"""

from __future__ import annotations

import random
import statistics
from dataclasses import dataclass, field, replace
from typing import Sequence

from .errors import DataError
from .model import IpalMessage

FAMILIES = ("flooding", "injection", "prediction", "copy", "remove", "swap",
            "value-manipulation")
MUTATION_FAMILIES = ("copy", "remove", "swap")


@dataclass
class AttackSpec:
    family: str
    window: tuple[float, float]
    seed: int = 0
    rate: float | None = None
    count: int | None = None
    source: str | None = None
    destination: str | None = None
    variable: str | None = None
    value: object = None
    lead: float = 0.0

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise DataError(f"unknown attack family {self.family!r}")
        start, end = self.window
        if not start < end:
            raise DataError(f"empty attack window {start}..{end}")
        if self.family in MUTATION_FAMILIES:
            if self.rate is None or not 0 <= self.rate <= 1:
                raise DataError(f"{self.family} needs a rate in [0, 1]")
        elif self.family == "flooding":
            if self.rate is None or not self.rate > 0:
                raise DataError("flooding needs a rate > 0 (packets/second)")
        elif self.family in ("injection", "prediction"):
            if self.count is None or self.count < 1:
                raise DataError(f"{self.family} needs a count >= 1")
        elif self.family == "value-manipulation":
            if not self.variable or self.value is None:
                raise DataError("value-manipulation needs a variable and a value")
        if (self.source is None) != (self.destination is None):
            raise DataError("target connection needs both source and destination")


@dataclass
class InjectionSummary:
    family: str
    window: tuple[float, float]
    seed: int
    mutated: int = 0
    labeled: int = 0
    gaps: list[float] = field(default_factory=list)

    def scenario(self, name: str | None = None) -> dict:
        entry = {
            "name": name or self.family,
            "start": self.window[0],
            "end": self.window[1],
        }
        if self.gaps:
            entry["gaps"] = list(self.gaps)
        return entry


def _in_window(msg: IpalMessage, window: tuple[float, float]) -> bool:
    return window[0] <= msg.timestamp <= window[1]


def _on_connection(msg: IpalMessage, spec: AttackSpec) -> bool:
    if spec.source is None:
        return True
    pair = {msg.source, msg.destination}
    return pair == {spec.source, spec.destination}


def _anchors(msgs: Sequence[IpalMessage], spec: AttackSpec) -> list[IpalMessage]:
    """Data-bearing packets of the target connection, stream-ordered."""
    anchors = [m for m in msgs if m.process_data and _on_connection(m, spec)]
    if spec.source is not None and not any(_on_connection(m, spec) for m in msgs):
        raise DataError(
            f"target connection {spec.source} <-> {spec.destination} absent from stream"
        )
    if len(anchors) < 2:
        raise DataError("not enough data-bearing traffic to learn a schedule")
    return anchors


def _estimate_period(anchors: Sequence[IpalMessage]) -> float:
    diffs = [b.timestamp - a.timestamp for a, b in zip(anchors, anchors[1:])]
    period = statistics.median(diffs)
    if period <= 0:
        raise DataError("cannot learn a schedule from simultaneous packets")
    return period


def _merge_insertions(entries: list[tuple[IpalMessage, int | None]],
                      inserted: list[IpalMessage]) -> list[tuple[IpalMessage, int | None]]:
    """Time-merge; at equal timestamps the pre-existing packet goes first."""
    inserted = sorted(inserted, key=lambda m: m.timestamp)
    out: list[tuple[IpalMessage, int | None]] = []
    i = j = 0
    while i < len(entries) and j < len(inserted):
        if inserted[j].timestamp < entries[i][0].timestamp:
            out.append((inserted[j], None))
            j += 1
        else:
            out.append(entries[i])
            i += 1
    out.extend(entries[i:])
    out.extend((m, None) for m in inserted[j:])
    return out


def inject(stream: Sequence[IpalMessage], spec: AttackSpec
           ) -> tuple[list[IpalMessage], InjectionSummary]:
    """Apply one attack; returns the rewritten stream and a summary."""
    spec.validate()
    msgs = list(stream)
    for a, b in zip(msgs, msgs[1:]):
        if b.timestamp < a.timestamp:
            raise DataError(f"input stream unordered at message {b.id}")
    rng = random.Random(spec.seed)
    summary = InjectionSummary(spec.family, spec.window, spec.seed)
    entries: list[tuple[IpalMessage, int | None]] = [(m, m.id) for m in msgs]

    if spec.family == "copy":
        out = []
        for msg, old in entries:
            out.append((msg, old))
            if _in_window(msg, spec.window) and _on_connection(msg, spec):
                if rng.random() < spec.rate:
                    dup = replace(msg, malicious=True,
                                  responds_to=list(msg.responds_to),
                                  process_data=dict(msg.process_data))
                    out.append((dup, None))
                    summary.mutated += 1
                    summary.labeled += 1
        entries = out

    elif spec.family == "remove":
        out = []
        for msg, old in entries:
            if _in_window(msg, spec.window) and _on_connection(msg, spec) \
                    and rng.random() < spec.rate:
                summary.mutated += 1
                summary.gaps.append(msg.timestamp)
            else:
                out.append((msg, old))
        entries = out

    elif spec.family == "swap":
        i = 0
        while i < len(entries) - 1:
            msg, _ = entries[i]
            if _in_window(msg, spec.window) and _on_connection(msg, spec):
                u = rng.random()
                nxt = entries[i + 1][0]
                if u < spec.rate and _in_window(nxt, spec.window) \
                        and _on_connection(nxt, spec):
                    a, old_a = entries[i]
                    b, old_b = entries[i + 1]
                    entries[i] = (replace(b, timestamp=a.timestamp, malicious=True), old_b)
                    entries[i + 1] = (replace(a, timestamp=b.timestamp, malicious=True), old_a)
                    summary.mutated += 1
                    summary.labeled += 2
                    i += 2
                    continue
            i += 1

    elif spec.family == "value-manipulation":
        hits = 0
        for k, (msg, old) in enumerate(entries):
            if _in_window(msg, spec.window) and _on_connection(msg, spec) \
                    and spec.variable in msg.process_data:
                data = dict(msg.process_data)
                data[spec.variable] = spec.value
                entries[k] = (replace(msg, process_data=data, malicious=True), old)
                hits += 1
        if hits == 0:
            raise DataError(
                f"variable {spec.variable!r} never communicated inside the window"
            )
        summary.mutated = summary.labeled = hits

    elif spec.family == "flooding":
        candidates = [m for m in msgs if _on_connection(m, spec)]
        if spec.source is not None and not candidates:
            raise DataError(
                f"target connection {spec.source} <-> {spec.destination} absent from stream"
            )
        if not candidates:
            raise DataError("cannot flood an empty stream")
        inserted = []
        start, end = spec.window
        step = 1.0 / spec.rate
        tick = start
        idx = 0
        while tick < end:
            while idx < len(candidates) and candidates[idx].timestamp <= tick:
                idx += 1
            template = candidates[idx - 1] if idx else candidates[0]
            inserted.append(replace(
                template, timestamp=tick, malicious=True, responds_to=[],
                process_data=dict(template.process_data)))
            tick += step
        entries = _merge_insertions(entries, inserted)
        summary.mutated = summary.labeled = len(inserted)

    elif spec.family in ("injection", "prediction"):
        anchors = _anchors(msgs, spec)
        period = _estimate_period(anchors)
        start, end = spec.window
        usable = [a for a in anchors if start <= a.timestamp <= end - period]
        if not usable:
            raise DataError("attack window too small for the learned period")
        inserted = []
        if spec.family == "injection":
            for _ in range(spec.count):
                anchor = usable[rng.randrange(len(usable))]
                offset = rng.uniform(0.15, 0.85)
                inserted.append(replace(
                    anchor, timestamp=anchor.timestamp + offset * period,
                    malicious=True, responds_to=[],
                    process_data=dict(anchor.process_data)))
        else:
            for anchor in usable[:spec.count]:
                inserted.append(replace(
                    anchor, timestamp=anchor.timestamp + period - spec.lead,
                    malicious=True, responds_to=[],
                    process_data=dict(anchor.process_data)))
        entries = _merge_insertions(entries, inserted)
        summary.mutated = summary.labeled = len(inserted)

    return _renumber(entries), summary


def _renumber(entries: list[tuple[IpalMessage, int | None]]) -> list[IpalMessage]:
    """Reassign ids in stream order and remap responds_to references.

    References to packets that were removed, or that ended up after their
    referrer (a swap can invert a request/response pair), are dropped to
    keep the stream valid.
    """
    old_to_new = {old: pos for pos, (_, old) in enumerate(entries) if old is not None}
    out = []
    for pos, (msg, _) in enumerate(entries):
        refs = [old_to_new[r] for r in msg.responds_to
                if r in old_to_new and old_to_new[r] < pos]
        out.append(replace(msg, id=pos, responds_to=refs))
    return out
