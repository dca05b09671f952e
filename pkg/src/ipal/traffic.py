"""Deterministic synthetic industrial traffic.

Each connection polls on a fixed period: slot k fires at ``k*period``
plus a clipped Gaussian jitter draw, cycling through the configured
message types.  Read types produce a request/response pair whose response
carries the process variables; write types produce a command carrying the
variables and an empty command_response.

Variable values are sampled on the *schedule* (slot index), not the
jittered wall clock, so the value sequence of a sine or constant process
is bit-identical across seeds and repeats exactly with its period.  All
randomness (jitter, random walks) flows from per-stream generators
derived from the scenario seed; the same spec and seed always produce the
same stream.
"""

from __future__ import annotations

import heapq
import json
import math
import random
from dataclasses import dataclass, field
from typing import Iterator

from .errors import DataError
from .model import IpalMessage

READ_TYPES = frozenset((1, 2, 3, 4))
WRITE_TYPES = frozenset((5, 6, 15, 16))


@dataclass
class ValueProcess:
    process: str  # constant | sine | random-walk
    value: float | bool | str = 0.0      # constant
    amplitude: float = 1.0               # sine
    period: float = 10.0                 # sine
    offset: float = 0.0                  # sine
    step: float = 1.0                    # random-walk
    start: float = 0.0                   # random-walk

    def validate(self, name: str) -> None:
        if self.process not in ("constant", "sine", "random-walk"):
            raise DataError(f"variable {name!r}: unknown process {self.process!r}")
        if self.process == "sine" and not (self.period > 0):
            raise DataError(f"variable {name!r}: sine period must be > 0")
        if self.process == "random-walk" and not (self.step >= 0):
            raise DataError(f"variable {name!r}: step must be >= 0")


@dataclass
class Connection:
    source: str
    destination: str
    period: float
    jitter: float = 0.0
    response_delay: float = 0.0
    message_types: list[int] = field(default_factory=lambda: [3])
    variables: dict[str, ValueProcess] = field(default_factory=dict)

    def validate(self, index: int) -> None:
        if not (self.period > 0):
            raise DataError(f"connection {index}: polling period must be > 0")
        if self.jitter < 0:
            raise DataError(f"connection {index}: jitter must be >= 0")
        if self.response_delay < 0:
            raise DataError(f"connection {index}: response delay must be >= 0")
        if not self.message_types:
            raise DataError(f"connection {index}: needs at least one message type")
        if not self.source or not self.destination:
            raise DataError(f"connection {index}: endpoints must be non-empty")
        for name, proc in self.variables.items():
            proc.validate(name)


@dataclass
class ScenarioSpec:
    duration: float
    connections: list[Connection]
    seed: int = 0

    def validate(self) -> None:
        if not (self.duration > 0):
            raise DataError("scenario duration must be > 0")
        if not self.connections:
            raise DataError("scenario needs at least one connection")
        for i, conn in enumerate(self.connections):
            conn.validate(i)


def load_scenario(data: dict | str) -> ScenarioSpec:
    if isinstance(data, str):
        with open(data, "r", encoding="utf-8") as fp:
            data = json.load(fp)
    try:
        conns = [
            Connection(
                **{**c, "variables": {
                    name: ValueProcess(**vp) for name, vp in c.get("variables", {}).items()
                }}
            )
            for c in data.get("connections", [])
        ]
        spec = ScenarioSpec(
            duration=data["duration"], connections=conns, seed=data.get("seed", 0)
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"bad scenario spec: {exc}") from None
    spec.validate()
    return spec


def _value_at(proc: ValueProcess, slot_time: float, rng: random.Random | None,
              walk_state: list[float]):
    if proc.process == "constant":
        return proc.value
    if proc.process == "sine":
        phase = (slot_time % proc.period) / proc.period
        return proc.offset + proc.amplitude * math.sin(2 * math.pi * phase)
    walk_state[0] += rng.gauss(0.0, proc.step)
    return walk_state[0]


def _connection_events(conn: Connection, index: int, duration: float,
                       seed: int) -> Iterator[tuple]:
    """Yield (timestamp, index, slot, phase, message) sort keys per pair.

    Jitter is clipped to +-0.49*period so slots never reorder within one
    connection, keeping the merged stream time-sorted.
    """
    jitter_rng = random.Random(f"{seed}:{index}:jitter")
    walk_rngs = {name: random.Random(f"{seed}:{index}:{name}")
                 for name, proc in conn.variables.items()
                 if proc.process == "random-walk"}
    walk_states = {name: [proc.start] for name, proc in conn.variables.items()}
    clip = 0.49 * conn.period

    slot = 0
    while True:
        slot_time = slot * conn.period
        if slot_time >= duration:
            return
        jitter = jitter_rng.gauss(0.0, conn.jitter) if conn.jitter else 0.0
        jitter = max(-clip, min(clip, jitter))
        t_req = slot_time + jitter
        mtype = conn.message_types[slot % len(conn.message_types)]
        is_write = mtype in WRITE_TYPES

        values = {
            name: _value_at(proc, slot_time, walk_rngs.get(name), walk_states[name])
            for name, proc in sorted(conn.variables.items())
        }
        nvars = len(values)

        if is_write:
            first = dict(
                activity="command", process_data=values, length=13 + 2 * nvars)
            second = dict(
                activity="command_response", process_data={}, length=12)
        else:
            first = dict(activity="request", process_data={}, length=12)
            second = dict(
                activity="response", process_data=values, length=9 + 2 * nvars)

        yield (t_req, index, slot, 0, mtype, first)
        yield (t_req + conn.response_delay, index, slot, 1, mtype, second)
        slot += 1


def generate(spec: ScenarioSpec) -> Iterator[IpalMessage]:
    """Produce the benign, correlated, time-ordered message stream."""
    spec.validate()
    streams = [
        _connection_events(conn, i, spec.duration, spec.seed)
        for i, conn in enumerate(spec.connections)
    ]
    request_ids: dict[tuple[int, int], int] = {}
    for next_id, event in enumerate(heapq.merge(*streams)):
        t, index, slot, phase, mtype, part = event
        conn = spec.connections[index]
        forward = part["activity"] in ("request", "command")
        if forward:
            request_ids[(index, slot)] = next_id
            responds_to = []
        else:
            responds_to = [request_ids.pop((index, slot))]
        yield IpalMessage(
            id=next_id,
            timestamp=t,
            protocol="synthetic",
            length=part["length"],
            malicious=False,
            source=conn.source if forward else conn.destination,
            destination=conn.destination if forward else conn.source,
            message_type=mtype,
            activity=part["activity"],
            responds_to=responds_to,
            process_data=part["process_data"],
        )
