"""Discrete-time Markov chain over the packet sequence of a connection.

Training records, per connection (the unordered endpoint pair, so both
directions form one chain), the set of observed states and the set of
observed ordered state pairs.  A state is the message type, optionally
extended by the packet length, which separates requests from responses
when a protocol uses the same type in both directions.

Detection keeps one previous-state register per connection: an unseen
state raises a "state" violation, a seen state reached over an unseen
transition raises a "transition" violation.  The register advances in
both cases.  Only the plain (unreduced) chain is implemented.
"""

from __future__ import annotations

import json
import logging
from typing import Iterable, Iterator, Sequence

from ..detect import Detector, register
from ..errors import DataError
from ..model import AlertEvent, IpalMessage

log = logging.getLogger(__name__)


def connection_key(msg: IpalMessage) -> str:
    return json.dumps(sorted((msg.source, msg.destination)), separators=(",", ":"))


def state_of(msg: IpalMessage, include_length: bool) -> str:
    state = [msg.message_type, msg.length] if include_length else [msg.message_type]
    return json.dumps(state, separators=(",", ":"))


@register
class Dtmc(Detector):
    name = "dtmc"
    input_kind = "message"
    output_kind = "point"
    defaults = {
        "include_length": True,
        "reduction": "none",  # the only implemented reduction mode
    }

    @classmethod
    def train_payload(cls, records: Sequence[IpalMessage], cfg: dict) -> dict:
        if cfg["reduction"] != "none":
            raise DataError(f"unsupported reduction mode {cfg['reduction']!r}")
        chains: dict[str, dict] = {}
        prev: dict[str, str] = {}
        for msg in records:
            conn = connection_key(msg)
            state = state_of(msg, cfg["include_length"])
            chain = chains.setdefault(conn, {"states": set(), "transitions": set()})
            chain["states"].add(state)
            if conn in prev:
                chain["transitions"].add(f"{prev[conn]}->{state}")
            prev[conn] = state
        if not chains:
            raise DataError("insufficient data: empty training stream")
        return {
            "connections": {
                conn: {
                    "states": sorted(chain["states"]),
                    "transitions": sorted(chain["transitions"]),
                }
                for conn, chain in sorted(chains.items())
            }
        }

    @classmethod
    def detect_stream(cls, payload: dict, cfg: dict, records: Iterable[IpalMessage],
                      score_sink=None) -> Iterator[AlertEvent]:
        connections = {
            conn: {
                "states": frozenset(chain["states"]),
                "transitions": frozenset(chain["transitions"]),
            }
            for conn, chain in payload["connections"].items()
        }
        prev: dict[str, str] = {}
        for msg in records:
            conn = connection_key(msg)
            state = state_of(msg, cfg["include_length"])
            chain = connections.get(conn)
            violation = None
            if chain is None or state not in chain["states"]:
                violation = "state"
            elif conn in prev and f"{prev[conn]}->{state}" not in chain["transitions"]:
                violation = "transition"
            prev[conn] = state
            if violation:
                yield AlertEvent(detector=cls.name, kind="point",
                                 message_ids=[msg.id], score=1.0,
                                 violation_class=violation)
