"""Out-of-alphabet range check over process states.

Training records, per variable, either the numeric bounds seen or the set
of categorical values seen (strings and booleans are categorical, as is
any variable that ever mixes types).  Detection flags a state when any
variable falls outside its widened numeric bounds
``[min - delta*span, max + delta*span]`` (closed interval, span =
max - min), takes an unseen categorical value, or was never seen at all.
Contiguous flagged states form one interval alert whose score is the
largest number of simultaneously violating variables.
"""

from __future__ import annotations

import json
from typing import Iterable, Iterator, Sequence

from ..detect import Detector, register
from ..errors import DataError
from ..model import AlertEvent, StateMessage


def _token(value) -> str:
    return json.dumps(value, separators=(",", ":"), ensure_ascii=True)


def _is_numeric(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


@register
class OutOfAlphabet(Detector):
    name = "ooa"
    input_kind = "state"
    output_kind = "interval"
    defaults = {"delta": 0.0}

    @classmethod
    def train_payload(cls, records: Sequence[StateMessage], cfg: dict) -> dict:
        if cfg["delta"] < 0:
            raise DataError("ooa delta must be >= 0")
        numeric: dict[str, list[float]] = {}
        tokens: dict[str, set[str]] = {}
        categorical: set[str] = set()
        for st in records:
            for name, value in st.state.items():
                tokens.setdefault(name, set()).add(_token(value))
                if _is_numeric(value) and name not in categorical:
                    bounds = numeric.setdefault(name, [value, value])
                    bounds[0] = min(bounds[0], value)
                    bounds[1] = max(bounds[1], value)
                else:
                    categorical.add(name)
                    numeric.pop(name, None)
        if not tokens:
            raise DataError("insufficient data: no process variables in training")
        variables = {}
        for name in sorted(tokens):
            if name in categorical:
                variables[name] = {"kind": "categorical",
                                   "values": sorted(tokens[name])}
            else:
                lo, hi = numeric[name]
                variables[name] = {"kind": "numeric",
                                   "min": float(lo), "max": float(hi)}
        return {"variables": variables}

    @classmethod
    def detect_stream(cls, payload: dict, cfg: dict, records: Iterable[StateMessage],
                      score_sink=None) -> Iterator[AlertEvent]:
        variables = payload["variables"]
        delta = cfg["delta"]
        open_start: float | None = None
        open_end = 0.0
        open_score = 0.0
        for st in records:
            violating = 0
            for name, value in st.state.items():
                spec = variables.get(name)
                if spec is None:
                    violating += 1
                elif spec["kind"] == "numeric":
                    if not _is_numeric(value):
                        violating += 1
                    else:
                        span = spec["max"] - spec["min"]
                        if value < spec["min"] - delta * span or \
                                value > spec["max"] + delta * span:
                            violating += 1
                elif _token(value) not in spec["values"]:
                    violating += 1
            if violating:
                if open_start is None:
                    open_start = st.timestamp
                open_end = st.timestamp
                open_score = max(open_score, float(violating))
            elif open_start is not None:
                yield AlertEvent(detector=cls.name, kind="interval",
                                 start=open_start, end=open_end, score=open_score)
                open_start = None
                open_score = 0.0
        if open_start is not None:
            yield AlertEvent(detector=cls.name, kind="interval",
                             start=open_start, end=open_end, score=open_score)
