"""Timing detectors over periodic industrial traffic.

Both detectors look at the elapsed time between consecutive packets of
the same kind.  ``iat-mean`` groups packets by class key (source,
destination, message type, activity) and alerts when an inter-arrival
time leaves the band ``mean +- k*stddev``; the stddev is floored so a
perfectly regular flow does not yield a zero-width band, and a relative
band (fraction of the mean) can be selected instead.  ``iat-range``
groups by content key (class key plus a canonical hash of the process
data) and alerts when an inter-arrival time leaves the widened observed
range ``[min*(1-eps), max*(1+eps)]``; the interval is closed, a value
exactly on the widened bound does not alert.

Keys with fewer than two training inter-arrival times are dropped (with a
warning); packets of a key the model never saw alert once per key unless
that is disabled.
"""

from __future__ import annotations

import json
import logging
from typing import Callable, Iterable, Iterator, Sequence

from ..detect import Detector, register
from ..errors import DataError
from ..model import AlertEvent, IpalMessage, content_hash

log = logging.getLogger(__name__)


def class_key(msg: IpalMessage) -> str:
    return json.dumps([msg.source, msg.destination, msg.message_type, msg.activity],
                      separators=(",", ":"))


def content_key(msg: IpalMessage) -> str:
    return json.dumps([msg.source, msg.destination, msg.message_type, msg.activity,
                       content_hash(msg.process_data)], separators=(",", ":"))


def _collect_iats(msgs: Iterable[IpalMessage],
                  keyfn: Callable[[IpalMessage], str]) -> dict[str, list[float]]:
    last: dict[str, float] = {}
    iats: dict[str, list[float]] = {}
    for msg in msgs:
        key = keyfn(msg)
        if key in last:
            iats.setdefault(key, []).append(msg.timestamp - last[key])
        last[key] = msg.timestamp
    return iats


@register
class IatMean(Detector):
    name = "iat-mean"
    input_kind = "message"
    output_kind = "point"
    defaults = {
        "k": 3.0,                # band half-width in stddevs (or in means)
        "stddev_floor": 0.001,   # seconds; avoids zero-width bands
        "band": "stddev",        # "stddev" | "relative"
        "relative_margin": 0.1,  # band half-width as fraction of mean
        "alert_unseen": True,
    }

    @classmethod
    def train_payload(cls, records: Sequence[IpalMessage], cfg: dict) -> dict:
        iats = _collect_iats(records, class_key)
        keys = {}
        for key, values in sorted(iats.items()):
            n = len(values)
            if n < 2:
                log.warning("iat-mean: dropping key %s with %d inter-arrival(s)",
                            key, n)
                continue
            mean = sum(values) / n
            var = sum((v - mean) ** 2 for v in values) / n
            keys[key] = {"mean": mean, "stddev": var ** 0.5, "n": n}
        if not keys:
            raise DataError("insufficient data: no class key has 2 inter-arrival times")
        log.info("iat-mean: %d keys retained, band=%s", len(keys), cfg["band"])
        return {"keys": keys}

    @classmethod
    def detect_stream(cls, payload: dict, cfg: dict, records: Iterable[IpalMessage],
                      score_sink=None) -> Iterator[AlertEvent]:
        keys = payload["keys"]
        last: dict[str, float] = {}
        alerted_unseen: set[str] = set()
        for msg in records:
            key = class_key(msg)
            stats = keys.get(key)
            if stats is None:
                if cfg["alert_unseen"] and key not in alerted_unseen:
                    alerted_unseen.add(key)
                    yield AlertEvent(detector=cls.name, kind="point",
                                     message_ids=[msg.id], score=1.0,
                                     violation_class="unseen-key")
                continue
            prev = last.get(key)
            last[key] = msg.timestamp
            if prev is None:
                continue
            iat = msg.timestamp - prev
            if cfg["band"] == "relative":
                half = cfg["relative_margin"] * abs(stats["mean"])
            else:
                half = cfg["k"] * max(stats["stddev"], cfg["stddev_floor"])
            deviation = abs(iat - stats["mean"])
            if deviation > half:
                yield AlertEvent(detector=cls.name, kind="point",
                                 message_ids=[msg.id],
                                 score=deviation / half if half > 0 else float("inf"))


@register
class IatRange(Detector):
    name = "iat-range"
    input_kind = "message"
    output_kind = "point"
    defaults = {
        "epsilon": 0.05,   # relative widening of the observed range
        "alert_unseen": True,
    }

    @classmethod
    def train_payload(cls, records: Sequence[IpalMessage], cfg: dict) -> dict:
        iats = _collect_iats(records, content_key)
        keys = {}
        for key, values in sorted(iats.items()):
            if len(values) < 2:
                log.warning("iat-range: dropping key %s with %d inter-arrival(s)",
                            key, len(values))
                continue
            keys[key] = {"min": min(values), "max": max(values), "n": len(values)}
        if not keys:
            raise DataError("insufficient data: no content key has 2 inter-arrival times")
        log.info("iat-range: %d keys retained", len(keys))
        return {"keys": keys}

    @classmethod
    def detect_stream(cls, payload: dict, cfg: dict, records: Iterable[IpalMessage],
                      score_sink=None) -> Iterator[AlertEvent]:
        keys = payload["keys"]
        eps = cfg["epsilon"]
        last: dict[str, float] = {}
        alerted_unseen: set[str] = set()
        for msg in records:
            key = content_key(msg)
            bounds = keys.get(key)
            if bounds is None:
                if cfg["alert_unseen"] and key not in alerted_unseen:
                    alerted_unseen.add(key)
                    yield AlertEvent(detector=cls.name, kind="point",
                                     message_ids=[msg.id], score=1.0,
                                     violation_class="unseen-key")
                continue
            prev = last.get(key)
            last[key] = msg.timestamp
            if prev is None:
                continue
            iat = msg.timestamp - prev
            lo = bounds["min"] * (1 - eps)
            hi = bounds["max"] * (1 + eps)
            if iat < lo or iat > hi:
                span = max(hi - lo, 1e-12)
                score = (lo - iat) / span if iat < lo else (iat - hi) / span
                yield AlertEvent(detector=cls.name, kind="point",
                                 message_ids=[msg.id], score=score)
