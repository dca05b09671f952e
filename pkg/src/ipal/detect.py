"""Detector lifecycle shared by all detectors.

Train on a benign stream, persist the learned model, detect over a new
stream, emit alerts.  The contracts enforced here rather than in each
detector: training refuses malicious-labeled records, the stream kind
(message vs state) must match the detector, streams must be time-ordered,
and a saved-and-reloaded model behaves identically to the original
(payloads are plain JSON types, floats round-trip exactly).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

from . import __version__
from .errors import DataError, UsageError
from .model import AlertEvent, IpalMessage, StateMessage

_REGISTRY: dict[str, type["Detector"]] = {}


def register(cls: type["Detector"]) -> type["Detector"]:
    _REGISTRY[cls.name] = cls
    return cls


def get_detector(name: str) -> type["Detector"]:
    try:
        return _REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(_REGISTRY))
        raise UsageError(f"unknown detector {name!r} (known: {known})") from None


def detector_names() -> list[str]:
    return sorted(_REGISTRY)


class Detector:
    """Base class; subclasses implement train_payload and detect_stream."""

    name = ""
    input_kind = "message"   # "message" | "state"
    output_kind = "point"    # "point" | "interval"
    defaults: dict = {}

    @classmethod
    def config(cls, overrides: dict | None = None) -> dict:
        cfg = dict(cls.defaults)
        for key, value in (overrides or {}).items():
            if key not in cfg:
                raise UsageError(f"{cls.name}: unknown hyperparameter {key!r}")
            cfg[key] = value
        return cfg

    @classmethod
    def train_payload(cls, records: Sequence, cfg: dict) -> dict:
        raise NotImplementedError

    @classmethod
    def detect_stream(cls, payload: dict, cfg: dict, records: Iterable,
                      score_sink: Callable[[float, float], None] | None = None
                      ) -> Iterator[AlertEvent]:
        raise NotImplementedError


@dataclass
class DetectorModel:
    detector: str
    hyperparams: dict
    payload: dict
    summary: dict = field(default_factory=dict)
    version: str = __version__

    def to_json(self) -> str:
        return json.dumps(
            {
                "detector": self.detector,
                "version": self.version,
                "hyperparams": self.hyperparams,
                "payload": self.payload,
                "summary": self.summary,
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "DetectorModel":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"malformed model file: {exc}") from None
        for key in ("detector", "hyperparams", "payload"):
            if key not in raw:
                raise DataError(f"model file missing {key!r}")
        return cls(
            detector=raw["detector"],
            hyperparams=raw["hyperparams"],
            payload=raw["payload"],
            summary=raw.get("summary", {}),
            version=raw.get("version", "unknown"),
        )


def save_model(model: DetectorModel, path: str) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fp:
        fp.write(model.to_json())
        fp.write("\n")


def load_model(path: str) -> DetectorModel:
    with open(path, "r", encoding="utf-8") as fp:
        return DetectorModel.from_json(fp.read())


def _record_kind(record) -> str:
    if isinstance(record, IpalMessage):
        return "message"
    if isinstance(record, StateMessage):
        return "state"
    raise DataError(f"unsupported record type {type(record).__name__}")


def _check_ordered_and_kind(records: Sequence, kind: str, stage: str) -> None:
    prev = None
    for rec in records:
        if _record_kind(rec) != kind:
            raise DataError(
                f"kind mismatch: {stage} expects a {kind} stream, "
                f"got a {_record_kind(rec)} record"
            )
        if prev is not None and rec.timestamp < prev:
            raise DataError(f"{stage} stream is not time-ordered")
        prev = rec.timestamp


def train(name: str, stream: Iterable, config: dict | None = None) -> DetectorModel:
    """Learn a model from a benign stream.

    Any malicious-labeled record is a refusal (benign-only training);
    unlabeled records are accepted.
    """
    cls = get_detector(name)
    cfg = cls.config(config)
    records = list(stream)
    if not records:
        raise DataError("insufficient data: empty training stream")
    _check_ordered_and_kind(records, cls.input_kind, "training")
    for i, rec in enumerate(records):
        if rec.malicious is True:
            ident = getattr(rec, "id", None)
            where = f"id {ident}" if ident is not None else f"record {i}"
            raise DataError(
                f"benign-only training violated: malicious record at {where}"
            )
    payload = cls.train_payload(records, cfg)
    summary = {
        "records": len(records),
        "time_span": [records[0].timestamp, records[-1].timestamp],
    }
    return DetectorModel(detector=name, hyperparams=cfg, payload=payload,
                         summary=summary)


def detect(model: DetectorModel, stream: Iterable,
           score_sink: Callable[[float, float], None] | None = None
           ) -> Iterator[AlertEvent]:
    """Run a trained model over a stream, yielding time-ordered alerts.

    Detection is causal and pure: an alert at time t depends only on
    records up to t, and repeated runs over the same stream yield the
    same alerts.
    """
    cls = get_detector(model.detector)
    cfg = cls.config(model.hyperparams)
    kind = cls.input_kind
    prev = None

    def checked(records: Iterable) -> Iterator:
        nonlocal prev
        for rec in records:
            if _record_kind(rec) != kind:
                raise DataError(
                    f"kind mismatch: {model.detector} expects a {kind} stream, "
                    f"got a {_record_kind(rec)} record"
                )
            if prev is not None and rec.timestamp < prev:
                raise DataError("detection stream is not time-ordered")
            prev = rec.timestamp
            yield rec

    yield from cls.detect_stream(model.payload, cfg, checked(stream),
                                 score_sink=score_sink)
