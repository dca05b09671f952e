"""Capture-to-message transcription.

A single pass over a capture file: Ethernet/IPv4/TCP headers are parsed
just far enough to find Modbus/TCP payload, segments are reassembled per
connection direction (ADUs may span or share TCP segments), requests and
responses are correlated per connection and transaction identifier, and
each ADU becomes one abstract message.

Frames that carry no industrial payload (handshakes, bare ACKs, other
protocols) are counted as skipped, so ``frames == transcribed + skipped``
always holds.  Malicious labels are attached from an attack-interval list
when provided; otherwise messages stay unlabeled.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from typing import Iterator, Sequence

from . import modbus, pcap
from .errors import DataError
from .model import IpalMessage

log = logging.getLogger(__name__)

ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_VLAN = 0x8100


@dataclass
class Segment:
    src: str
    sport: int
    dst: str
    dport: int
    payload: bytes


def parse_frame(data: bytes, link_type: int) -> Segment | None:
    """Extract the TCP segment from a raw frame; None if not IPv4/TCP."""
    if link_type == pcap.LINKTYPE_ETHERNET:
        if len(data) < 14:
            return None
        ethertype = struct.unpack(">H", data[12:14])[0]
        offset = 14
        if ethertype == ETHERTYPE_VLAN:
            if len(data) < 18:
                return None
            ethertype = struct.unpack(">H", data[16:18])[0]
            offset = 18
        if ethertype != ETHERTYPE_IPV4:
            return None
        data = data[offset:]
    if len(data) < 20 or data[0] >> 4 != 4:
        return None
    ihl = (data[0] & 0x0F) * 4
    total_len = struct.unpack(">H", data[2:4])[0]
    frag = struct.unpack(">H", data[6:8])[0]
    if frag & 0x1FFF:  # fragmented IP is out of scope
        return None
    if data[9] != 6 or len(data) < ihl + 20:
        return None
    src = ".".join(str(b) for b in data[12:16])
    dst = ".".join(str(b) for b in data[16:20])
    tcp = data[ihl:total_len] if 0 < total_len <= len(data) else data[ihl:]
    if len(tcp) < 20:
        return None
    sport, dport = struct.unpack(">HH", tcp[:4])
    data_off = (tcp[12] >> 4) * 4
    if len(tcp) < data_off:
        return None
    return Segment(src, sport, dst, dport, tcp[data_off:])


@dataclass
class CorrelationTable:
    """Outstanding requests per (connection, transaction, unit).

    Entries older than ``window`` seconds are evicted; a new request with
    the same key replaces any outstanding one.
    """

    window: float = 30.0
    _pending: dict[tuple, modbus.RequestInfo] = field(default_factory=dict)

    def store(self, key: tuple, info: modbus.RequestInfo) -> None:
        if key in self._pending:
            log.debug("request %s retransmitted before a response", key)
        self._pending[key] = info
        if len(self._pending) > 4096:
            self._sweep(info.timestamp)

    def match(self, key: tuple, now: float) -> modbus.RequestInfo | None:
        info = self._pending.pop(key, None)
        if info is not None and now - info.timestamp > self.window:
            return None
        return info

    def _sweep(self, now: float) -> None:
        stale = [k for k, v in self._pending.items() if now - v.timestamp > self.window]
        for k in stale:
            del self._pending[k]


class Transcription:
    """Iterate to get messages; ``summary`` is complete after exhaustion."""

    def __init__(self, pcap_path: str, *,
                 rules: Sequence[modbus.InterpretationRule] = (),
                 port: int = modbus.MODBUS_PORT,
                 labels: Sequence[tuple[float, float]] = (),
                 activity_map: dict | None = None,
                 correlation_window: float = 30.0):
        self.pcap_path = pcap_path
        self.rules = list(rules)
        self.port = port
        self.labels = sorted(labels)
        self.activity_map = activity_map
        self.table = CorrelationTable(correlation_window)
        self.summary = {"frames": 0, "transcribed": 0, "skipped": 0, "messages": 0}

    def _label(self, ts: float) -> bool | None:
        if not self.labels:
            return None
        for start, end in self.labels:
            if start <= ts <= end:
                return True
        return False

    def __iter__(self) -> Iterator[IpalMessage]:
        with open(self.pcap_path, "rb") as fp:
            reader = pcap.PcapReader(fp)
            if reader.link_type not in pcap.SUPPORTED_LINKTYPES:
                raise DataError(f"unsupported link type {reader.link_type}")
            buffers: dict[tuple, bytearray] = {}
            next_id = 0
            for frame in reader:
                self.summary["frames"] += 1
                seg = parse_frame(frame.data, reader.link_type)
                if seg is None or not seg.payload or \
                        self.port not in (seg.sport, seg.dport):
                    self.summary["skipped"] += 1
                    continue
                self.summary["transcribed"] += 1

                toward_server = seg.dport == self.port
                if toward_server:
                    client = f"{seg.src}:{seg.sport}"
                    server = f"{seg.dst}:{seg.dport}"
                else:
                    client = f"{seg.dst}:{seg.dport}"
                    server = f"{seg.src}:{seg.sport}"
                conn = (client, server)

                buf = buffers.setdefault((conn, toward_server), bytearray())
                buf.extend(seg.payload)
                while True:
                    adu_len = self._complete_adu(buf)
                    if adu_len is None:
                        break
                    adu_bytes = bytes(buf[:adu_len])
                    del buf[:adu_len]
                    msg = self._handle_adu(adu_bytes, toward_server, conn,
                                           frame.timestamp, client, server,
                                           next_id)
                    if msg is not None:
                        next_id += 1
                        self.summary["messages"] += 1
                        yield msg

    @staticmethod
    def _complete_adu(buf: bytearray) -> int | None:
        if len(buf) < 7:
            return None
        protocol, length = struct.unpack(">HH", buf[2:6])
        if protocol != 0 or length < 2:
            # desynchronized stream; drop the buffer and log once
            log.debug("dropping %d bytes of non-MBAP payload", len(buf))
            buf.clear()
            return None
        total = 6 + length
        return total if len(buf) >= total else None

    def _handle_adu(self, adu_bytes: bytes, toward_server: bool, conn: tuple,
                    timestamp: float, client: str, server: str,
                    msg_id: int) -> IpalMessage | None:
        adu = modbus.parse_adu(adu_bytes)
        if adu is None:
            return None
        key = (conn, adu.transaction, adu.unit)
        request_info = None
        if not toward_server:
            request_info = self.table.match(key, timestamp)
        msg = modbus.dissect_modbus(
            adu_bytes, toward_server,
            timestamp=timestamp, msg_id=msg_id,
            client=client, server=server,
            rules=self.rules, activity_map=self.activity_map,
            request_info=request_info,
            label=self._label(timestamp),
        )
        if msg is not None and toward_server:
            params = modbus.request_params(adu) or (0, 0)
            self.table.store(key, modbus.RequestInfo(
                msg.id, adu.function, params[0], params[1], timestamp))
        return msg


def transcribe(pcap_path: str, **kwargs) -> Transcription:
    """Build a transcription pass over one capture file."""
    return Transcription(pcap_path, **kwargs)
