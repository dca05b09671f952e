"""Modbus/TCP application-layer dissection.

One Modbus ADU (MBAP header + PDU) maps onto one abstract message:

* ``message_type`` is the raw function code (exception responses keep the
  0x80-or'ed code, which marks them as exceptions),
* ``source``/``destination`` are ``ip:port:unit`` -- the unit identifier
  is appended on both sides because several sub-devices can share one TCP
  connection,
* ``activity`` is derived from traffic direction, since request and
  response share the same function code: read codes map to
  request/response and write codes to command/command_response,
* ``length`` is the byte length of the industrial layer only (MBAP + PDU),
* ``process_data`` is filled for read responses and write requests.

Register values default to unsigned 16-bit integers named by the classic
data-model convention (``reg40017`` for holding register 16, ``reg30001``
for input registers, ``coil1`` / ``din10001`` for bits).  Interpretation
rules can combine two consecutive registers into one value (e.g. a
float32) and assign a human-readable name.

Diagnostic traffic (function code 8) and malformed PDUs are skipped, never
fatal: transcription must survive messy captures.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DataError
from .model import IpalMessage

log = logging.getLogger(__name__)

MODBUS_PORT = 502

READ_CODES = frozenset((1, 2, 3, 4))
WRITE_CODES = frozenset((5, 6, 15, 16))
DIAGNOSTIC_CODES = frozenset((8,))

DEFAULT_ACTIVITY_MAP = {"read": sorted(READ_CODES), "write": sorted(WRITE_CODES)}

#: register/coil table per function code
_TABLE = {1: "coil", 2: "discrete", 3: "holding", 4: "input",
          5: "coil", 6: "holding", 15: "coil", 16: "holding"}

#: data-model base offset for default variable names
_NAME_BASE = {"coil": ("coil", 1), "discrete": ("din", 10001),
              "holding": ("reg", 40001), "input": ("reg", 30001)}

DECODES = ("unsigned", "signed", "float32", "boolean")


@dataclass
class InterpretationRule:
    """Declarative mapping from a register/coil range to a named variable."""

    name: str
    address: int
    table: str = "holding"
    combine: int = 1
    decode: str = "unsigned"
    source: str | None = None
    destination: str | None = None

    def validate(self) -> None:
        if not self.name:
            raise DataError("interpretation rule without a name")
        if self.table not in _NAME_BASE:
            raise DataError(f"rule {self.name!r}: unknown table {self.table!r}")
        if self.combine not in (1, 2):
            raise DataError(f"rule {self.name!r}: combine must be 1 or 2")
        if self.decode not in DECODES:
            raise DataError(f"rule {self.name!r}: unknown decode {self.decode!r}")
        if self.decode == "float32" and self.combine != 2:
            raise DataError(f"rule {self.name!r}: float32 requires combine=2")
        if self.table in ("coil", "discrete") and self.decode != "boolean":
            raise DataError(f"rule {self.name!r}: bit tables decode as boolean")
        if self.address < 0 or self.address > 0xFFFF:
            raise DataError(f"rule {self.name!r}: address out of range")

    def matches_endpoints(self, source: str, destination: str) -> bool:
        if self.source is not None and self.source != source:
            return False
        if self.destination is not None and self.destination != destination:
            return False
        return True


def load_rules(rules: Iterable[dict] | str) -> list[InterpretationRule]:
    """Load rules from a JSON list (or a path to one) and validate them."""
    if isinstance(rules, str):
        with open(rules, "r", encoding="utf-8") as fp:
            rules = json.load(fp)
    if not isinstance(rules, list):
        raise DataError("rule file must hold a JSON list of rule objects")
    out = []
    for entry in rules:
        try:
            rule = InterpretationRule(**entry)
        except TypeError as exc:
            raise DataError(f"bad rule entry {entry!r}: {exc}") from None
        rule.validate()
        out.append(rule)
    _check_rule_overlap(out)
    return out


def _check_rule_overlap(rules: Sequence[InterpretationRule]) -> None:
    spans: dict[tuple, list[tuple[int, int, str]]] = {}
    for rule in rules:
        key = (rule.source, rule.destination, rule.table)
        span = (rule.address, rule.address + rule.combine, rule.name)
        for lo, hi, name in spans.setdefault(key, []):
            if span[0] < hi and lo < span[1]:
                raise DataError(
                    f"rules {name!r} and {rule.name!r} overlap on {rule.table} "
                    f"addresses {max(lo, span[0])}..{min(hi, span[1]) - 1}"
                )
        spans[key].append(span)


@dataclass
class ModbusAdu:
    transaction: int
    unit: int
    function: int
    pdu: bytes
    length: int  # wire length of MBAP + PDU


@dataclass
class RequestInfo:
    """What a response needs to know about its request to be interpreted."""

    message_id: int
    function: int
    address: int
    quantity: int
    timestamp: float


def parse_adu(data: bytes) -> ModbusAdu | None:
    """Parse one MBAP-framed ADU; None if it is not plausibly Modbus."""
    if len(data) < 8:
        return None
    transaction, protocol, length, unit = struct.unpack(">HHHB", data[:7])
    if protocol != 0 or length < 2 or len(data) < 6 + length:
        return None
    pdu = data[7:6 + length]
    return ModbusAdu(transaction, unit, pdu[0], pdu[1:], 6 + length)


def activity_for(function: int, toward_server: bool,
                 activity_map: dict | None = None) -> str:
    """Direction plus function class determines the abstract activity."""
    amap = activity_map or DEFAULT_ACTIVITY_MAP
    base = function & 0x7F
    is_write = base in amap.get("write", ())
    if toward_server:
        return "command" if is_write else "request"
    return "command_response" if is_write else "response"


def default_name(table: str, address: int) -> str:
    prefix, base = _NAME_BASE[table]
    return f"{prefix}{base + address}"


def _decode_registers(words: Sequence[int], start: int, table: str,
                      rules: Sequence[InterpretationRule],
                      source: str, destination: str) -> dict:
    values: dict[str, object] = {}
    available = {start + i: w for i, w in enumerate(words)}
    consumed: set[int] = set()
    for rule in rules:
        if rule.table != table or not rule.matches_endpoints(source, destination):
            continue
        span = range(rule.address, rule.address + rule.combine)
        if any(a not in available or a in consumed for a in span):
            continue
        if rule.combine == 1:
            raw = available[rule.address]
            if rule.decode == "signed":
                value = raw - 0x10000 if raw >= 0x8000 else raw
            elif rule.decode == "boolean":
                value = raw != 0
            else:
                value = raw
        else:
            hi, lo = available[rule.address], available[rule.address + 1]
            if rule.decode == "float32":
                value = struct.unpack(">f", struct.pack(">HH", hi, lo))[0]
            else:
                raw = (hi << 16) | lo
                if rule.decode == "signed" and raw >= 0x8000_0000:
                    raw -= 0x1_0000_0000
                value = raw != 0 if rule.decode == "boolean" else raw
        values[rule.name] = value
        consumed.update(span)
    for addr in sorted(available):
        if addr not in consumed:
            values[default_name(table, addr)] = available[addr]
    return values


def _decode_bits(packed: bytes, start: int, quantity: int, table: str,
                 rules: Sequence[InterpretationRule],
                 source: str, destination: str) -> dict:
    values: dict[str, object] = {}
    named = {}
    for rule in rules:
        if rule.table == table and rule.combine == 1 and \
                rule.matches_endpoints(source, destination):
            named[rule.address] = rule.name
    for i in range(quantity):
        byte = i // 8
        if byte >= len(packed):
            break
        bit = bool(packed[byte] >> (i % 8) & 1)
        addr = start + i
        values[named.get(addr, default_name(table, addr))] = bit
    return values


def dissect_modbus(adu_bytes: bytes, toward_server: bool, *,
                   timestamp: float, msg_id: int,
                   client: str, server: str,
                   rules: Sequence[InterpretationRule] = (),
                   activity_map: dict | None = None,
                   request_info: RequestInfo | None = None,
                   label: bool | None = None) -> IpalMessage | None:
    """Dissect one reassembled ADU into an abstract message.

    ``client``/``server`` are bare ``ip:port`` endpoints; the ADU's unit
    identifier is appended here.  ``request_info`` carries the matched
    request for read responses, whose PDU alone does not tell which
    addresses the returned values belong to.  Returns None (skip) for
    diagnostic traffic and malformed PDUs.
    """
    adu = parse_adu(adu_bytes)
    if adu is None:
        log.debug("skipping malformed ADU at t=%s", timestamp)
        return None
    function = adu.function
    if (function & 0x7F) in DIAGNOSTIC_CODES:
        log.debug("skipping diagnostic ADU (function %d) at t=%s", function, timestamp)
        return None

    src_ep = f"{client if toward_server else server}:{adu.unit}"
    dst_ep = f"{server if toward_server else client}:{adu.unit}"
    activity = activity_for(function, toward_server, activity_map)

    process_data: dict[str, object] = {}
    pdu = adu.pdu
    try:
        if function & 0x80:
            pass  # exception response carries no process data
        elif toward_server and function in READ_CODES:
            if len(pdu) < 4:
                raise struct.error("short read request")
        elif toward_server and function in (5, 6):
            addr, raw = struct.unpack(">HH", pdu[:4])
            table = _TABLE[function]
            if function == 5:
                process_data = _decode_bits(
                    bytes([1 if raw == 0xFF00 else 0]), addr, 1, table,
                    rules, src_ep, dst_ep)
            else:
                process_data = _decode_registers([raw], addr, table,
                                                 rules, src_ep, dst_ep)
        elif toward_server and function == 16:
            addr, qty, count = struct.unpack(">HHB", pdu[:5])
            words = list(struct.unpack(f">{count // 2}H", pdu[5:5 + count]))
            process_data = _decode_registers(words[:qty], addr, "holding",
                                             rules, src_ep, dst_ep)
        elif toward_server and function == 15:
            addr, qty, count = struct.unpack(">HHB", pdu[:5])
            process_data = _decode_bits(pdu[5:5 + count], addr, qty, "coil",
                                        rules, src_ep, dst_ep)
        elif not toward_server and function in (1, 2) and request_info:
            count = pdu[0]
            process_data = _decode_bits(pdu[1:1 + count], request_info.address,
                                        request_info.quantity, _TABLE[function],
                                        rules, src_ep, dst_ep)
        elif not toward_server and function in (3, 4) and request_info:
            count = pdu[0]
            words = list(struct.unpack(f">{count // 2}H", pdu[1:1 + count]))
            process_data = _decode_registers(words, request_info.address,
                                             _TABLE[function], rules,
                                             src_ep, dst_ep)
    except (struct.error, IndexError):
        log.debug("skipping truncated PDU (function %d) at t=%s", function, timestamp)
        return None

    return IpalMessage(
        id=msg_id,
        timestamp=timestamp,
        protocol="modbus",
        length=adu.length,
        malicious=label,
        source=src_ep,
        destination=dst_ep,
        message_type=function,
        activity=activity,
        responds_to=[request_info.message_id] if request_info else [],
        process_data=process_data,
    )


def request_params(adu: ModbusAdu) -> tuple[int, int] | None:
    """(address, quantity) of a read request, for response interpretation."""
    if adu.function in READ_CODES and len(adu.pdu) >= 4:
        addr, qty = struct.unpack(">HH", adu.pdu[:4])
        return addr, qty
    return None
