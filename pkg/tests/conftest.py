"""Shared fixture builders: raw frames, captures, random message streams."""

from __future__ import annotations

import random
import struct

import pytest

from ipal.model import ACTIVITIES, IpalMessage

CLIENT_IP, CLIENT_PORT = "10.0.0.10", 49152
SERVER_IP, SERVER_PORT = "10.0.0.1", 502

CLIENT = f"{CLIENT_IP}:{CLIENT_PORT}"
SERVER = f"{SERVER_IP}:{SERVER_PORT}"


# --- raw frame builders ---------------------------------------------------

def ipv4(addr: str) -> bytes:
    return bytes(int(b) for b in addr.split("."))


def tcp_frame(src_ip: str, sport: int, dst_ip: str, dport: int,
              payload: bytes = b"", flags: int = 0x18) -> bytes:
    eth = b"\x02" * 6 + b"\x04" * 6 + struct.pack(">H", 0x0800)
    total = 20 + 20 + len(payload)
    ip = struct.pack(">BBHHHBBH4s4s", 0x45, 0, total, 0, 0, 64, 6, 0,
                     ipv4(src_ip), ipv4(dst_ip))
    tcp = struct.pack(">HHIIBBHHH", sport, dport, 0, 0, 5 << 4, flags, 8192, 0, 0)
    return eth + ip + tcp + payload


def to_server(payload: bytes) -> bytes:
    return tcp_frame(CLIENT_IP, CLIENT_PORT, SERVER_IP, SERVER_PORT, payload)


def to_client(payload: bytes) -> bytes:
    return tcp_frame(SERVER_IP, SERVER_PORT, CLIENT_IP, CLIENT_PORT, payload)


def adu(tid: int, unit: int, pdu: bytes) -> bytes:
    return struct.pack(">HHHB", tid, 0, len(pdu) + 1, unit) + pdu


def read_request(fc: int, tid: int, unit: int, addr: int, qty: int) -> bytes:
    return adu(tid, unit, struct.pack(">BHH", fc, addr, qty))


def register_response(fc: int, tid: int, unit: int, words: list[int]) -> bytes:
    pdu = struct.pack(f">BB{len(words)}H", fc, 2 * len(words), *words)
    return adu(tid, unit, pdu)


def bit_response(fc: int, tid: int, unit: int, packed: bytes) -> bytes:
    return adu(tid, unit, struct.pack(">BB", fc, len(packed)) + packed)


def write_single(fc: int, tid: int, unit: int, addr: int, value: int) -> bytes:
    return adu(tid, unit, struct.pack(">BHH", fc, addr, value))


def write_registers(tid: int, unit: int, addr: int, words: list[int]) -> bytes:
    pdu = struct.pack(f">BHHB{len(words)}H", 16, addr, len(words),
                      2 * len(words), *words)
    return adu(tid, unit, pdu)


def write_coils(tid: int, unit: int, addr: int, qty: int, packed: bytes) -> bytes:
    return adu(tid, unit, struct.pack(">BHHB", 15, addr, qty, len(packed)) + packed)


def write_echo(tid: int, unit: int, addr: int, qty: int) -> bytes:
    return adu(tid, unit, struct.pack(">BHH", 16, addr, qty))


def coils_echo(tid: int, unit: int, addr: int, qty: int) -> bytes:
    return adu(tid, unit, struct.pack(">BHH", 15, addr, qty))


def exception_response(fc: int, tid: int, unit: int, code: int) -> bytes:
    return adu(tid, unit, bytes([fc | 0x80, code]))


# --- message builders ------------------------------------------------------

def make_message(**overrides) -> IpalMessage:
    fields = dict(
        id=0, timestamp=0.0, protocol="test", length=12, malicious=None,
        source="10.0.0.2:1000", destination="10.0.0.1:502", message_type=3,
        activity="request", responds_to=[], process_data={},
    )
    fields.update(overrides)
    return IpalMessage(**fields)


def random_message(rng: random.Random, msg_id: int) -> IpalMessage:
    process_data = {}
    for _ in range(rng.randrange(0, 4)):
        name = f"var{rng.randrange(20)}"
        kind = rng.randrange(4)
        if kind == 0:
            process_data[name] = rng.randrange(-1000, 1000)
        elif kind == 1:
            process_data[name] = rng.uniform(-1e6, 1e6)
        elif kind == 2:
            process_data[name] = rng.random() < 0.5
        else:
            process_data[name] = rng.choice(["open", "closed", "auto", "ü~"])
    responds_to = []
    if msg_id > 0 and rng.random() < 0.4:
        responds_to = sorted(rng.sample(range(msg_id), rng.randrange(1, min(3, msg_id) + 1)))
    return IpalMessage(
        id=msg_id,
        timestamp=round(msg_id * 0.25 + rng.random() * 0.25, 6),
        protocol=rng.choice(["modbus", "synthetic", "enip"]),
        length=rng.randrange(0, 300),
        malicious=rng.choice([True, False, None]),
        source=f"10.0.{rng.randrange(4)}.{rng.randrange(1, 9)}:{rng.randrange(1024, 65535)}:{rng.randrange(4)}",
        destination=rng.choice(["", f"10.0.9.1:502:{rng.randrange(4)}"]),
        message_type=rng.choice([1, 3, 6, 16, "read", "write"]),
        activity=rng.choice(ACTIVITIES),
        responds_to=responds_to,
        process_data=process_data,
    )


def random_stream(seed: int, n: int) -> list[IpalMessage]:
    rng = random.Random(seed)
    return [random_message(rng, i) for i in range(n)]


@pytest.fixture
def tmp_capture(tmp_path):
    """Write frames to a pcap file and return its path."""
    from ipal import pcap as pcap_mod

    def write(frames, name="fixture.pcap", link_type=pcap_mod.LINKTYPE_ETHERNET):
        path = tmp_path / name
        pcap_mod.write_capture(str(path), frames, link_type)
        return str(path)

    return write
