"""Classic libpcap capture-file reading and writing.

Only the classic container is handled (magic 0xa1b2c3d4 and the swapped /
nanosecond variants); pcapng files are rejected with a clear error.  The
writer exists so tests and small tools can build fixtures without a
capture stack.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Iterator

from .errors import DataError, UsageError

MAGIC_US = 0xA1B2C3D4
MAGIC_NS = 0xA1B23C4D

LINKTYPE_ETHERNET = 1
LINKTYPE_RAW_IPV4 = 101

SUPPORTED_LINKTYPES = (LINKTYPE_ETHERNET, LINKTYPE_RAW_IPV4)


@dataclass
class Frame:
    timestamp: float
    data: bytes
    orig_len: int


def read_capture(path: str, link_type: int | None = None) -> Iterator[tuple[float, bytes]]:
    """Yield (timestamp, raw frame bytes) in file order.

    ``link_type``, when given, must match the file header.  A file that
    ends in the middle of a packet record yields the complete frames
    first and then raises a "truncated capture" DataError.
    """
    with open(path, "rb") as fp:
        reader = PcapReader(fp)
        if link_type is not None and reader.link_type != link_type:
            raise UsageError(
                f"capture link type {reader.link_type} does not match requested {link_type}"
            )
        if reader.link_type not in SUPPORTED_LINKTYPES:
            raise DataError(f"unsupported link type {reader.link_type}")
        for frame in reader:
            yield frame.timestamp, frame.data


class PcapReader:
    def __init__(self, fp: BinaryIO):
        header = fp.read(24)
        if len(header) < 24:
            raise DataError("not a capture file: short global header")
        magic = struct.unpack("<I", header[:4])[0]
        if magic in (MAGIC_US, MAGIC_NS):
            self._endian = "<"
        elif struct.unpack(">I", header[:4])[0] in (MAGIC_US, MAGIC_NS):
            self._endian = ">"
            magic = struct.unpack(">I", header[:4])[0]
        else:
            raise DataError(f"not a classic pcap file (magic 0x{magic:08x})")
        self._ns = magic == MAGIC_NS
        _, _, _, _, self.snaplen, self.link_type = struct.unpack(
            self._endian + "HHiIII", header[4:]
        )
        self._fp = fp

    def __iter__(self) -> Iterator[Frame]:
        unpack = struct.Struct(self._endian + "IIII").unpack
        scale = 1e-9 if self._ns else 1e-6
        while True:
            head = self._fp.read(16)
            if not head:
                return
            if len(head) < 16:
                raise DataError("truncated capture: partial record header")
            sec, frac, caplen, orig_len = unpack(head)
            data = self._fp.read(caplen)
            if len(data) < caplen:
                raise DataError("truncated capture: partial final frame")
            yield Frame(sec + frac * scale, data, orig_len)


class PcapWriter:
    """Write a classic microsecond-resolution pcap file."""

    def __init__(self, fp: BinaryIO, link_type: int = LINKTYPE_ETHERNET, snaplen: int = 65535):
        self._fp = fp
        fp.write(struct.pack("<IHHiIII", MAGIC_US, 2, 4, 0, 0, snaplen, link_type))

    def write(self, timestamp: float, data: bytes) -> None:
        sec = int(timestamp)
        usec = int(round((timestamp - sec) * 1e6))
        if usec >= 1_000_000:
            sec += 1
            usec -= 1_000_000
        self._fp.write(struct.pack("<IIII", sec, usec, len(data), len(data)))
        self._fp.write(data)


def write_capture(path: str, frames: Iterable[tuple[float, bytes]],
                  link_type: int = LINKTYPE_ETHERNET) -> int:
    count = 0
    with open(path, "wb") as fp:
        writer = PcapWriter(fp, link_type)
        for ts, data in frames:
            writer.write(ts, data)
            count += 1
    return count
