"""candump-format CAN logs: parsing, serialization and payload bit vectors.

A log line looks like ``(141.000000) can0 0D0#1122334455667788``.  Only
11-bit standard identifiers and classic (<= 8 byte) data frames are handled.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

MAX_AID = 0x7FF
PAYLOAD_BITS = 64

_LINE_RE = re.compile(r"^\((?P<ts>[^)]*)\)\s+(?P<chan>\S+)\s+(?P<aid>[^#\s]*)#(?P<data>\S*)$")
_TS_RE = re.compile(r"^\d+(\.\d+)?$")
_HEX_RE = re.compile(r"^[0-9A-Fa-f]*$")


class CanLogError(ValueError):
    """Base class for log decoding errors."""


class MalformedLine(CanLogError):
    pass


class BadAid(CanLogError):
    pass


class BadPayload(CanLogError):
    pass


@dataclass(frozen=True)
class CanFrame:
    timestamp: float
    aid: int
    dlc: int
    payload: bytes
    injected: bool = False

    def __post_init__(self):
        if not (0 <= self.aid <= MAX_AID):
            raise BadAid(f"aid {self.aid:#x} outside 11-bit range")
        if not (0 <= self.dlc <= 8) or len(self.payload) != self.dlc:
            raise BadPayload(f"dlc {self.dlc} does not match {len(self.payload)}-byte payload")
        if not math.isfinite(self.timestamp) or self.timestamp < 0:
            raise MalformedLine(f"bad timestamp {self.timestamp!r}")

    def bits(self) -> np.ndarray:
        return payload_to_bits(self.payload, self.dlc)


@dataclass
class LineError:
    lineno: int
    line: str
    error: CanLogError

    def __str__(self):
        return f"line {self.lineno}: {type(self.error).__name__}: {self.error}"


def parse_candump_line(line: str) -> CanFrame:
    m = _LINE_RE.match(line.strip())
    if m is None or not _TS_RE.match(m["ts"]):
        raise MalformedLine(f"not a candump record: {line.strip()!r}")
    aid_hex, data_hex = m["aid"], m["data"]
    if not aid_hex or not _HEX_RE.match(aid_hex):
        raise BadAid(f"aid {aid_hex!r} is not hex")
    aid = int(aid_hex, 16)
    if aid > MAX_AID:
        raise BadAid(f"aid {aid_hex} exceeds 0x7FF (extended ids unsupported)")
    if not _HEX_RE.match(data_hex):
        raise BadPayload(f"payload {data_hex!r} is not hex")
    if len(data_hex) % 2 or len(data_hex) > 16:
        raise BadPayload(f"payload {data_hex!r} must be an even number of hex digits, at most 16")
    payload = bytes.fromhex(data_hex)
    return CanFrame(float(m["ts"]), aid, len(payload), payload)


def parse_log(source: Iterable[str]) -> tuple[list[CanFrame], list[LineError]]:
    """Parse every line of ``source``; bad lines are collected, not raised.

    Blank lines are ignored.  Line numbers in the error list are 1-based.
    """
    frames: list[CanFrame] = []
    errors: list[LineError] = []
    for lineno, line in enumerate(source, start=1):
        if not line.strip():
            continue
        try:
            frames.append(parse_candump_line(line))
        except CanLogError as exc:
            errors.append(LineError(lineno, line.rstrip("\n"), exc))
    return frames, errors


def read_log(path) -> tuple[list[CanFrame], list[LineError]]:
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        return parse_log(fh)


def serialize_frame(frame: CanFrame, channel: str = "can0") -> str:
    return f"({frame.timestamp:.6f}) {channel} {frame.aid:03X}#{frame.payload.hex().upper()}"


def write_log(frames: Iterable[CanFrame], out: TextIO) -> None:
    for f in frames:
        out.write(serialize_frame(f))
        out.write("\n")


def payload_to_bits(payload: bytes, dlc: int | None = None) -> np.ndarray:
    """Unpack up to 8 payload bytes into a 64-long uint8 vector.

    Byte k fills bits 8k..8k+7, most significant bit first.  Short payloads
    are zero-padded on the right.
    """
    if dlc is None:
        dlc = len(payload)
    buf = bytes(payload[:dlc]).ljust(8, b"\x00")
    return np.unpackbits(np.frombuffer(buf, dtype=np.uint8))


def bits_to_payload(bits: Sequence[int] | np.ndarray, dlc: int = 8) -> bytes:
    arr = np.asarray(bits, dtype=np.uint8)
    if arr.shape != (PAYLOAD_BITS,) or np.any(arr > 1):
        raise ValueError("expected 64 binary values")
    return np.packbits(arr).tobytes()[:dlc]


def frames_to_bits(frames: Sequence[CanFrame]) -> np.ndarray:
    """Stack the payloads of ``frames`` into an (n, 64) uint8 matrix."""
    if not frames:
        return np.zeros((0, PAYLOAD_BITS), dtype=np.uint8)
    raw = b"".join(f.payload.ljust(8, b"\x00") for f in frames)
    return np.unpackbits(np.frombuffer(raw, dtype=np.uint8)).reshape(len(frames), PAYLOAD_BITS)


def filter_by_aid(frames: Iterable[CanFrame], aid: int) -> list[CanFrame]:
    return [f for f in frames if f.aid == aid]

