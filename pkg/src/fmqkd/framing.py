"""Bit-exact wire format for the classical and quantum-sim channel.

Every frame is

    version u8 (0x01) | msg_type u8 | length u32 LE | payload

with ``length`` counting payload bytes only. Payloads, all little-endian:

    0x01 SESSION_START  n_pulses u64 | variant u8 | mu_pair f64 | commitment 32B
    0x02 QFRAME_OUT     index u64 | mean_photons f64 | pol 4 x f64
    0x03 QFRAME_BACK    index u64 | mean_photons f64 | phase_a f64 | pol 4 x f64
    0x04 DETECTIONS     count u32 | count x index u64, strictly increasing
    0x05 BASES          count u32 | ceil(count/8) bytes, bit i = byte[i//8] >> (i%8),
                        unused high bits zero
    0x06 DISCLOSE       count u32 | count x (index u64 | bit u8), indices increasing
    0x07 ER_REPORT      error_rate f64
    0x08 TERMINATE      reason u8

Encoding is canonical: each message has exactly one valid byte string, so
encode is injective and decode(encode(m)) == m.
"""

from __future__ import annotations

import math
import struct
from typing import NamedTuple, Tuple, Union

from .errors import IncompleteFrameError, ProtocolViolationError

WIRE_VERSION = 1
HEADER = struct.Struct("<BBI")

MSG_SESSION_START = 0x01
MSG_QFRAME_OUT = 0x02
MSG_QFRAME_BACK = 0x03
MSG_DETECTIONS = 0x04
MSG_BASES = 0x05
MSG_DISCLOSE = 0x06
MSG_ER_REPORT = 0x07
MSG_TERMINATE = 0x08

TERMINATE_NORMAL = 0
TERMINATE_CONFIG_MISMATCH = 1
TERMINATE_PROTOCOL_VIOLATION = 2
TERMINATE_ABORTED = 3


class SessionStart(NamedTuple):
    n_pulses: int
    variant_code: int
    mu_pair: float
    seeds_commitment: bytes


class QFrameOut(NamedTuple):
    index: int
    mean_photons: float
    pol: Tuple[float, float, float, float]


class QFrameBack(NamedTuple):
    index: int
    mean_photons: float
    phase_a: float
    pol: Tuple[float, float, float, float]


class Detections(NamedTuple):
    indices: Tuple[int, ...]


class Bases(NamedTuple):
    bits: Tuple[int, ...]


class Disclose(NamedTuple):
    items: Tuple[Tuple[int, int], ...]


class ErReport(NamedTuple):
    error_rate: float


class Terminate(NamedTuple):
    reason: int


Message = Union[
    SessionStart, QFrameOut, QFrameBack, Detections, Bases, Disclose, ErReport, Terminate
]

_SESSION_START = struct.Struct("<QBd")
_QFRAME_OUT = struct.Struct("<Qd4d")
_QFRAME_BACK = struct.Struct("<Qdd4d")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_F64 = struct.Struct("<d")
_DISCLOSE_ITEM = struct.Struct("<QB")


def _require_finite(value: float, field: str) -> None:
    if not math.isfinite(value):
        raise ProtocolViolationError(f"{field} must be finite, got {value!r}")


def _require_index(value: int, field: str) -> None:
    if not (0 <= value < 2 ** 64):
        raise ProtocolViolationError(f"{field} must fit in u64, got {value!r}")


def _require_increasing(indices, what: str) -> None:
    for a, b in zip(indices, indices[1:]):
        if b <= a:
            raise ProtocolViolationError(f"{what} indices must be strictly increasing")


def _pack_bitmap(bits: Tuple[int, ...]) -> bytes:
    out = bytearray((len(bits) + 7) // 8)
    for i, bit in enumerate(bits):
        if bit not in (0, 1):
            raise ProtocolViolationError(f"basis bit must be 0 or 1, got {bit!r}")
        out[i // 8] |= bit << (i % 8)
    return bytes(out)


def _unpack_bitmap(payload: bytes, count: int) -> Tuple[int, ...]:
    bits = tuple((payload[i // 8] >> (i % 8)) & 1 for i in range(count))
    used = (count + 7) // 8
    if count % 8 and payload and (payload[used - 1] >> (count % 8)):
        raise ProtocolViolationError("unused bitmap bits must be zero")
    return bits


def _encode_payload(msg: Message) -> Tuple[int, bytes]:
    if isinstance(msg, SessionStart):
        _require_index(msg.n_pulses, "n_pulses")
        _require_finite(msg.mu_pair, "mu_pair")
        if not (0 <= msg.variant_code <= 0xFF):
            raise ProtocolViolationError(f"variant_code must be a u8, got {msg.variant_code}")
        if len(msg.seeds_commitment) != 32:
            raise ProtocolViolationError("seeds_commitment must be exactly 32 bytes")
        return MSG_SESSION_START, _SESSION_START.pack(
            msg.n_pulses, msg.variant_code, msg.mu_pair
        ) + msg.seeds_commitment
    if isinstance(msg, QFrameOut):
        _require_index(msg.index, "index")
        _require_finite(msg.mean_photons, "mean_photons")
        for x in msg.pol:
            _require_finite(x, "pol")
        return MSG_QFRAME_OUT, _QFRAME_OUT.pack(msg.index, msg.mean_photons, *msg.pol)
    if isinstance(msg, QFrameBack):
        _require_index(msg.index, "index")
        _require_finite(msg.mean_photons, "mean_photons")
        _require_finite(msg.phase_a, "phase_a")
        for x in msg.pol:
            _require_finite(x, "pol")
        return MSG_QFRAME_BACK, _QFRAME_BACK.pack(
            msg.index, msg.mean_photons, msg.phase_a, *msg.pol
        )
    if isinstance(msg, Detections):
        _require_increasing(msg.indices, "DETECTIONS")
        for i in msg.indices:
            _require_index(i, "detection index")
        return MSG_DETECTIONS, _U32.pack(len(msg.indices)) + b"".join(
            _U64.pack(i) for i in msg.indices
        )
    if isinstance(msg, Bases):
        return MSG_BASES, _U32.pack(len(msg.bits)) + _pack_bitmap(msg.bits)
    if isinstance(msg, Disclose):
        _require_increasing([i for i, _ in msg.items], "DISCLOSE")
        for i, bit in msg.items:
            _require_index(i, "disclose index")
            if bit not in (0, 1):
                raise ProtocolViolationError(f"disclosed bit must be 0 or 1, got {bit!r}")
        return MSG_DISCLOSE, _U32.pack(len(msg.items)) + b"".join(
            _DISCLOSE_ITEM.pack(i, b) for i, b in msg.items
        )
    if isinstance(msg, ErReport):
        _require_finite(msg.error_rate, "error_rate")
        return MSG_ER_REPORT, _F64.pack(msg.error_rate)
    if isinstance(msg, Terminate):
        if not (0 <= msg.reason <= 0xFF):
            raise ProtocolViolationError(f"terminate reason must be a u8, got {msg.reason}")
        return MSG_TERMINATE, bytes([msg.reason])
    raise ProtocolViolationError(f"unknown message {msg!r}")


def encode_frame(msg: Message) -> bytes:
    msg_type, payload = _encode_payload(msg)
    return HEADER.pack(WIRE_VERSION, msg_type, len(payload)) + payload


def _decode_payload(msg_type: int, payload: bytes) -> Message:
    if msg_type == MSG_SESSION_START:
        if len(payload) != _SESSION_START.size + 32:
            raise ProtocolViolationError("SESSION_START payload has wrong size")
        n_pulses, variant_code, mu_pair = _SESSION_START.unpack(payload[:_SESSION_START.size])
        _require_finite(mu_pair, "mu_pair")
        return SessionStart(n_pulses, variant_code, mu_pair, payload[_SESSION_START.size:])
    if msg_type == MSG_QFRAME_OUT:
        if len(payload) != _QFRAME_OUT.size:
            raise ProtocolViolationError("QFRAME_OUT payload has wrong size")
        index, mean_photons, *pol = _QFRAME_OUT.unpack(payload)
        _require_finite(mean_photons, "mean_photons")
        for x in pol:
            _require_finite(x, "pol")
        return QFrameOut(index, mean_photons, tuple(pol))
    if msg_type == MSG_QFRAME_BACK:
        if len(payload) != _QFRAME_BACK.size:
            raise ProtocolViolationError("QFRAME_BACK payload has wrong size")
        index, mean_photons, phase_a, *pol = _QFRAME_BACK.unpack(payload)
        _require_finite(mean_photons, "mean_photons")
        _require_finite(phase_a, "phase_a")
        for x in pol:
            _require_finite(x, "pol")
        return QFrameBack(index, mean_photons, phase_a, tuple(pol))
    if msg_type == MSG_DETECTIONS:
        if len(payload) < 4:
            raise ProtocolViolationError("DETECTIONS payload too short")
        (count,) = _U32.unpack(payload[:4])
        if len(payload) != 4 + 8 * count:
            raise ProtocolViolationError("DETECTIONS payload has wrong size")
        indices = tuple(
            _U64.unpack_from(payload, 4 + 8 * k)[0] for k in range(count)
        )
        _require_increasing(indices, "DETECTIONS")
        return Detections(indices)
    if msg_type == MSG_BASES:
        if len(payload) < 4:
            raise ProtocolViolationError("BASES payload too short")
        (count,) = _U32.unpack(payload[:4])
        if len(payload) != 4 + (count + 7) // 8:
            raise ProtocolViolationError("BASES payload has wrong size")
        return Bases(_unpack_bitmap(payload[4:], count))
    if msg_type == MSG_DISCLOSE:
        if len(payload) < 4:
            raise ProtocolViolationError("DISCLOSE payload too short")
        (count,) = _U32.unpack(payload[:4])
        if len(payload) != 4 + _DISCLOSE_ITEM.size * count:
            raise ProtocolViolationError("DISCLOSE payload has wrong size")
        items = []
        for k in range(count):
            index, bit = _DISCLOSE_ITEM.unpack_from(payload, 4 + _DISCLOSE_ITEM.size * k)
            if bit not in (0, 1):
                raise ProtocolViolationError(f"disclosed bit must be 0 or 1, got {bit}")
            items.append((index, bit))
        _require_increasing([i for i, _ in items], "DISCLOSE")
        return Disclose(tuple(items))
    if msg_type == MSG_ER_REPORT:
        if len(payload) != _F64.size:
            raise ProtocolViolationError("ER_REPORT payload has wrong size")
        (er,) = _F64.unpack(payload)
        _require_finite(er, "error_rate")
        return ErReport(er)
    if msg_type == MSG_TERMINATE:
        if len(payload) != 1:
            raise ProtocolViolationError("TERMINATE payload has wrong size")
        return Terminate(payload[0])
    raise ProtocolViolationError(f"unknown msg_type 0x{msg_type:02x}")


def decode_frame(data: bytes) -> Message:
    """Decode exactly one frame; trailing bytes are a protocol violation."""
    if len(data) < HEADER.size:
        raise IncompleteFrameError(f"need {HEADER.size} header bytes, have {len(data)}")
    version, msg_type, length = HEADER.unpack(data[:HEADER.size])
    if version != WIRE_VERSION:
        raise ProtocolViolationError(f"unsupported wire version {version}")
    end = HEADER.size + length
    if len(data) < end:
        raise IncompleteFrameError(f"need {end} bytes, have {len(data)}")
    if len(data) > end:
        raise ProtocolViolationError(f"{len(data) - end} trailing bytes after frame")
    return _decode_payload(msg_type, data[HEADER.size:end])
