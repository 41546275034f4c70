"""Modbus-TCP framing: MBAP header plus PDU, big-endian throughout.

Only read holding registers (0x03), write multiple registers (0x10) and
their exception responses (function code | 0x80) are supported.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import CodecError, LengthMismatchError, ProtocolIdError, ShortBufferError, UnknownFunctionError

READ_HOLDING = 0x03
WRITE_MULTIPLE = 0x10
EXCEPTION_BIT = 0x80
SUPPORTED = frozenset({READ_HOLDING, WRITE_MULTIPLE, READ_HOLDING | EXCEPTION_BIT, WRITE_MULTIPLE | EXCEPTION_BIT})

MBAP_SIZE = 7
MAX_PDU_PAYLOAD = 252
MAX_READ_QTY = 125
MAX_WRITE_QTY = 123

ILLEGAL_FUNCTION = 0x01
ILLEGAL_ADDRESS = 0x02
ILLEGAL_VALUE = 0x03

_MBAP = struct.Struct(">HHHB")


@dataclass(frozen=True)
class ModbusFrame:
    transaction_id: int
    unit_id: int
    function_code: int
    payload: bytes = b""
    protocol_id: int = 0

    @property
    def length(self) -> int:
        return 2 + len(self.payload)

    @property
    def is_exception(self) -> bool:
        return bool(self.function_code & EXCEPTION_BIT)


def _check_frame(frame: ModbusFrame) -> None:
    if frame.function_code not in SUPPORTED:
        raise UnknownFunctionError(f"unsupported function code 0x{frame.function_code:02x}")
    if frame.protocol_id != 0:
        raise ProtocolIdError(f"protocol id must be 0, got {frame.protocol_id}")
    if not (0 <= frame.transaction_id <= 0xFFFF and 0 <= frame.unit_id <= 0xFF):
        raise CodecError("transaction_id or unit_id out of range")
    if len(frame.payload) > MAX_PDU_PAYLOAD:
        raise LengthMismatchError(f"payload of {len(frame.payload)} bytes exceeds {MAX_PDU_PAYLOAD}")
    if frame.is_exception and len(frame.payload) != 1:
        raise LengthMismatchError("exception responses carry exactly one byte")


def encode_modbus(frame: ModbusFrame) -> bytes:
    _check_frame(frame)
    header = _MBAP.pack(frame.transaction_id, frame.protocol_id, frame.length, frame.unit_id)
    return header + bytes((frame.function_code,)) + bytes(frame.payload)


def decode_modbus(data: bytes) -> ModbusFrame:
    data = bytes(data)
    if len(data) < MBAP_SIZE + 1:
        raise ShortBufferError(f"need at least {MBAP_SIZE + 1} bytes, got {len(data)}")
    tid, pid, length, unit = _MBAP.unpack_from(data)
    if pid != 0:
        raise ProtocolIdError(f"protocol id must be 0, got {pid}")
    if length < 2 or length - 2 > MAX_PDU_PAYLOAD:
        raise LengthMismatchError(f"length field {length} out of range")
    if len(data) != 6 + length:
        raise LengthMismatchError(f"length field says {6 + length} bytes, buffer has {len(data)}")
    fc = data[MBAP_SIZE]
    if fc not in SUPPORTED:
        raise UnknownFunctionError(f"unsupported function code 0x{fc:02x}")
    frame = ModbusFrame(tid, unit, fc, data[MBAP_SIZE + 1:])
    if frame.is_exception and len(frame.payload) != 1:
        raise LengthMismatchError("exception responses carry exactly one byte")
    return frame


# PDU builders and parsers

def read_request(tid: int, unit: int, address: int, quantity: int) -> ModbusFrame:
    if not 1 <= quantity <= MAX_READ_QTY:
        raise CodecError(f"read quantity {quantity} out of range")
    return ModbusFrame(tid, unit, READ_HOLDING, struct.pack(">HH", address, quantity))


def write_request(tid: int, unit: int, address: int, values) -> ModbusFrame:
    values = [int(v) for v in values]
    if not 1 <= len(values) <= MAX_WRITE_QTY:
        raise CodecError(f"write quantity {len(values)} out of range")
    body = struct.pack(f">HHB{len(values)}H", address, len(values), 2 * len(values), *values)
    return ModbusFrame(tid, unit, WRITE_MULTIPLE, body)


def read_response(tid: int, unit: int, values) -> ModbusFrame:
    values = [int(v) for v in values]
    return ModbusFrame(tid, unit, READ_HOLDING, struct.pack(f">B{len(values)}H", 2 * len(values), *values))


def write_response(tid: int, unit: int, address: int, quantity: int) -> ModbusFrame:
    return ModbusFrame(tid, unit, WRITE_MULTIPLE, struct.pack(">HH", address, quantity))


def exception_response(tid: int, unit: int, function_code: int, code: int) -> ModbusFrame:
    return ModbusFrame(tid, unit, (function_code & 0x7F) | EXCEPTION_BIT, bytes((code,)))


def parse_read_request(frame: ModbusFrame) -> tuple[int, int]:
    if frame.function_code != READ_HOLDING or len(frame.payload) != 4:
        raise CodecError("not a read-holding-registers request")
    return struct.unpack(">HH", frame.payload)


def parse_write_request(frame: ModbusFrame) -> tuple[int, list[int]]:
    p = frame.payload
    if frame.function_code != WRITE_MULTIPLE or len(p) < 5:
        raise CodecError("not a write-multiple-registers request")
    address, qty, nbytes = struct.unpack_from(">HHB", p)
    if nbytes != 2 * qty or len(p) != 5 + nbytes:
        raise LengthMismatchError("write request byte count inconsistent")
    return address, list(struct.unpack_from(f">{qty}H", p, 5))


def parse_read_response(frame: ModbusFrame) -> list[int]:
    p = frame.payload
    if frame.function_code != READ_HOLDING or len(p) < 1:
        raise CodecError("not a read-holding-registers response")
    if p[0] % 2 or len(p) != 1 + p[0]:
        raise LengthMismatchError("read response byte count inconsistent")
    return list(struct.unpack_from(f">{p[0] // 2}H", p, 1))


def parse_write_response(frame: ModbusFrame) -> tuple[int, int]:
    if frame.function_code != WRITE_MULTIPLE or len(frame.payload) != 4:
        raise CodecError("not a write-multiple-registers response")
    return struct.unpack(">HH", frame.payload)
