"""DNP3-lite: data-link framing with block CRCs and three application functions.

Wire layout::

    05 64 LEN CTRL DEST(le16) SRC(le16) CRC(le16)      10-byte header
    [up to 16 user bytes, CRC(le16)] ...                user data blocks

``LEN`` counts CTRL, DEST, SRC and the user bytes (CRCs excluded), so it is
``5 + len(app_payload)``.  The first application byte selects the function:

* ``0x01`` READ_INTEGRITY: no arguments.
* ``0x05`` DIRECT_OPERATE: ``addr(be16) value(be16)``.
* ``0x81`` RESPONSE: ``status(u8) count(u8)`` then ``count`` big-endian
  register values; a nonzero status marks an error response.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from .crc import crc_bytes, crc_dnp
from .errors import CodecError, CrcError, LengthMismatchError, ShortBufferError, StartBytesError

START = b"\x05\x64"
HEADER_SIZE = 10
BLOCK_SIZE = 16
MAX_USER_DATA = 250

# control bytes: DIR|PRM|unconfirmed user data, and the secondary-station reply
CTRL_MASTER = 0xC4
CTRL_OUTSTATION = 0x44


class AppFunction(enum.IntEnum):
    READ_INTEGRITY = 0x01
    DIRECT_OPERATE = 0x05
    RESPONSE = 0x81


class Status(enum.IntEnum):
    OK = 0x00
    UNSUPPORTED_FUNCTION = 0x01
    DOWNSTREAM_EXCEPTION = 0x02
    BAD_REQUEST = 0x03
    TIMEOUT = 0x04


@dataclass(frozen=True)
class Dnp3Frame:
    control: int
    destination: int
    source: int
    app_payload: bytes = b""

    @property
    def length(self) -> int:
        return 5 + len(self.app_payload)

    @property
    def app_function(self) -> AppFunction | None:
        if not self.app_payload:
            return None
        try:
            return AppFunction(self.app_payload[0])
        except ValueError:
            return None


def encode_dnp3(frame: Dnp3Frame) -> bytes:
    if not (0 <= frame.control <= 0xFF and 0 <= frame.destination <= 0xFFFF and 0 <= frame.source <= 0xFFFF):
        raise CodecError("header field out of range")
    payload = bytes(frame.app_payload)
    if len(payload) > MAX_USER_DATA:
        raise LengthMismatchError(f"user data of {len(payload)} bytes exceeds {MAX_USER_DATA}")
    header = START + struct.pack("<BBHH", frame.length, frame.control, frame.destination, frame.source)
    out = bytearray(header + crc_bytes(header))
    for i in range(0, len(payload), BLOCK_SIZE):
        block = payload[i:i + BLOCK_SIZE]
        out += block + crc_bytes(block)
    return bytes(out)


def encoded_size(user_bytes: int) -> int:
    blocks = -(-user_bytes // BLOCK_SIZE)
    return HEADER_SIZE + user_bytes + 2 * blocks


def decode_dnp3(data: bytes) -> Dnp3Frame:
    data = bytes(data)
    if len(data) < HEADER_SIZE:
        raise ShortBufferError(f"need at least {HEADER_SIZE} bytes, got {len(data)}")
    if data[:2] != START:
        raise StartBytesError(f"bad start bytes {data[:2].hex()}")
    if crc_dnp(data[:8]) != int.from_bytes(data[8:10], "little"):
        raise CrcError("header CRC mismatch")
    length, control, dest, src = struct.unpack_from("<BBHH", data, 2)
    if length < 5:
        raise LengthMismatchError(f"length field {length} below minimum 5")
    user = length - 5
    if len(data) != encoded_size(user):
        raise LengthMismatchError(f"length field implies {encoded_size(user)} bytes, buffer has {len(data)}")
    payload = bytearray()
    pos = HEADER_SIZE
    remaining = user
    while remaining:
        n = min(BLOCK_SIZE, remaining)
        block = data[pos:pos + n]
        if crc_dnp(block) != int.from_bytes(data[pos + n:pos + n + 2], "little"):
            raise CrcError(f"data block CRC mismatch at offset {pos}")
        payload += block
        pos += n + 2
        remaining -= n
    return Dnp3Frame(control, dest, src, bytes(payload))


# application payload helpers

def read_integrity(dest: int, src: int) -> Dnp3Frame:
    return Dnp3Frame(CTRL_MASTER, dest, src, bytes((AppFunction.READ_INTEGRITY,)))


def direct_operate(dest: int, src: int, address: int, value: int) -> Dnp3Frame:
    return Dnp3Frame(CTRL_MASTER, dest, src, struct.pack(">BHH", AppFunction.DIRECT_OPERATE, address, value))


def response(dest: int, src: int, values=(), status: int = Status.OK) -> Dnp3Frame:
    values = [int(v) for v in values]
    if len(values) > (MAX_USER_DATA - 3) // 2:
        raise LengthMismatchError("too many registers for one response")
    body = struct.pack(f">BBB{len(values)}H", AppFunction.RESPONSE, int(status), len(values), *values)
    return Dnp3Frame(CTRL_OUTSTATION, dest, src, body)


def parse_direct_operate(frame: Dnp3Frame) -> tuple[int, int]:
    p = frame.app_payload
    if frame.app_function is not AppFunction.DIRECT_OPERATE or len(p) != 5:
        raise CodecError("not a DIRECT_OPERATE request")
    _, address, value = struct.unpack(">BHH", p)
    return address, value


def parse_response(frame: Dnp3Frame) -> tuple[int, list[int]]:
    """Return ``(status, register_values)`` from a RESPONSE frame."""
    p = frame.app_payload
    if frame.app_function is not AppFunction.RESPONSE or len(p) < 3:
        raise CodecError("not a RESPONSE frame")
    status, count = p[1], p[2]
    if len(p) != 3 + 2 * count:
        raise LengthMismatchError("response register count inconsistent")
    return status, list(struct.unpack_from(f">{count}H", p, 3))
