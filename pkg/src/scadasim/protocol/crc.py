"""DNP3 data-link CRC-16.

Generator 0x3D65, processed LSB-first (reflected constant 0xA6BC), initial
remainder 0, result complemented and sent little-endian.
"""
from __future__ import annotations

POLY_REFLECTED = 0xA6BC


def _make_table() -> tuple[int, ...]:
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = (crc >> 1) ^ POLY_REFLECTED if crc & 1 else crc >> 1
        table.append(crc)
    return tuple(table)


_TABLE = _make_table()


def crc_dnp(data: bytes) -> int:
    crc = 0
    for byte in data:
        crc = (crc >> 8) ^ _TABLE[(crc ^ byte) & 0xFF]
    return crc ^ 0xFFFF


def crc_bytes(data: bytes) -> bytes:
    """The two CRC bytes as transmitted after ``data``."""
    return crc_dnp(data).to_bytes(2, "little")
