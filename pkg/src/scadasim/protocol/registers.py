"""Fixed-point encoding of real signals into 16-bit holding registers."""
from __future__ import annotations

import math

from dataclasses import dataclass, field

from ..errors import ContractViolation

REG_MAX = 0xFFFF
DISTANCE_REGISTER = 0
COMMAND_REGISTER = 1


def register_encode(value: float, scale: float, offset: float = 0.0) -> int:
    return FixedPoint(scale, offset).encode(value)


def register_decode(register: int, scale: float, offset: float = 0.0) -> float:
    return FixedPoint(scale, offset).decode(register)


@dataclass
class FixedPoint:
    """``register = round((value - offset) * scale)`` (half up) clamped to 16 bits.

    Clamping is silent but counted in ``saturations``.
    """

    scale: float
    offset: float = 0.0
    saturations: int = 0

    def __post_init__(self):
        if not self.scale > 0:
            raise ContractViolation("scale must be positive")

    def encode(self, value: float) -> int:
        raw = math.floor((float(value) - self.offset) * self.scale + 0.5)
        if raw < 0 or raw > REG_MAX:
            self.saturations += 1
            return 0 if raw < 0 else REG_MAX
        return int(raw)

    def decode(self, register: int) -> float:
        if not 0 <= register <= REG_MAX:
            raise ContractViolation(f"register value {register} out of range")
        return register / self.scale + self.offset

    def quantize(self, value: float) -> float:
        """Value as it will be seen after a round trip through a register (no counting)."""
        raw = min(max(math.floor((float(value) - self.offset) * self.scale + 0.5), 0), REG_MAX)
        return raw / self.scale + self.offset


def split_u32(value: int) -> tuple[int, int]:
    """Most significant register first."""
    if not 0 <= value <= 0xFFFFFFFF:
        raise ContractViolation("value does not fit 32 bits")
    return value >> 16, value & 0xFFFF


def join_u32(high: int, low: int) -> int:
    return (high << 16) | low


@dataclass
class RegisterMap:
    size: int = 16
    holding: list = field(default_factory=list)

    def __post_init__(self):
        if not self.holding:
            self.holding = [0] * self.size
        if len(self.holding) != self.size:
            raise ContractViolation("holding length must equal size")

    def in_range(self, address: int, quantity: int = 1) -> bool:
        return 0 <= address and quantity >= 1 and address + quantity <= self.size

    def read(self, address: int, quantity: int) -> list[int]:
        if not self.in_range(address, quantity):
            raise ContractViolation(f"registers {address}..{address + quantity - 1} out of range")
        return list(self.holding[address:address + quantity])

    def write(self, address: int, values) -> None:
        values = [int(v) for v in values]
        if not self.in_range(address, len(values)):
            raise ContractViolation(f"registers {address}..{address + len(values) - 1} out of range")
        if any(not 0 <= v <= REG_MAX for v in values):
            raise ContractViolation("register values must be 16-bit unsigned")
        self.holding[address:address + len(values)] = values
