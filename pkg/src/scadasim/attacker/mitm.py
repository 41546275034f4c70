"""Man-in-the-middle attacker sitting on the RTU-PLC Modbus channel.

Passive mode records every frame and forwards it untouched.  At
``attack_start_tick`` the attacker trains its model on the capture and turns
active: command writes toward the PLC are replaced by the plant action, and
read responses toward the controller carry forged distance readings.

Forging modes for the identification attackers:

* ``compensated``: replay the captured reading for the same position in the
  capture and add the model's response to ``delta_u = u_live - u_captured``.
  A perfect model makes the forged stream match what the plant would have
  produced under the live commands.
* ``free_run``: the model's own prediction driven by the live commands.
"""
from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractViolation, IdentificationError
from ..network import Event, Fabric, NodeId, Role
from ..protocol import modbus
from ..protocol.errors import CodecError
from ..protocol.registers import COMMAND_REGISTER, DISTANCE_REGISTER, FixedPoint
from .identification import ArmaxModel, ArxModel, FirModel, armax_identify, arx_identify, fir_train

log = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    PASSIVE = "passive"
    ACTIVE = "active"


class Strategy(str, enum.Enum):
    NONE = "none"
    REPLAY = "replay"
    FIR = "fir"
    ARX = "arx"
    ARMAX = "armax"


class Direction(str, enum.Enum):
    TO_PLANT = "to_plant"
    TO_CONTROLLER = "to_controller"


@dataclass(frozen=True)
class CaptureEntry:
    tick: int
    direction: Direction
    values: tuple
    raw: bytes
    kind: str = ""


CAPTURE_HEADER = ("tick", "direction", "kind", "values", "raw_hex")


@dataclass
class CaptureLog:
    entries: list = field(default_factory=list)

    def append(self, entry: CaptureEntry) -> None:
        if self.entries and entry.tick < self.entries[-1].tick:
            raise ContractViolation("capture ticks must be non-decreasing")
        self.entries.append(entry)

    def __len__(self) -> int:
        return len(self.entries)

    def of_kind(self, kind: str) -> list:
        return [e for e in self.entries if e.kind == kind]

    def to_rows(self):
        for e in self.entries:
            yield (e.tick, e.direction.value, e.kind, " ".join(repr(float(v)) for v in e.values), e.raw.hex())

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CAPTURE_HEADER)
            w.writerows(self.to_rows())


@dataclass
class AttackConfig:
    strategy: Strategy = Strategy.NONE
    attack_start_tick: int = 1000
    hijack_tick: int = 0
    fir_taps: int = 20
    fir_mu: float = 0.05
    fir_passes: int = 1
    na: int = 4
    nb: int = 4
    nk: int = 1
    nc: int = 1
    forge_mode: str = "compensated"
    plant_action: str = "hold"
    replay_window: int = 1

    def __post_init__(self):
        self.strategy = Strategy(self.strategy)
        if self.forge_mode not in ("compensated", "free_run"):
            raise ContractViolation(f"unknown forge_mode {self.forge_mode!r}")
        if self.plant_action not in ("hold", "forward"):
            raise ContractViolation(f"unknown plant_action {self.plant_action!r}")


@dataclass
class AttackerState:
    config: AttackConfig
    mode: Mode = Mode.PASSIVE
    capture: CaptureLog = field(default_factory=CaptureLog)
    model: FirModel | ArxModel | ArmaxModel | None = None
    activated_at: int | None = None
    aborted: str | None = None

    @property
    def strategy(self) -> Strategy:
        return self.config.strategy

    @property
    def attack_start_tick(self) -> int:
        return self.config.attack_start_tick


def hijack(fabric: Fabric, attacker: NodeId, channels) -> None:
    """Interpose ``attacker`` on each channel (both directions)."""
    for ch in channels:
        fabric.attach_tap(ch, attacker)


class AttackerNode:
    def __init__(self, label: str, config: AttackConfig, plc: NodeId, rtu: NodeId,
                 distance_codec: FixedPoint, command_codec: FixedPoint):
        self.node_id = NodeId(label, Role.ATTACKER)
        self.state = AttackerState(config)
        self.plc = plc
        self.rtu = rtu
        self.distance_codec = distance_codec
        self.command_codec = command_codec
        self._read_tids: set[int] = set()
        self.frames_seen = 0
        self.forged = 0
        # aligned per-tick capture used for training and forging
        self.cap_u: list[float] = []
        self.cap_y: list[float] = []
        self.cap_y_raw: list[bytes] = []
        self._cap_ticks_y: list[int] = []
        self._cap_ticks_u: list[int] = []
        self.hold_register: int | None = None
        self.live_du: list[float] = []
        self.live_u: list[float] = []
        self.forged_dy: list[float] = []
        self.reads_active = 0
        self.writes_active = 0
        self.fir_means = (0.0, 0.0)

    # fabric hooks

    def on_tick(self, fabric: Fabric, t: int) -> None:
        cfg = self.state.config
        if t == cfg.hijack_tick:
            hijack(fabric, self.node_id, [fabric.channel(self.rtu.label, self.plc.label)])
        if t == cfg.attack_start_tick and cfg.strategy is not Strategy.NONE:
            self.activate(t)

    def on_frame(self, fabric: Fabric, event: Event) -> None:
        self.frames_seen += 1
        to_plant = event.destination == self.plc
        direction = Direction.TO_PLANT if to_plant else Direction.TO_CONTROLLER
        frame = self.record(fabric.tick, event.frame, direction)
        out = event.frame
        if self.state.mode is Mode.ACTIVE and frame is not None:
            out = self.rewrite(frame, direction)
        fabric.forward(self.node_id, event, out)

    # passive phase

    def record(self, tick: int, raw: bytes, direction: Direction) -> modbus.ModbusFrame | None:
        """Append the frame to the capture; returns the decoded frame or None."""
        try:
            frame = modbus.decode_modbus(raw)
        except CodecError as exc:
            log.info("undecodable frame at tick %d forwarded verbatim: %s", tick, exc)
            self.state.capture.append(CaptureEntry(tick, direction, (), bytes(raw), "undecodable"))
            return None
        values: tuple = ()
        kind = "other"
        try:
            if direction is Direction.TO_PLANT and frame.function_code == modbus.WRITE_MULTIPLE:
                address, regs = modbus.parse_write_request(frame)
                kind = "write"
                if address <= COMMAND_REGISTER < address + len(regs):
                    values = (self.command_codec.decode(regs[COMMAND_REGISTER - address]),)
                    if self.state.mode is Mode.PASSIVE:
                        self.cap_u.append(values[0])
                        self._cap_ticks_u.append(tick)
            elif direction is Direction.TO_PLANT and frame.function_code == modbus.READ_HOLDING:
                address, qty = modbus.parse_read_request(frame)
                kind = "read"
                if address <= DISTANCE_REGISTER < address + qty:
                    self._read_tids.add(frame.transaction_id)
            elif direction is Direction.TO_CONTROLLER and frame.function_code == modbus.READ_HOLDING:
                kind = "read_response"
                if frame.transaction_id in self._read_tids:
                    self._read_tids.discard(frame.transaction_id)
                    regs = modbus.parse_read_response(frame)
                    values = (self.distance_codec.decode(regs[DISTANCE_REGISTER]),)
                    if self.state.mode is Mode.PASSIVE:
                        self.cap_y.append(values[0])
                        self.cap_y_raw.append(frame.payload)
                        self._cap_ticks_y.append(tick)
            elif direction is Direction.TO_CONTROLLER:
                kind = "write_response" if frame.function_code == modbus.WRITE_MULTIPLE else "exception"
        except CodecError:
            kind = "malformed"
        self.state.capture.append(CaptureEntry(tick, direction, values, bytes(raw), kind))
        return frame

    def training_data(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-tick aligned ``(u, y)`` where ``y[t]`` is read before ``u[t]`` is written."""
        n = min(len(self.cap_u), len(self.cap_y))
        return np.asarray(self.cap_u[:n]), np.asarray(self.cap_y[:n])

    # switching to active

    def activate(self, tick: int) -> None:
        st = self.state
        cfg = st.config
        try:
            if not self.cap_y or len(self.cap_y) < cfg.replay_window:
                raise IdentificationError("capture holds no measurements")
            if cfg.strategy is not Strategy.REPLAY:
                self.train()
        except IdentificationError as exc:
            st.aborted = str(exc)
            log.warning("attack aborted, staying passive: %s", exc)
            return
        if self.cap_u:
            self.hold_register = self.command_codec.encode(self.cap_u[-1])
        st.mode = Mode.ACTIVE
        st.activated_at = tick

    def train(self) -> None:
        cfg = self.state.config
        u, y = self.training_data()
        if cfg.strategy is Strategy.FIR:
            model, um, ym = fir_train(u, y, cfg.fir_taps, cfg.fir_mu, cfg.fir_passes, lag=1)
            self.state.model = model
            self.fir_means = (um, ym)
        elif cfg.strategy is Strategy.ARX:
            self.state.model = arx_identify(u, y, cfg.na, cfg.nb, cfg.nk)
        elif cfg.strategy is Strategy.ARMAX:
            self.state.model = armax_identify(u, y, cfg.na, cfg.nb, cfg.nc, cfg.nk)

    # active phase

    def rewrite(self, frame: modbus.ModbusFrame, direction: Direction) -> bytes:
        fc = frame.function_code
        if direction is Direction.TO_PLANT and fc == modbus.WRITE_MULTIPLE:
            return self._rewrite_write(frame)
        if direction is Direction.TO_CONTROLLER and fc == modbus.READ_HOLDING:
            return self._rewrite_read_response(frame)
        return modbus.encode_modbus(frame)

    def _rewrite_write(self, frame: modbus.ModbusFrame) -> bytes:
        address, regs = modbus.parse_write_request(frame)
        if not address <= COMMAND_REGISTER < address + len(regs):
            return modbus.encode_modbus(frame)
        live = self.command_codec.decode(regs[COMMAND_REGISTER - address])
        k = self.writes_active
        self.writes_active += 1
        self.live_u.append(live)
        self.live_du.append(live - self.cap_u[k % len(self.cap_u)])
        if self.state.config.plant_action == "hold" and self.hold_register is not None:
            regs = list(regs)
            regs[COMMAND_REGISTER - address] = self.hold_register
            return modbus.encode_modbus(modbus.write_request(frame.transaction_id, frame.unit_id, address, regs))
        return modbus.encode_modbus(frame)

    def _rewrite_read_response(self, frame: modbus.ModbusFrame) -> bytes:
        k = self.reads_active
        self.reads_active += 1
        self.forged += 1
        j = k % len(self.cap_y_raw)
        if self.state.strategy is Strategy.REPLAY:
            return replay_inject(self.cap_y_raw[j], frame)
        y = forge_measurement(self, k)
        regs = modbus.parse_read_response(modbus.ModbusFrame(0, 0, modbus.READ_HOLDING, self.cap_y_raw[j]))
        regs[DISTANCE_REGISTER] = self.distance_codec.encode(y)
        return modbus.encode_modbus(modbus.read_response(frame.transaction_id, frame.unit_id, regs))


def replay_inject(captured_payload: bytes, live: modbus.ModbusFrame) -> bytes:
    """Captured response payload re-wrapped in the live session's header."""
    return modbus.encode_modbus(modbus.ModbusFrame(live.transaction_id, live.unit_id, live.function_code,
                                                   captured_payload))


def forge_measurement(node: AttackerNode, k: int) -> float:
    """Forged distance for the ``k``-th active read (``k = 0`` first)."""
    st = node.state
    model = st.model
    if model is None:
        raise ContractViolation("forging requires a trained model")
    compensated = st.config.forge_mode == "compensated"
    base = node.cap_y[k % len(node.cap_y)]
    du = node.live_du if compensated else None
    if isinstance(model, FirModel):
        if compensated:
            dy = sum(model.taps[i] * du[k - 1 - i] for i in range(min(model.T, k)))
            return base + dy
        um, ym = node.fir_means
        u_hist = node.cap_u + node.live_u
        n0 = len(node.cap_u)
        return ym + sum(model.taps[i] * (u_hist[n0 + k - 1 - i] - um) for i in range(model.T) if n0 + k - 1 - i >= 0)
    # ARX / ARMAX: run the deterministic part of the model
    a, b, nk = model.a, model.b, model.nk
    if compensated:
        dy_hist = node.forged_dy
        val = -sum(a[i] * dy_hist[k - 1 - i] for i in range(len(a)) if k - 1 - i >= 0)
        val += sum(b[j] * du[k - nk - j] for j in range(len(b)) if k - nk - j >= 0)
        dy_hist.append(val)
        return base + val
    y_hist = node.cap_y + node.forged_dy
    u_hist = node.cap_u + node.live_u
    n0 = len(node.cap_y)
    t = n0 + k
    val = -sum(a[i] * y_hist[t - 1 - i] for i in range(len(a)))
    val += sum(b[j] * u_hist[t - nk - j] for j in range(len(b)))
    node.forged_dy.append(val)
    return val
