"""Node handlers: PLC with the physical plant, RTU proxy, and the controller."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import control
from .control import LqgDesign, PlantState, StateSpaceModel
from .detector import DetectorConfig, DetectorState, alert_step, gt_update
from .network import Event, Fabric, NodeId, Role
from .protocol import dnp3, modbus
from .protocol.errors import CodecError
from .protocol.registers import COMMAND_REGISTER, DISTANCE_REGISTER, FixedPoint, RegisterMap
from .protocol.rtu import RtuProxy
from .rng import GaussianSource
from .watermark import WatermarkConfig, WatermarkState, apply_watermark, next_watermark


@dataclass(frozen=True)
class SignalCodecs:
    """Register scaling for the two plant signals.

    The command register is offset so negative drive commands fit.
    """

    distance_scale: float = 100.0
    distance_offset: float = 0.0
    command_scale: float = 1000.0
    command_offset: float = -32.768

    def distance(self) -> FixedPoint:
        return FixedPoint(self.distance_scale, self.distance_offset)

    def command(self) -> FixedPoint:
        return FixedPoint(self.command_scale, self.command_offset)


def handle_modbus(registers: RegisterMap, request: bytes) -> bytes | None:
    """Serve one Modbus request against ``registers``; None if undecodable."""
    try:
        req = modbus.decode_modbus(request)
    except CodecError:
        return None
    tid, unit, fc = req.transaction_id, req.unit_id, req.function_code
    try:
        if fc == modbus.READ_HOLDING:
            address, qty = modbus.parse_read_request(req)
            if not registers.in_range(address, qty):
                reply = modbus.exception_response(tid, unit, fc, modbus.ILLEGAL_ADDRESS)
            else:
                reply = modbus.read_response(tid, unit, registers.read(address, qty))
        elif fc == modbus.WRITE_MULTIPLE:
            address, values = modbus.parse_write_request(req)
            if not registers.in_range(address, len(values)):
                reply = modbus.exception_response(tid, unit, fc, modbus.ILLEGAL_ADDRESS)
            else:
                registers.write(address, values)
                reply = modbus.write_response(tid, unit, address, len(values))
        else:
            reply = modbus.exception_response(tid, unit, fc, modbus.ILLEGAL_FUNCTION)
    except CodecError:
        reply = modbus.exception_response(tid, unit, fc, modbus.ILLEGAL_VALUE)
    return modbus.encode_modbus(reply)


class PlcNode:
    """Field device holding the plant.

    At the start of every tick after the first it applies the command
    register to the plant, then samples the distance into register 0.
    It only ever transmits in reply to a request.
    """

    def __init__(self, label: str, model: StateSpaceModel, x0, process_seed: int, sensor_seed: int,
                 codecs: SignalCodecs = SignalCodecs(), register_count: int = 16, initial_command: float = 0.0):
        self.node_id = NodeId(label, Role.PLC)
        self.model = model
        self.state = PlantState(np.asarray(x0, dtype=float), 0)
        self.process_noise = GaussianSource(np.zeros(model.n), model.Q, process_seed)
        self.sensor_noise = GaussianSource(np.zeros(model.p), model.R, sensor_seed)
        self.registers = RegisterMap(register_count)
        self.distance_codec = codecs.distance()
        self.command_codec = codecs.command()
        self.registers.holding[COMMAND_REGISTER] = self.command_codec.encode(initial_command)
        self.true_states: list[np.ndarray] = []
        self.applied_commands: list[float] = []
        self.frames_sent = 0
        self.unsolicited = 0
        self._answering = False

    def on_tick(self, fabric: Fabric, t: int) -> None:
        if t > 0:
            u = self.command_codec.decode(self.registers.holding[COMMAND_REGISTER])
            self.applied_commands.append(u)
            self.state = control.step_plant(self.model, self.state, [u], self.process_noise)
        y = control.measure(self.model, self.state, self.sensor_noise)
        self.registers.holding[DISTANCE_REGISTER] = self.distance_codec.encode(y[0])
        self.true_states.append(self.state.x)

    def on_frame(self, fabric: Fabric, event: Event) -> None:
        reply = handle_modbus(self.registers, event.frame)
        if reply is not None:
            self.frames_sent += 1
            fabric.send(self.node_id, event.source, reply)


class RtuNode:
    """Proxy between the DNP3 master and the Modbus PLC."""

    def __init__(self, label: str, plc: NodeId, dnp3_address: int = 10, register_count: int = 16):
        self.node_id = NodeId(label, Role.RTU)
        self.plc = plc
        self.proxy = RtuProxy(dnp3_address, register_count)
        self.pending: dict[int, tuple[NodeId, dnp3.Dnp3Frame]] = {}
        self.dropped = 0
        self.frames_sent = 0

    def on_frame(self, fabric: Fabric, event: Event) -> None:
        if event.source == self.plc:
            self._from_plc(fabric, event)
        else:
            self._from_master(fabric, event)

    def _from_master(self, fabric: Fabric, event: Event) -> None:
        try:
            request = dnp3.decode_dnp3(event.frame)
        except CodecError:
            self.dropped += 1
            return
        out = self.proxy.translate_request(request)
        if isinstance(out, dnp3.Dnp3Frame):
            fabric.send(self.node_id, event.source, dnp3.encode_dnp3(out))
            self.frames_sent += 1
            return
        for frame in out:
            self.pending[frame.transaction_id] = (event.source, request)
            fabric.send(self.node_id, self.plc, modbus.encode_modbus(frame))
            self.frames_sent += 1

    def _from_plc(self, fabric: Fabric, event: Event) -> None:
        try:
            reply = modbus.decode_modbus(event.frame)
        except CodecError:
            self.dropped += 1
            return
        entry = self.pending.pop(reply.transaction_id, None)
        if entry is None:
            self.dropped += 1
            return
        master, request = entry
        fabric.send(self.node_id, master, dnp3.encode_dnp3(self.proxy.translate_response(request, reply)))
        self.frames_sent += 1


@dataclass
class TraceRow:
    tick: int
    g_t: float
    risk: int
    alert: int
    y: float
    u: float
    residual: float
    fault: bool = False


class ControllerNode:
    """Master station running the LQG loop, the watermark and the detector.

    Start of tick: issue an integrity scan on sensor ticks.  End of tick:
    fold in the measurement if it arrived (Kalman update plus detector),
    otherwise run a predict-only step, then write the next command on
    controller ticks.
    """

    def __init__(self, label: str, rtu: NodeId, design: LqgDesign, x0, reference,
                 watermark: WatermarkConfig, detector: DetectorConfig,
                 controller_period: int = 1, sensor_period: int = 1, timeout_ticks: int = 10,
                 codecs: SignalCodecs = SignalCodecs(), dnp3_address: int = 1, rtu_address: int = 10,
                 initial_command: float = 0.0):
        self.node_id = NodeId(label, Role.MTU)
        self.rtu = rtu
        self.design = design
        self.model = design.model
        self.x_hat = np.asarray(x0, dtype=float).copy()
        self.reference = np.asarray(reference, dtype=float)
        self.wm_config = watermark
        self.wm_state = WatermarkState.initial(watermark)
        self.det_config = detector
        self.det_state = DetectorState.from_sigma(design.Sigma, detector.gwindow)
        self.controller_period = controller_period
        self.sensor_period = sensor_period
        self.timeout_ticks = timeout_ticks
        self.distance_codec = codecs.distance()
        self.command_codec = codecs.command()
        self.address = dnp3_address
        self.rtu_address = rtu_address
        self.u_last = np.array([self.command_codec.quantize(initial_command)])
        self.trace: list[TraceRow] = []
        self.watermarks: list[float] = []
        self.commands: list[float] = []
        self.measurement: float | None = None
        self.read_issued: int | None = None
        self.awaiting_read = False
        self.faults = 0
        self.last_residual = np.zeros(self.model.p)
        self.responses = 0
        self.rejected = 0

    def on_tick(self, fabric: Fabric, t: int) -> None:
        """Poll the distance on sensor ticks."""
        if t % self.sensor_period == 0 and not self.awaiting_read:
            self.awaiting_read = True
            self.read_issued = t
            fabric.send(self.node_id, self.rtu, dnp3.encode_dnp3(dnp3.read_integrity(self.rtu_address, self.address)))

    def on_frame(self, fabric: Fabric, event: Event) -> None:
        try:
            frame = dnp3.decode_dnp3(event.frame)
            status, values = dnp3.parse_response(frame)
        except CodecError:
            self.rejected += 1
            return
        self.responses += 1
        if self.awaiting_read and len(values) > DISTANCE_REGISTER and status == dnp3.Status.OK:
            self.measurement = self.distance_codec.decode(values[DISTANCE_REGISTER])
            self.awaiting_read = False

    def on_tick_end(self, fabric: Fabric, t: int) -> None:
        if self.measurement is not None:
            y = self.measurement
            self.measurement = None
            self.x_hat, _, r = control.kalman_step(self.x_hat, self.design.K, self.model, self.u_last, [y])
            self.last_residual = r
            self._detect(t, r, y, fault=False)
        else:
            self.x_hat = control.kalman_predict(self.model, self.x_hat, self.u_last)
            if self.awaiting_read and t - self.read_issued >= self.timeout_ticks:
                # timeout: feed the stale residual as a fault sample
                self.faults += 1
                self.awaiting_read = False
                self._detect(t, self.last_residual, float("nan"), fault=True)
        if t % self.controller_period == 0:
            self._write(fabric, t)

    def _detect(self, t: int, r: np.ndarray, y: float, fault: bool) -> None:
        g, _ = gt_update(self.det_state, r)
        alert_step(self.det_config, self.det_state, g)
        s = self.det_state
        self.trace.append(TraceRow(t, g, s.risk, s.alert, y, float(self.u_last[0]), float(r[0]), fault))

    def _write(self, fabric: Fabric, t: int) -> None:
        u_star = -self.design.L @ (self.x_hat - self.reference)
        delta_u, _ = next_watermark(self.wm_config, self.wm_state)
        u = apply_watermark(u_star, delta_u)
        register = self.command_codec.encode(u[0])
        self.u_last = np.array([self.command_codec.decode(register)])
        self.watermarks.append(float(delta_u[0]))
        self.commands.append(float(self.u_last[0]))
        fabric.send(self.node_id, self.rtu,
                    dnp3.encode_dnp3(dnp3.direct_operate(self.rtu_address, self.address, COMMAND_REGISTER, register)))
