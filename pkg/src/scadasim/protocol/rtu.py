"""RTU proxy translating DNP3-lite requests into Modbus transactions and back."""
from __future__ import annotations

from dataclasses import dataclass

from . import dnp3, modbus
from .errors import CodecError
from .registers import RegisterMap


def rtu_translate(request: dnp3.Dnp3Frame, register_map: RegisterMap, tid: int = 1, unit: int = 1):
    """Modbus frames implementing ``request``, or a DNP3 error response.

    An integrity scan becomes one read spanning every register of the PLC;
    a direct operate becomes a single-register write.
    """
    fn = request.app_function
    if fn is dnp3.AppFunction.READ_INTEGRITY and len(request.app_payload) == 1:
        return [modbus.read_request(tid, unit, 0, register_map.size)]
    if fn is dnp3.AppFunction.DIRECT_OPERATE:
        try:
            address, value = dnp3.parse_direct_operate(request)
        except CodecError:
            return error_response(request, dnp3.Status.BAD_REQUEST)
        return [modbus.write_request(tid, unit, address, [value])]
    return error_response(request, dnp3.Status.UNSUPPORTED_FUNCTION)


def error_response(request: dnp3.Dnp3Frame, status: int) -> dnp3.Dnp3Frame:
    return dnp3.response(request.source, request.destination, (), status)


def translate_back(request: dnp3.Dnp3Frame, reply: modbus.ModbusFrame) -> dnp3.Dnp3Frame:
    """DNP3 RESPONSE for ``request`` built from the PLC's Modbus reply."""
    if reply.is_exception:
        return error_response(request, dnp3.Status.DOWNSTREAM_EXCEPTION)
    try:
        if reply.function_code == modbus.READ_HOLDING:
            values = modbus.parse_read_response(reply)
        else:
            modbus.parse_write_response(reply)
            values = []
    except CodecError:
        return error_response(request, dnp3.Status.DOWNSTREAM_EXCEPTION)
    return dnp3.response(request.source, request.destination, values)


@dataclass
class RtuProxy:
    """Stateful wrapper that numbers the Modbus transactions it issues."""

    address: int
    register_span: int = 16
    unit_id: int = 1
    next_tid: int = 1

    def translate_request(self, request: dnp3.Dnp3Frame):
        out = rtu_translate(request, RegisterMap(self.register_span), self.next_tid, self.unit_id)
        if isinstance(out, list):
            self.next_tid = (self.next_tid + 1) & 0xFFFF
        return out

    def translate_response(self, request: dnp3.Dnp3Frame, reply: modbus.ModbusFrame) -> dnp3.Dnp3Frame:
        return translate_back(request, reply)
