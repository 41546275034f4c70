from .crc import crc_dnp
from .dnp3 import AppFunction, Dnp3Frame, decode_dnp3, encode_dnp3
from .modbus import ModbusFrame, decode_modbus, encode_modbus
from .registers import FixedPoint, RegisterMap, register_decode, register_encode
from .rtu import RtuProxy, rtu_translate

__all__ = [
    "AppFunction", "Dnp3Frame", "FixedPoint", "ModbusFrame", "RegisterMap", "RtuProxy",
    "crc_dnp", "decode_dnp3", "decode_modbus", "encode_dnp3", "encode_modbus",
    "register_decode", "register_encode", "rtu_translate",
]
