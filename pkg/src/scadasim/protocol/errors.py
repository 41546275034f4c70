from ..errors import ScadaSimError


class CodecError(ScadaSimError, ValueError):
    """Base class for wire-format encode/decode failures."""


class ShortBufferError(CodecError):
    pass


class ProtocolIdError(CodecError):
    pass


class LengthMismatchError(CodecError):
    pass


class UnknownFunctionError(CodecError):
    pass


class StartBytesError(CodecError):
    pass


class CrcError(CodecError):
    pass
