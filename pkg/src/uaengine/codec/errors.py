class CodecError(Exception):
    """Base class for every encode/decode failure."""


class Truncated(CodecError):
    pass


class MalformedEncoding(CodecError):
    pass


class LimitExceeded(CodecError):
    pass


class UnsupportedType(CodecError):
    pass
