class A2SNASException(Exception):
    pass


class ShapeMismatchException(A2SNASException):
    """
    Raised when an operation receives tensors whose extents do not agree.

    :type op: str
    :param op: name of the operation (or network stage) that rejected the input

    :type expected: tuple
    :param expected: shape the operation expected

    :type actual: tuple
    :param actual: shape the operation received
    """

    def __init__(self, op, expected, actual, detail=None):
        self.op = op
        self.expected = tuple(expected)
        self.actual = tuple(actual)
        message = f"{op}: expected shape {self.expected}, got {self.actual}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class InvalidArgumentException(A2SNASException):
    pass


class TapeConsumedException(A2SNASException):
    pass


class DuplicateParameterException(A2SNASException):
    pass


class GenotypeParseException(A2SNASException):
    """
    Raised when a genotype document cannot be parsed.

    :type position: str
    :param position: location inside the document (e.g. "blocks[3].outer")
    """

    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} at {position}"
        super().__init__(message)


class FingerprintMismatchException(A2SNASException):
    pass


class CheckpointFormatException(A2SNASException):
    pass


class CubeFormatException(A2SNASException):
    pass


class SplitException(A2SNASException):
    pass


class ConfigException(A2SNASException):
    """
    Raised for a missing, unknown or malformed run-config key.

    :type key: str
    :param key: the offending key
    """

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"config key '{key}': {message}")


class UsageException(A2SNASException):
    pass
