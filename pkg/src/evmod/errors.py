"""Exception types shared across the package."""


class EvmodError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(EvmodError):
    """Tensor arguments do not satisfy an operator's shape contract."""


class BadMagic(EvmodError):
    """A binary file does not start with the expected magic bytes."""


class TruncatedFile(EvmodError):
    """A binary file ends before the promised record count."""


class NonMonotonicTimestamp(EvmodError):
    """An event stream contains a timestamp decrease.

    Carries ``index`` of the first offending record.
    """

    def __init__(self, index: int):
        super().__init__(f"timestamp decreases at record {index}")
        self.index = index


class OutOfBoundsEvent(EvmodError):
    """An event lies outside the sensor bounds.

    Carries ``index`` of the first offending record.
    """

    def __init__(self, index: int):
        super().__init__(f"event out of sensor bounds at record {index}")
        self.index = index


class ParseError(EvmodError):
    """A CSV row cannot be parsed. Carries the 1-based ``line`` number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InvalidBox(EvmodError):
    """An annotation row violates box invariants. Carries the ``line`` number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NonFiniteGradient(EvmodError):
    """A backward pass produced NaN or Inf."""


class NonFiniteLoss(EvmodError):
    """A loss evaluation produced NaN or Inf."""


class ConfigError(EvmodError):
    """A configuration file or flag set is invalid. CLI exit code 2."""


class DataError(EvmodError):
    """A dataset directory or file is missing or malformed. CLI exit code 3."""


class CheckpointMismatch(EvmodError):
    """A checkpoint does not match the model it is loaded into."""
