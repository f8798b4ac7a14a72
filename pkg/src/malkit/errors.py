"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 2, NumericError -> 3,
MetricUndefinedError -> 4, anything else under MalkitError -> 1.
"""


class MalkitError(Exception):
    """Base class for every error raised by malkit."""


class ConfigError(MalkitError):
    """Invalid configuration file, flag, or field value."""


class SpecError(ConfigError):
    """Model specification violates a structural invariant."""


class ContractError(MalkitError):
    """An API was called outside its contract (shapes, ordering, reuse)."""


class DimensionError(ContractError):
    """Operands with incompatible shapes."""


class FeatureError(ContractError):
    """A categorical id fell outside its feature's vocabulary."""


class NumericError(MalkitError):
    """A nonfinite value appeared where finite math was required."""


class MetricUndefinedError(MalkitError):
    """A metric has no defined value on the given data (e.g. single-class)."""


class ParseError(MalkitError):
    """A file could not be parsed; message carries line/column context."""


class GenerationError(MalkitError):
    """The synthetic generator produced a degenerate dataset."""
