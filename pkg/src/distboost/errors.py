"""Exception hierarchy.

Two broad groups matter to the command line: configuration errors (bad flags,
unknown family names, out-of-range probabilities) and data errors (malformed
CSV input, values outside a family's support, schema mismatches).
"""


class DistBoostError(Exception):
    """Base class for all package errors."""


class ConfigError(DistBoostError, ValueError):
    """Invalid settings or arguments."""


class DataError(DistBoostError, ValueError):
    """Invalid or inconsistent data."""


class MissingColumn(DataError):
    pass


class NonNumericValue(DataError):
    pass


class MissingValue(DataError):
    pass


class EmptyDataset(DataError):
    pass


class WidthMismatch(DataError):
    pass


class EmptyInput(DataError):
    pass


class TooFewRows(DataError):
    pass


class SupportViolation(DataError):
    pass


class InvalidParams(DataError):
    pass


class ZeroDenominator(DataError):
    pass


class ModelFormatError(DataError):
    pass


class CategoricalUnsupported(DataError):
    pass


class BadFraction(ConfigError):
    pass


class BadProbability(ConfigError):
    pass


class BadTau(ConfigError):
    pass


class UnknownFamily(ConfigError):
    pass


class AllCandidatesFailed(DistBoostError):
    pass


class NoConvergence(DistBoostError, RuntimeError):
    pass
