"""Exception types shared across the package.

The CLI maps these onto exit codes: ArgumentError -> 2, DataError and its
subclasses (plus OSError from file handling) -> 3, anything else -> 4.
"""


class FundusXaiError(Exception):
    """Base class for package-specific errors."""


class ArgumentError(FundusXaiError):
    """A caller-supplied argument is unusable (bad flag value, unknown layer,
    class index out of range, missing or empty input listing)."""


class DataError(FundusXaiError):
    """Input data violates the documented contract (bad labels, probability
    rows that do not normalize, mismatched mask pairs)."""


class ShapeError(DataError):
    """Array dimensions are incompatible with an operation."""


class ParseError(DataError):
    """A structured file (weights JSON, manifest, predictions table) is
    malformed; the message names the offending field or line."""


class FormatError(DataError):
    """An image file uses an unsupported encoding or channel layout."""
