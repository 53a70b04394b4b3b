"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage problems are caught by argparse,
DataFormatError / IntegrityError exit with 2, anything else with 3.
"""


class NgashError(Exception):
    """Base class for errors raised by this package."""


class DataFormatError(NgashError):
    """A file or stream could not be parsed (bad syntax, truncation, wrong magic)."""


class IntegrityError(NgashError):
    """Parsed data is internally inconsistent or incompatible with the build."""


class TrainingError(NgashError):
    """Optimization failed, e.g. the loss became non-finite."""
