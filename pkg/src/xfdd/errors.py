"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2, data
problems exit 3, numerical divergence exits 4.
"""


class XfddError(Exception):
    """Base class for all package errors."""


class ConfigurationError(XfddError):
    """Invalid specification, config file, or parameter value."""


class ShapeError(XfddError):
    """Array dimensions do not chain or do not match."""


class DataError(XfddError):
    """Ingestion or labeling problem in an input dataset."""


class DivergenceError(XfddError):
    """Training produced a non-finite loss or gradient."""


class RelevanceError(XfddError):
    """Attribution failed (bad class index, non-finite intermediate)."""
