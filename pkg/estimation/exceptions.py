"""
Errors raised by the metaorder dataset tools and the estimators.
"""


class IdentificationError(ValueError):
    """The records cannot identify the requested parameters."""


class ConvergenceError(RuntimeError):
    """A fit stopped before converging; its estimates are not reported."""


class MetaorderFormatError(ValueError):
    """Metaorder CSV that does not follow the schema. ``line`` is 1-based, the header being line 1."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)
