"""Exception hierarchy shared across the package."""

from __future__ import annotations


class RefineError(Exception):
    """Base class for every error raised by rsrefine."""


class ParseError(RefineError):
    """Source text could not be tokenized or its item structure is malformed."""

    def __init__(self, message: str, file: str | None = None, line: int | None = None, column: int | None = None):
        self.message = message
        self.file = file
        self.line = line
        self.column = column
        where = file or "<input>"
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        super().__init__(f"{where}: {message}")


class UnknownFunctionError(RefineError, KeyError):
    pass


class ToolchainError(RefineError):
    """The build environment is unusable (missing compiler, nothing to build, missing binary).

    Distinct from a compile failure, which is a normal search outcome.
    """


class ExtractionError(RefineError):
    """A model response carried no delimited function body."""


class ProviderError(RefineError):
    """Transport-level failure talking to a model provider; retriable."""


class ConfigError(RefineError):
    pass
