"""Exception hierarchy and the CLI exit codes bound to it."""


class BoundprintError(Exception):
    exit_code = 1


class InputError(BoundprintError, ValueError):
    """Bad arguments, shapes, or labels."""

    exit_code = 3


class FormatError(BoundprintError):
    """A model, fingerprint, or report file could not be decoded."""

    exit_code = 3


class NumericError(BoundprintError, ArithmeticError):
    exit_code = 4


class QueryError(BoundprintError):
    """An oracle failed to answer; ``index`` names the offending point."""

    exit_code = 3

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class StageError(BoundprintError):
    """Wraps a failure with the pipeline stage it happened in."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
