"""Error types mapped onto CLI exit codes."""


class MvpbError(Exception):
    exit_code = 1


class PreconditionError(MvpbError, ValueError):
    """An input violates a documented precondition (exit code 2)."""

    exit_code = 2


class ConvergenceError(MvpbError, RuntimeError):
    """A numerical procedure failed to reach its tolerance (exit code 3)."""

    exit_code = 3

    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved
