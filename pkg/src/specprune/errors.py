"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """An operation was called with arguments violating its precondition."""


class FormatError(ValueError):
    """A binary artifact is malformed (bad magic, version, or truncation).

    `offset` is the byte offset at which the problem was detected, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (at byte {offset})")
        self.offset = offset


class SpecError(ValueError):
    """A network description file failed to parse or validate.

    `line` is the 1-based line number in the source file, when known.
    """

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class StageError(RuntimeError):
    """A pipeline stage was invoked without its required input artifacts."""


class SafeguardViolation(RuntimeError):
    """A prune mask reached the engine with an empty keep-set.

    The minimum-keep safeguard makes this unreachable through the normal
    selection path; seeing it means a contract was bypassed.
    """
