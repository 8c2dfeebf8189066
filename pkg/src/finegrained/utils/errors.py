"""Exception types shared by every finegrained module."""

from pathlib import Path


class FineGrainedError(Exception):
    """Base class for all errors raised by finegrained."""


class ArgumentError(FineGrainedError, ValueError):
    """Error raised when an operation's precondition is violated."""

    def __init__(self, name: str, detail: str) -> None:
        """Initialize the error.

        Args:
            name: Name of the offending argument
            detail: What is wrong with it
        """
        self.name = name
        self.detail = detail
        super().__init__(f"Invalid argument '{name}': {detail}")


class UnsupportedGateError(ArgumentError):
    """Error raised when a polynomial needs a gate outside the circuit's gate set."""

    def __init__(self, degree: int, max_degree: int) -> None:
        """Initialize the error.

        Args:
            degree: Degree of the polynomial that was passed in
            max_degree: Largest degree the gate set supports
        """
        self.degree = degree
        self.max_degree = max_degree
        super().__init__("f", f"degree {degree} exceeds the supported maximum {max_degree}")


class ResourceLimitError(FineGrainedError, RuntimeError):
    """Error raised when an exhaustive computation would exceed its configured budget."""

    def __init__(self, resource: str, requested: int, limit: int) -> None:
        """Initialize the error.

        Args:
            resource: Which budget was exceeded (for example "enumeration bits")
            requested: Size that was requested, in bits
            limit: Configured maximum, in bits
        """
        self.resource = resource
        self.requested = requested
        self.limit = limit
        super().__init__(f"{resource}: requested {requested} bits, limit is {limit} bits")


class ConfigurationError(FineGrainedError, ValueError):
    """Error raised when experiment parameters are infeasible or inconsistent."""


class InputFormatError(ArgumentError):
    """Error raised when an input file violates its format invariants."""

    def __init__(self, source: str | Path, invariant: str) -> None:
        """Initialize the error.

        Args:
            source: File path (or "<string>") the data came from
            invariant: Description of the violated invariant
        """
        self.source = source
        self.invariant = invariant
        FineGrainedError.__init__(self, f"{source}: {invariant}")
        self.name = str(source)
        self.detail = invariant
