"""Exception hierarchy shared across the package.

Domain failures that callers are expected to branch on get their own class;
everything inherits from EgodbError so library users can catch broadly.
"""

from __future__ import annotations


class EgodbError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(EgodbError, ValueError):
    """A caller violated an operation precondition."""


class InvariantViolationError(EgodbError, ValueError):
    """A domain object violates one of its declared invariants."""


class ValidationError(EgodbError, ValueError):
    """Metadata failed validation; carries the per-field violation list."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


class NotFoundError(EgodbError, KeyError):
    """A referenced episode or object does not exist."""

    def __str__(self) -> str:  # KeyError quotes its arg by default
        return self.args[0] if self.args else ""


class ConflictError(EgodbError):
    """An episode_hash is already registered with different immutable content."""


class PreconditionError(EgodbError):
    """The target record is in a state that forbids this update."""


class TransportError(EgodbError):
    """A store or registry backend could not be reached or failed mid-call."""

    def __init__(self, message: str, *, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class TruncatedStreamError(EgodbError):
    """A canonical episode stream ended before its declared contents."""


class UnknownVersionError(EgodbError):
    """A canonical episode stream declares an unsupported format version."""


class MalformedHeaderError(EgodbError):
    """A canonical episode header is not parseable."""


class InsufficientDataError(EgodbError):
    """A track is too short for the requested resampling window."""


class ContractViolationError(EgodbError):
    """A caller-supplied callback broke its declared contract."""


class ScanBusyError(EgodbError):
    """A store scan is already in flight in this process."""


class AdapterDecodeError(EgodbError):
    """A source adapter could not decode a raw episode blob."""
