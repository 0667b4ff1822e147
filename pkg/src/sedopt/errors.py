"""Exception hierarchy shared by all sedopt modules."""

from __future__ import annotations


class SedoptError(Exception):
    """Base class for all errors raised by this package."""


class InputError(SedoptError, ValueError):
    """An argument violates a precondition (wrong sign, shape, ordering...)."""


class StructureError(SedoptError):
    """Data is well-formed but structurally unusable (reducible chain,
    non-contiguous replenish set, mismatched field shapes)."""


class DomainError(SedoptError, ValueError):
    """The requested operation is undefined for these parameter values."""


class NoInteriorThresholdError(DomainError):
    """No replenishment threshold exists strictly inside (0, 1)."""


class InstabilityError(SedoptError, RuntimeError):
    """The pseudo-time iteration produced non-finite values.

    Carries the stable step-size estimate in :attr:`cfl_bound`.
    """

    def __init__(self, message: str, cfl_bound: float):
        super().__init__(message)
        self.cfl_bound = cfl_bound
