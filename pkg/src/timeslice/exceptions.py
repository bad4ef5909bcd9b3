"""Exception hierarchy for numerical guards.

Every guard in the package raises a subclass of :class:`GuardError` so that
experiment drivers can abort a run with the name of the guard that tripped.
"""

from __future__ import annotations


class GuardError(RuntimeError):
    """Base class for all guard violations.

    Attributes
    ----------
    guard : str
        Short machine-readable name of the guard.
    """

    guard = "guard"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


class BoundaryMassError(GuardError):
    """Too much |f|^2 mass sits near the edge of the computational box."""

    guard = "boundary-mass"


class ResolutionError(GuardError):
    """The grid cannot resolve an oscillatory phase.

    ``details["required_n"]`` holds the smallest power-of-two grid size that
    would pass the check.
    """

    guard = "resolution"

    @property
    def required_n(self) -> int | None:
        return self.details.get("required_n")


class CausticError(GuardError):
    """Short-time threshold exceeded: the two-point boundary problem degenerates."""

    guard = "caustic"


class IntegrationError(GuardError):
    """The Hamiltonian flow produced a non-finite state."""

    guard = "integration"


class FocalTimeError(GuardError):
    """Closed-form harmonic kernel requested too close to a focal time."""

    guard = "focal-time"


class CoverageError(GuardError):
    """A phase-space lattice does not cover the short-time Fourier transform."""

    guard = "coverage"


class FitError(GuardError):
    """Not enough valid points for a slope fit."""

    guard = "fit"
