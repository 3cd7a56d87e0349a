"""Exception hierarchy.

ConfigError maps to CLI exit code 2, NumericalError (and subclasses) to 3;
I/O problems surface as the interpreter's OSError and map to 4.
"""

from __future__ import annotations


class QswitchError(Exception):
    """Base class for package errors."""


class ConfigError(QswitchError):
    """Invalid configuration input (bad key, value, unit, or combination)."""


class NumericalError(QswitchError):
    """A numerical procedure failed or left its validity domain."""


class IntegratorError(NumericalError):
    """Time integration failed (step underflow, conservation violated)."""


class ModeAmbiguityError(NumericalError):
    """Floquet modes could not be matched to the target subspace."""


class FitConvergenceError(NumericalError):
    """An iterative fit failed to converge."""


class DomainError(NumericalError):
    """A calibration map was evaluated or inverted outside its domain."""


class PeriodMismatchError(NumericalError):
    """A Floquet analysis was requested for a non-periodic Hamiltonian."""
