"""Error taxonomy shared across the package.

Each category maps to a distinct CLI exit code so that scripted callers can
tell parse problems from domain violations from numerical failures.
"""

from __future__ import annotations


class KfpError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class SpecFileError(KfpError):
    """Malformed or inconsistent input document (model spec, experiment config)."""

    exit_code = 2


class DomainError(KfpError):
    """Input outside the mathematical domain (poles on the unit circle,
    non-stationary coefficients, bound violations, unknown catalog ids)."""

    exit_code = 3


class GeometryError(DomainError):
    """Degenerate geometry: metric not positive definite at the point."""


class PrecisionError(KfpError):
    """A numerical target could not be met (truncation cap reached,
    quadrature mass underflow)."""

    exit_code = 4


class ConsistencyError(KfpError):
    """Two internal routes that must agree did not (imaginary residue of a
    real quantity, analytic vs finite-difference mismatch)."""

    exit_code = 5


class PrecisionWarning(UserWarning):
    """Non-fatal numerical caveat (ill-conditioned metric near the unit circle)."""
