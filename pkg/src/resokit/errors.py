"""Exception hierarchy.

Two top branches matter for exit codes and HTTP mapping: ValidationFailure
(bad user-supplied specs or files, CLI exit 2, HTTP 422) and NumericalFailure
(a computation that could not be completed reliably, CLI exit 3, HTTP 500
with a structured body).
"""

from __future__ import annotations


class ResokitError(Exception):
    """Base class; carries an optional details dict for reports."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


class ValidationFailure(ResokitError):
    """Semantic problem in a config, spec or input file. Exit code 2."""

    def __init__(self, message: str, path: str = "", **details):
        super().__init__(message, **details)
        self.path = path  # dotted field path inside the offending document


class NumericalFailure(ResokitError):
    """A numerical procedure failed or refused to proceed. Exit code 3."""


class PoleAt(NumericalFailure):
    """Evaluation point hit (or came too close to) a pole of the potential."""

    def __init__(self, x, message=None):
        super().__init__(message or f"evaluation at or near a pole: x={x}", x=x)
        self.x = x


class XDependence(ValidationFailure):
    """Wronskian of the base solutions depends on x: inconsistent base data."""


class NonConvergence(NumericalFailure):
    """Iteration (Neumann series, Newton, ...) failed to reach tolerance."""


class StepTooLarge(NumericalFailure):
    """ODE step violates the |z|*step accuracy guard."""


class NearZeroDenominator(NumericalFailure):
    """M-function requested within the guard distance of a zero of psi(.,0)."""

    def __init__(self, z, distance, message=None):
        super().__init__(
            message or f"M evaluation at z={z} is within {distance:.3e} of a zero",
            z=z, distance=distance)
        self.z = z
        self.distance = distance


class ContourThroughZero(NumericalFailure):
    """A winding contour passes through (or too near) a zero."""


class NonIntegerWinding(NumericalFailure):
    """Accumulated phase does not close to an integer multiple of 2*pi."""


class MaxDepth(NumericalFailure):
    """Adaptive subdivision exceeded its depth budget."""


class ZeroContactDerivative(ValidationFailure):
    """The declared contact-order derivative of q - q0 vanishes at R."""


class ZeroAtOrigin(NumericalFailure):
    """A zero sits at (or within the notch around) z = 0, where W vanishes."""


class IllConditionedFit(NumericalFailure):
    """An asymptotic least-squares fit left a residual above threshold."""

    def __init__(self, message, residual, **details):
        super().__init__(message, residual=residual, **details)
        self.residual = residual


class PsiMinusZeroVanishes(NumericalFailure):
    """Both z_j and -z_j are zeros: the derivative recursion degenerates."""


class WZeroCollision(NumericalFailure):
    """A zero of psi(.,0) collides with a zero of the base Wronskian."""

    def __init__(self, offending, message=None):
        super().__init__(
            message or "zero(s) collide with a Wronskian zero: "
            + ", ".join(format(z, ".6g") for z in offending),
            offending=offending)
        self.offending = list(offending)


class EvaluationAtPole(NumericalFailure):
    """Reconstructed M evaluated too close to one of its poles."""


class InsufficientZeros(NumericalFailure):
    """Too few retained zeros for the requested reconstruction."""
