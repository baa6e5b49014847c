"""resokit: forward and inverse resonance computations on the half line.

Forward: build the transformation-operator kernel of a compactly supported
perturbation of an algebro-geometric base potential, evaluate the perturbed
Jost solution and Weyl m-function, and locate/certify eigenvalues and
resonances as zeros of psi(., 0). Inverse: reconstruct the m-function from
the zero set alone via a genus-1 canonical product and residue series.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ContourThroughZero,
    EvaluationAtPole,
    IllConditionedFit,
    InsufficientZeros,
    MaxDepth,
    NearZeroDenominator,
    NonConvergence,
    NonIntegerWinding,
    NumericalFailure,
    PoleAt,
    PsiMinusZeroVanishes,
    ResokitError,
    StepTooLarge,
    ValidationFailure,
    WZeroCollision,
    XDependence,
    ZeroAtOrigin,
    ZeroContactDerivative,
)
from .potential import BasePotential, WronskianPoly, pe, xi  # noqa: F401
