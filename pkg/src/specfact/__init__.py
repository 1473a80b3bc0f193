"""Spectral-factorized positive-definite curvature learning.

Curvature matrices are carried as an orthogonal eigenbasis and a positive
eigenvalue vector, adapted by multiplicative eigenvalue updates and Cayley
rotations, so arbitrary fractional inverse roots cost one elementwise power
and no decomposition ever runs inside the update loop.
"""

from .curvature import (NesConfig, SpdProblem, gop_residual, nes_estimate,
                        spd_opt_residual, test_function)
from .errors import (ConfigError, DomainError, EvaluationError,
                     InvalidArgumentError, NumericalError, PositivityError,
                     PreconditionError)
from .kron import (KronSpectralFactor, clip_preconditioned, identity_kron_factor,
                   kron_precondition, kron_rgd_step_exact, kron_rgd_step_truncated,
                   normalize_kron)
from .spectral import (CurvatureResidual, SpectralFactor, UpdateConfig,
                       apply_inverse_root, diagonal_step, identity_factor,
                       reconstruct, rgd_step_exact, rgd_step_gop_truncated,
                       sample_gaussian)

__version__ = "1.0.0"

__all__ = [
    "ConfigError",
    "CurvatureResidual",
    "DomainError",
    "EvaluationError",
    "InvalidArgumentError",
    "KronSpectralFactor",
    "NesConfig",
    "NumericalError",
    "PositivityError",
    "PreconditionError",
    "SpdProblem",
    "SpectralFactor",
    "UpdateConfig",
    "apply_inverse_root",
    "clip_preconditioned",
    "diagonal_step",
    "gop_residual",
    "identity_factor",
    "identity_kron_factor",
    "kron_precondition",
    "kron_rgd_step_exact",
    "kron_rgd_step_truncated",
    "nes_estimate",
    "normalize_kron",
    "reconstruct",
    "rgd_step_exact",
    "rgd_step_gop_truncated",
    "sample_gaussian",
    "spd_opt_residual",
    "test_function",
]
