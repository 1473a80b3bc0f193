"""Reference schemes the spectral learners are validated against.

The default dense EMA curvature update with eigendecomposition-based
preconditioning, and the nearest-Kronecker-product projection scheme.
Both materialize dense matrices and exist for validation dimensions only.
"""

import numpy as np

from . import linalg
from .errors import DomainError, InvalidArgumentError, PreconditionError

# Dense (n*m)^2 materialization cap for the projection baseline.
KRON_DENSE_CAP = 200


def ema_full_step(S, g, beta2, gamma, lam=0.0):
    """Default dense curvature update S' = (1 - gamma beta2) S + beta2 (g g^T + lam I)."""
    S = np.asarray(S)
    g = np.asarray(g)
    if S.shape != (g.size, g.size):
        raise InvalidArgumentError("shapes of S and g do not match")
    if gamma * beta2 >= 1.0:
        raise PreconditionError("gamma*beta2 >= 1 loses positive definiteness")
    out = (1.0 - gamma * beta2) * S + beta2 * np.outer(g, g)
    if lam != 0.0:
        out = out + beta2 * lam * np.eye(g.size, dtype=out.dtype)
    return out


def eigen_precondition(S, g, p):
    """Apply S^{-1/p} to g through an explicit eigendecomposition."""
    if p <= 0:
        raise InvalidArgumentError("root exponent p must be positive")
    B, d = linalg.sym_eigendecompose(S)
    if np.min(d) <= 0:
        raise DomainError(f"matrix is not SPD (min eigenvalue {np.min(d):.3e})")
    return B @ (d ** (-1.0 / p) * (B.T @ np.asarray(g)))


def nearest_kron_project(S, n, m):
    """Frobenius-nearest Kronecker factorization S ~ SC kron SK.

    Rearranges S into the n^2-by-m^2 matrix whose rank-1 approximations
    correspond to Kronecker products, takes the dominant singular pair,
    folds back, then symmetrizes, fixes signs so both traces are positive,
    and normalizes the gauge to trace(SC) = n.
    """
    S = np.asarray(S)
    if S.shape != (n * m, n * m):
        raise InvalidArgumentError(f"S must be {(n * m, n * m)}, got {S.shape}")
    # Block (i, j) of S is the m-by-m matrix S[i*m:(i+1)*m, j*m:(j+1)*m];
    # row (i, j) of the rearrangement is that block vectorized.
    R = S.reshape(n, m, n, m).transpose(0, 2, 1, 3).reshape(n * n, m * m)
    U, sv, Vt = np.linalg.svd(R, full_matrices=False)
    if sv[0] <= 0:
        raise DomainError("degenerate input: dominant singular value is zero")
    SC = (np.sqrt(sv[0]) * U[:, 0]).reshape(n, n)
    SK = (np.sqrt(sv[0]) * Vt[0]).reshape(m, m)
    SC = 0.5 * (SC + SC.T)
    SK = 0.5 * (SK + SK.T)
    tC, tK = np.trace(SC), np.trace(SK)
    if tC * tK < 0:
        raise DomainError("degenerate input: factor traces have opposite signs")
    if tC < 0:
        SC, SK = -SC, -SK
        tC = -tC
    scale = n / tC
    return SC * scale, SK / scale


def projection_kron_step(SC, SK, g, beta2, gamma, lam=0.0):
    """One EMA step on the materialized Kronecker product, re-projected.

    Dense and intentionally impractical; refuses products above the
    materialization cap.
    """
    SC = np.asarray(SC)
    SK = np.asarray(SK)
    n, m = SC.shape[0], SK.shape[0]
    if n * m > KRON_DENSE_CAP:
        raise InvalidArgumentError(
            f"product dimension {n * m} exceeds the dense cap {KRON_DENSE_CAP}"
        )
    S = ema_full_step(np.kron(SC, SK), g, beta2, gamma, lam)
    return nearest_kron_project(S, n, m)
