"""Small dense-matrix substrate: Cayley maps, triangular/skew restrictions,
and the decomposition routines used only by baselines and evaluation metrics.

All functions are pure and accept/return plain numpy arrays.  Matrices are
square, real, and finite; the scalar width (float32/float64) of the inputs is
preserved.
"""

import numpy as np

from .errors import DomainError, InvalidArgumentError, NumericalError, PreconditionError

# Relative tolerance for the skew-symmetry precondition of the Cayley maps.
SKEW_TOL = 1e-8


def _check_square(M, name="M"):
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidArgumentError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    return M


def skew_part(M):
    """Return M - M^T (exactly antisymmetric)."""
    M = _check_square(M)
    return M - M.T


def strict_lower(M):
    """Strictly lower-triangular part of M (diagonal zeroed)."""
    M = _check_square(M)
    return np.tril(M, k=-1)


def _check_skew(N):
    N = _check_square(N, "N")
    dev = np.linalg.norm(N + N.T)
    if dev > SKEW_TOL * (1.0 + np.linalg.norm(N)):
        raise InvalidArgumentError(
            f"input is not skew-symmetric within tolerance (deviation {dev:.3e})"
        )
    return N


def cayley_exact(N):
    """Exact Cayley map (I + N)(I - N)^{-1} of a skew-symmetric matrix.

    Computed with one dense linear solve; the result is orthogonal to
    roundoff for any skew-symmetric input (I - N is always nonsingular).
    """
    N = _check_skew(N)
    eye = np.eye(N.shape[0], dtype=N.dtype)
    try:
        # (I+N)(I-N)^{-1} = [(I-N)^{-T} (I+N)^T]^T
        return np.linalg.solve((eye - N).T, (eye + N).T).T
    except np.linalg.LinAlgError as exc:  # cannot happen for exact skew input
        raise NumericalError("Cayley solve failed") from exc


def cayley_inverse(Q):
    """Inverse Cayley map (Q + I)^{-1}(Q - I).

    Defined for orthogonal Q without -1 in its spectrum; round-trips with
    :func:`cayley_exact`.
    """
    Q = _check_square(Q, "Q")
    eye = np.eye(Q.shape[0], dtype=Q.dtype)
    A = Q + eye
    # Guard against -1 in the spectrum before solving; the solve itself may
    # silently succeed on nearly singular input.
    sv_min = np.linalg.svd(A, compute_uv=False)[-1]
    if sv_min < 1e3 * np.finfo(A.dtype).eps * Q.shape[0]:
        raise DomainError("-1 in spectrum of Q: inverse Cayley map undefined")
    return np.linalg.solve(A, Q - eye)


def cayley_truncated(N):
    """Neumann-truncated Cayley map (I+N)^2 (I+N^2)(I+N^4).

    Requires ||N||_F < 1 (convergence of the underlying series); the error
    versus the exact map is O(||N||^8).
    """
    N = _check_skew(N)
    norm = np.linalg.norm(N)
    if norm >= 1.0:
        raise PreconditionError(
            f"||N||_F = {norm:.4f} >= 1: truncated Cayley series diverges"
        )
    eye = np.eye(N.shape[0], dtype=N.dtype)
    N2 = N @ N
    P = eye + N
    return P @ P @ (eye + N2) @ (eye + N2 @ N2)


def sym_eigendecompose(S):
    """Eigendecomposition S = B Diag(d) B^T of a symmetric matrix.

    Returns (B, d) with eigenvalues ascending and B orthogonal.
    """
    S = _check_square(S, "S")
    if not np.allclose(S, S.T, atol=1e-10 * (1.0 + np.linalg.norm(S))):
        raise InvalidArgumentError("S must be symmetric")
    try:
        d, B = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("eigendecomposition failed to converge") from exc
    return B, d


def spd_sqrt(S):
    """Symmetric square root R of an SPD matrix, RR = S."""
    B, d = sym_eigendecompose(S)
    if np.min(d) <= 0:
        raise DomainError(f"matrix is not SPD (min eigenvalue {np.min(d):.3e})")
    return (B * np.sqrt(d)) @ B.T
