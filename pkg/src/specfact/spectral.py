"""Full-matrix and diagonal spectral-factorized curvature learning.

A curvature matrix S is carried as an orthogonal basis B and a positive
eigenvalue vector d with S = B Diag(d) B^T, and is adapted in place of S via
multiplicative eigenvalue updates and Cayley rotations of the basis.  No
matrix decomposition appears in the update loop; fractional inverse roots
S^{-1/p} cost one elementwise power on d.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import InvalidArgumentError, PreconditionError

CAYLEY_MODES = ("exact", "truncated")
EXP_MODES = ("exact", "first_order")


@dataclass(frozen=True)
class UpdateConfig:
    """Step sizes and mode switches for the curvature update.

    beta1 is the parameter step size, beta2 the curvature step size, gamma
    the forgetting switch (0 or 1), p the inverse-root exponent, damping an
    additive eigenvalue regularizer, gap_rel_tol the relative threshold
    below which an eigenvalue pair counts as repeated.
    """

    beta1: float = 0.001
    beta2: float = 0.01
    gamma: float = 1.0
    p: float = 2.0
    damping: float = 0.0
    gap_rel_tol: float = 1e-8
    cayley_mode: str = "exact"
    exp_mode: str = "exact"
    clip_norm: float | None = None

    def __post_init__(self):
        if self.beta1 < 0 or self.beta2 < 0:
            raise InvalidArgumentError("step sizes must be non-negative")
        if self.gamma not in (0, 1, 0.0, 1.0):
            raise InvalidArgumentError("gamma must be 0 or 1")
        if self.p <= 0:
            raise InvalidArgumentError("root exponent p must be positive")
        if self.damping < 0:
            raise InvalidArgumentError("damping must be non-negative")
        if self.gap_rel_tol <= 0:
            raise InvalidArgumentError("gap_rel_tol must be positive")
        if self.cayley_mode not in CAYLEY_MODES:
            raise InvalidArgumentError(f"unknown cayley_mode {self.cayley_mode!r}")
        if self.exp_mode not in EXP_MODES:
            raise InvalidArgumentError(f"unknown exp_mode {self.exp_mode!r}")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise InvalidArgumentError("clip_norm must be positive")


@dataclass(frozen=True)
class SpectralFactor:
    """Spectral factorization S = B Diag(d) B^T.

    basis is orthogonal (tracked, never re-orthonormalized by default) and
    eigvals stays strictly positive under all updates.
    """

    basis: np.ndarray
    eigvals: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.basis)
        d = np.asarray(self.eigvals)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise InvalidArgumentError(f"basis must be square, got {B.shape}")
        if d.shape != (B.shape[0],):
            raise InvalidArgumentError("eigvals length must match basis dim")
        if not (np.all(np.isfinite(B)) and np.all(np.isfinite(d))):
            raise InvalidArgumentError("factor entries must be finite")
        if np.min(d) <= 0:
            raise InvalidArgumentError("eigenvalues must be strictly positive")
        object.__setattr__(self, "basis", B)
        object.__setattr__(self, "eigvals", d)

    @property
    def dim(self):
        return self.basis.shape[0]


@dataclass(frozen=True)
class CurvatureResidual:
    """Curvature residual in the factor's rotated coordinates, B^T C B.

    `source` records the producer: "gop", "spd_opt", or "reinforce".
    """

    rotated: np.ndarray
    source: str = "gop"

    def __post_init__(self):
        R = np.asarray(self.rotated)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise InvalidArgumentError("rotated residual must be square")
        dev = np.linalg.norm(R - R.T)
        if dev > 1e-10 * (1.0 + np.linalg.norm(R)):
            raise InvalidArgumentError(
                f"rotated residual is not symmetric (deviation {dev:.3e})"
            )
        object.__setattr__(self, "rotated", R)


def identity_factor(n, dtype=np.float64):
    """Factor representing the n-by-n identity."""
    if n < 1:
        raise InvalidArgumentError("dimension must be >= 1")
    return SpectralFactor(np.eye(n, dtype=dtype), np.ones(n, dtype=dtype))


def reconstruct(f):
    """Materialize S = B Diag(d) B^T (baselines and metrics only)."""
    return (f.basis * f.eigvals) @ f.basis.T


def apply_inverse_root(f, v, p):
    """Apply S^{-1/p} = B Diag(d^{-1/p}) B^T to a vector."""
    if p <= 0:
        raise InvalidArgumentError("root exponent p must be positive")
    return f.basis @ (f.eigvals ** (-1.0 / p) * (f.basis.T @ v))


def log_det(f):
    """log det S = sum of log eigenvalues."""
    return float(np.sum(np.log(f.eigvals)))


def orthogonality_error(f):
    """Diagnostic ||B^T B - I||_F measuring accumulated basis drift."""
    B = f.basis
    return float(np.linalg.norm(B.T @ B - np.eye(f.dim, dtype=B.dtype)))


def orthonormalize(f):
    """One Newton sweep B(3I - B^T B)/2 repairing small basis drift.

    Not applied automatically; exact Cayley updates preserve orthogonality
    to roundoff and drift is only monitored.
    """
    B = f.basis
    eye = np.eye(f.dim, dtype=B.dtype)
    return SpectralFactor(B @ (3.0 * eye - B.T @ B) / 2.0, f.eigvals)


def rotation_generator(f, residual, gap_rel_tol):
    """Rotation generator U with U_ij = -R_ij / (d_i - d_j).

    Entries with |d_i - d_j| <= gap_rel_tol * max(d_i, d_j) are zeroed
    (the Moore-Penrose treatment of repeated eigenvalues).  Only
    Skew(Tril(U)) is ever consumed downstream.
    """
    R = np.asarray(residual.rotated if isinstance(residual, CurvatureResidual) else residual)
    d = f.eigvals
    if R.shape != (d.size, d.size):
        raise InvalidArgumentError("residual size does not match factor")
    gap = d[:, None] - d[None, :]
    keep = np.abs(gap) > gap_rel_tol * np.maximum(d[:, None], d[None, :])
    U = np.zeros_like(R)
    np.divide(-R, gap, out=U, where=keep)
    return U


def _cayley(N, mode):
    if mode == "truncated":
        return linalg.cayley_truncated(N)
    return linalg.cayley_exact(N)


def rgd_step_exact(f, residual, cfg):
    """One exact-exponential curvature step from a generic residual.

    d' = d * exp(beta2 * diag(R)/d) and B' = B Cayley((beta2/2) Skew(Tril(U)))
    with R the rotated residual; both parts read the pre-step state.
    Positivity of d is preserved for arbitrary symmetric (even indefinite)
    residuals.
    """
    R = residual.rotated
    d = f.eigvals
    if R.shape != (d.size, d.size):
        raise InvalidArgumentError("residual size does not match factor")
    d_new = d * np.exp(cfg.beta2 * np.diagonal(R) / d)
    # exp() can underflow to 0 for extreme negative diagonals; flush to the
    # smallest positive normal so positivity survives in floating point
    d_new = np.maximum(d_new, np.finfo(d_new.dtype).tiny)
    U = rotation_generator(f, residual, cfg.gap_rel_tol)
    N = 0.5 * cfg.beta2 * linalg.skew_part(linalg.strict_lower(U))
    B_new = f.basis @ _cayley(N, cfg.cayley_mode)
    return SpectralFactor(B_new, d_new)


def rgd_step_gop_truncated(f, g, cfg):
    """First-order (truncated-exponential) step for GOP curvature.

    d' = (1 - gamma*beta2) d + beta2 (diag(B^T g g^T B) + damping); valid
    only because the gradient outer product is positive semi-definite.
    """
    if cfg.gamma * cfg.beta2 >= 1.0:
        raise PreconditionError("gamma*beta2 >= 1 loses eigenvalue positivity")
    r = f.basis.T @ np.asarray(g)
    d_new = (1.0 - cfg.gamma * cfg.beta2) * f.eigvals + cfg.beta2 * (r * r + cfg.damping)
    U = rotation_generator(f, np.outer(r, r), cfg.gap_rel_tol)
    N = 0.5 * cfg.beta2 * linalg.skew_part(linalg.strict_lower(U))
    B_new = f.basis @ _cayley(N, cfg.cayley_mode)
    return SpectralFactor(B_new, d_new)


def diagonal_step(d, g, cfg):
    """Diagonal-case eigenvalue update (basis is constant in diagonal mode).

    first_order mode reproduces the RMSprop (gamma=1) / AdaGrad (gamma=0)
    second-moment accumulation; exact mode is the multiplicative form.
    """
    d = np.asarray(d)
    g = np.asarray(g)
    if d.shape != g.shape:
        raise InvalidArgumentError("d and g must have the same length")
    if cfg.exp_mode == "first_order":
        return (1.0 - cfg.beta2 * cfg.gamma) * d + cfg.beta2 * (g * g + cfg.damping)
    return d * np.exp(cfg.beta2 / d * (-cfg.gamma * d + g * g + cfg.damping))


def sample_gaussian(f, mu, count, rng_seed):
    """Draw samples from N(mu, S^{-1}) with S = reconstruct(f).

    Deterministic in rng_seed; returns an array of shape (count, dim) with
    rows w_i = mu + B Diag(d^{-1/2}) z_i.
    """
    mu = np.asarray(mu)
    if mu.shape != (f.dim,):
        raise InvalidArgumentError("mean length does not match factor dim")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(rng_seed)))
    z = rng.standard_normal((count, f.dim))
    return mu + (z * f.eigvals ** -0.5) @ f.basis.T


def factor_to_json(f):
    """Serialize to the {dim, basis, eigvals} checkpoint document."""
    return json.dumps(
        {
            "dim": f.dim,
            "basis": [float(x) for x in f.basis.ravel()],
            "eigvals": [float(x) for x in f.eigvals],
        }
    )


def factor_from_json(doc):
    """Inverse of :func:`factor_to_json`."""
    obj = json.loads(doc)
    n = obj["dim"]
    B = np.array(obj["basis"], dtype=np.float64).reshape(n, n)
    return SpectralFactor(B, np.array(obj["eigvals"], dtype=np.float64))
