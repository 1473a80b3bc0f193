"""Kronecker-factored spectral curvature learning for matrix parameters.

The preconditioner for an n-by-m weight matrix is S = alpha * (SC kron SK)
where SC (n-by-n, acting on rows) and SK (m-by-m, acting on columns) are
determinant-one spectral factors and alpha > 0 carries the overall scale.
The determinant constraints make the representation unique and keep the
Fisher metric in local coordinates block-diagonal.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import InvalidArgumentError, PositivityError
from .spectral import SpectralFactor, reconstruct

DET_TOL = 1e-10
# Margin clamp on the truncated-Cayley coefficient: argument norm <= 0.5.
TRUNC_CLAMP = 0.5


@dataclass(frozen=True)
class KronSpectralFactor:
    """Normalized Kronecker factorization alpha * (SC kron SK).

    Both factors carry prod(eigvals) = 1 (maintained in log space); alpha
    absorbs the scale.
    """

    alpha: float
    factor_C: SpectralFactor
    factor_K: SpectralFactor

    def __post_init__(self):
        if not (self.alpha > 0 and np.isfinite(self.alpha)):
            raise InvalidArgumentError("alpha must be positive and finite")
        for name, f in (("C", self.factor_C), ("K", self.factor_K)):
            drift = abs(float(np.sum(np.log(f.eigvals))))
            if drift > DET_TOL * f.dim:
                raise InvalidArgumentError(
                    f"factor {name} violates the determinant constraint "
                    f"(|sum log d| = {drift:.3e})"
                )

    @property
    def shape(self):
        return (self.factor_C.dim, self.factor_K.dim)


def normalize_kron(alpha_raw, dC, dK):
    """Rescale eigenvalue vectors to geometric mean 1, folding scale into alpha.

    The reconstruction alpha * (SC kron SK) is unchanged; the output triple
    is the unique normalized representative.
    """
    dC = np.asarray(dC, dtype=float)
    dK = np.asarray(dK, dtype=float)
    if not (alpha_raw > 0 and np.all(dC > 0) and np.all(dK > 0)):
        raise InvalidArgumentError("alpha and all eigenvalues must be positive")
    gC = np.exp(np.mean(np.log(dC)))
    gK = np.exp(np.mean(np.log(dK)))
    return alpha_raw * gC * gK, dC / gC, dK / gK


def identity_kron_factor(n, m, dtype=np.float64):
    from .spectral import identity_factor

    return KronSpectralFactor(1.0, identity_factor(n, dtype), identity_factor(m, dtype))


def kron_reconstruct(kf):
    """Materialize the full (n*m)-by-(n*m) matrix (metrics/tests only)."""
    return kf.alpha * np.kron(reconstruct(kf.factor_C), reconstruct(kf.factor_K))


def rotated_curvature(kf, G):
    """Rotated per-factor curvature matrices (W_C, W_K) for gradient G.

    W_K = B_K^T G^T SC^{-1} G B_K and W_C = B_C^T G SK^{-1} G^T B_C, with
    each inverse applied in factored form (rotate, divide by d, rotate back).
    """
    G = np.asarray(G)
    n, m = kf.shape
    if G.shape != (n, m):
        raise InvalidArgumentError(f"gradient shape {G.shape} does not match ({n}, {m})")
    BC, dC = kf.factor_C.basis, kf.factor_C.eigvals
    BK, dK = kf.factor_K.basis, kf.factor_K.eigvals
    RK = BC.T @ (G @ BK)          # n x m, rows in C-eigenbasis
    W_K = RK.T @ (RK / dC[:, None])
    RC = BK.T @ (G.T @ BC)        # m x n, rows in K-eigenbasis
    W_C = RC.T @ (RC / dK[:, None])
    return 0.5 * (W_C + W_C.T), 0.5 * (W_K + W_K.T)


def _recentered(log_d):
    """Split a log-eigenvalue vector into (unit-determinant part, mean)."""
    center = float(np.mean(log_d))
    return np.exp(log_d - center), center


def _basis_step(factor, W, coeff, cfg, nonconstant_scale=None):
    """Rotate a factor basis by Cayley(coeff * Skew(Tril(U))).

    With cayley_mode="truncated" and a nonconstant_scale (beta2_bar * kappa
    term), the coefficient is replaced by the norm-normalized step and
    clamped so the Neumann precondition holds with margin.  A zero rotation
    generator skips the update entirely.
    """
    from .spectral import rotation_generator

    U = rotation_generator(factor, W, cfg.gap_rel_tol)
    N = linalg.skew_part(linalg.strict_lower(U))
    norm = np.linalg.norm(N)
    if norm == 0.0:
        return factor
    if cfg.cayley_mode == "truncated" and nonconstant_scale is not None:
        coeff = min(0.5 * nonconstant_scale, TRUNC_CLAMP) / norm
    Q = linalg.cayley_truncated(coeff * N) if cfg.cayley_mode == "truncated" \
        else linalg.cayley_exact(coeff * N)
    return SpectralFactor(factor.basis @ Q, factor.eigvals)


def kron_rgd_step_exact(kf, G, cfg):
    """One exact-exponential Kronecker curvature step.

    Per factor l: m_l = -gamma + diag(W_l) / (alpha * k_l * d_l); the
    eigenvalues move by the mean-centered part of m_l, the basis by a
    Cayley rotation, and alpha absorbs the means.  Determinant constraints
    are re-centered in log space after the step, with the roundoff
    remainder folded into alpha so the reconstruction is untouched.
    """
    W_C, W_K = rotated_curvature(kf, G)
    n, m = kf.shape
    alpha = kf.alpha
    k = {"C": m, "K": n}
    factors = {"C": kf.factor_C, "K": kf.factor_K}
    Ws = {"C": W_C, "K": W_K}

    new_factors = {}
    mean_m = {}
    centers = {}
    for l in ("C", "K"):
        f = factors[l]
        m_l = -cfg.gamma + np.diagonal(Ws[l]) / (alpha * k[l] * f.eigvals)
        mean_m[l] = float(np.mean(m_l))
        log_d = np.log(f.eigvals) + cfg.beta2 * (m_l - mean_m[l])
        d_new, centers[l] = _recentered(log_d)
        coeff = cfg.beta2 / (2.0 * alpha * k[l])
        stepped = _basis_step(f, Ws[l], coeff, cfg)
        new_factors[l] = SpectralFactor(stepped.basis, d_new)

    alpha_new = alpha * np.exp(
        0.5 * cfg.beta2 * (mean_m["C"] + mean_m["K"]) + centers["C"] + centers["K"]
    )
    return KronSpectralFactor(float(alpha_new), new_factors["C"], new_factors["K"])


def adaptive_damping(kf, lam):
    """Per-factor damping Lambda_l balancing the two Kronecker factors.

    Lambda_l = lam * k_l * mean(1/dC) * mean(1/dK) / mean(1/d_l).
    """
    n, m = kf.shape
    inv_mean = {
        "C": float(np.mean(1.0 / kf.factor_C.eigvals)),
        "K": float(np.mean(1.0 / kf.factor_K.eigvals)),
    }
    prod = inv_mean["C"] * inv_mean["K"]
    return {
        "C": lam * m * prod / inv_mean["C"],
        "K": lam * n * prod / inv_mean["K"],
    }


def kron_rgd_step_truncated(kf, G, cfg):
    """First-order Kronecker step with log-space renormalization.

    n_l = (1-gamma*beta2) d_l + beta2/(alpha k_l) (diag(W_l) + Lambda_l);
    the eigenvalues become the mean-log-centered n_l and alpha picks up the
    two mean logs.  Basis rotations use the nonconstant step size
    beta2_bar * alpha * kappa_l / ||Skew(Tril(U_l))||_F when the truncated
    Cayley map is selected, clamped for the Neumann precondition.
    """
    if cfg.exp_mode != "first_order":
        raise InvalidArgumentError("kron_rgd_step_truncated requires exp_mode=first_order")
    W_C, W_K = rotated_curvature(kf, G)
    n, m = kf.shape
    alpha = kf.alpha
    k = {"C": m, "K": n}
    factors = {"C": kf.factor_C, "K": kf.factor_K}
    Ws = {"C": W_C, "K": W_K}
    damp = adaptive_damping(kf, cfg.damping)

    new_factors = {}
    log_means = {}
    for l in ("C", "K"):
        f = factors[l]
        n_l = (1.0 - cfg.gamma * cfg.beta2) * f.eigvals \
            + cfg.beta2 / (alpha * k[l]) * (np.diagonal(Ws[l]) + damp[l])
        if np.min(n_l) <= 0:
            raise PositivityError(
                "eigenvalue update went non-positive; reduce gamma*beta2 or add damping"
            )
        log_n = np.log(n_l)
        d_new, center = _recentered(log_n)
        log_means[l] = center
        coeff = cfg.beta2 / (2.0 * alpha * k[l])
        # kappa_l = k_l: the nonconstant-step constant matches the scheme's.
        scale = cfg.beta2 if cfg.cayley_mode == "truncated" else None
        stepped = _basis_step(f, Ws[l], coeff, cfg, nonconstant_scale=scale)
        new_factors[l] = SpectralFactor(stepped.basis, d_new)

    alpha_new = alpha * np.exp(0.5 * (log_means["C"] + log_means["K"]))
    return KronSpectralFactor(float(alpha_new), new_factors["C"], new_factors["K"])


def kron_precondition(kf, G, p):
    """Preconditioned direction alpha^{-1/p} SC^{-1/p} G SK^{-1/p}.

    Each inverse root is applied in factored form; nothing is decomposed or
    materialized.
    """
    if p <= 0:
        raise InvalidArgumentError("root exponent p must be positive")
    G = np.asarray(G)
    n, m = kf.shape
    if G.shape != (n, m):
        raise InvalidArgumentError(f"gradient shape {G.shape} does not match ({n}, {m})")
    BC, dC = kf.factor_C.basis, kf.factor_C.eigvals
    BK, dK = kf.factor_K.basis, kf.factor_K.eigvals
    A = BC.T @ G @ BK
    A = A * np.outer(dC ** (-1.0 / p), dK ** (-1.0 / p))
    return kf.alpha ** (-1.0 / p) * (BC @ A @ BK.T)


def clip_preconditioned(delta, clip_norm):
    """Scale delta so its Frobenius norm never exceeds clip_norm."""
    if clip_norm <= 0:
        raise InvalidArgumentError("clip_norm must be positive")
    delta = np.asarray(delta)
    norm = np.linalg.norm(delta)
    if norm <= clip_norm:
        return delta
    return delta * (clip_norm / norm)


def trace_identity_value(kf, G, which):
    """Left side of the per-factor trace identity (test instrumentation).

    (1/(alpha k_l)) mean(d_l^{-1} diag(W_l)); both factors equal
    (1/(m n alpha)) Tr[SC^{-1} G SK^{-1} G^T].
    """
    W_C, W_K = rotated_curvature(kf, G)
    n, m = kf.shape
    if which == "C":
        f, W, k = kf.factor_C, W_C, m
    elif which == "K":
        f, W, k = kf.factor_K, W_K, n
    else:
        raise InvalidArgumentError("which must be 'C' or 'K'")
    return float(np.mean(np.diagonal(W) / f.eigvals)) / (kf.alpha * k)


def kron_to_json(kf):
    """Serialize to the {alpha, factor_C, factor_K} checkpoint document."""
    from .spectral import factor_to_json

    return json.dumps(
        {
            "alpha": kf.alpha,
            "factor_C": json.loads(factor_to_json(kf.factor_C)),
            "factor_K": json.loads(factor_to_json(kf.factor_K)),
        }
    )


def kron_from_json(doc):
    from .spectral import factor_from_json

    obj = json.loads(doc)
    return KronSpectralFactor(
        obj["alpha"],
        factor_from_json(json.dumps(obj["factor_C"])),
        factor_from_json(json.dumps(obj["factor_K"])),
    )
