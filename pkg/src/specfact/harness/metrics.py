"""Problem generation and evaluation metrics for the experiment engine."""

import numpy as np

from .. import linalg
from ..errors import InvalidArgumentError

# Fixed stream key prefixes keep the generator families independent.
_SPD_STREAM = 0x5D


def make_rng(*key):
    """Counter-based generator (Philox) keyed by an integer tuple."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


def haar_orthogonal(dim, rng):
    """Haar-distributed orthogonal matrix via QR with sign correction."""
    Z = rng.standard_normal((dim, dim))
    Q, R = np.linalg.qr(Z)
    return Q * np.sign(np.diagonal(R))


def generate_random_spd(dim, cond, seed):
    """Random SPD matrix with a log-uniform spectrum spanning [1/sqrt(cond), sqrt(cond)].

    Haar-random eigenbasis; deterministic in seed.  cond = 1 returns the
    identity exactly.
    """
    if cond < 1:
        raise InvalidArgumentError("condition number must be >= 1")
    if cond == 1:
        return np.eye(dim)
    rng = make_rng(_SPD_STREAM, seed, dim)
    Q = haar_orthogonal(dim, rng)
    spectrum = np.geomspace(1.0 / np.sqrt(cond), np.sqrt(cond), dim)
    return (Q * spectrum) @ Q.T


def rel_frobenius(Sa, Sb):
    """Relative Frobenius distance ||Sa - Sb||_F / ||Sa||_F."""
    Sa = np.asarray(Sa)
    Sb = np.asarray(Sb)
    if Sa.shape != Sb.shape:
        raise InvalidArgumentError("shapes do not match")
    ref = np.linalg.norm(Sa)
    if ref == 0:
        raise InvalidArgumentError("reference matrix must be nonzero")
    return float(np.linalg.norm(Sa - Sb) / ref)


def wasserstein2_spd(A, B):
    """Bures/Gaussian Wasserstein-2 distance between SPD matrices.

    sqrt(Tr A + Tr B - 2 Tr[(A^{1/2} B A^{1/2})^{1/2}]); zero iff A = B.
    """
    rA = linalg.spd_sqrt(A)
    inner = rA @ np.asarray(B) @ rA
    inner = 0.5 * (inner + inner.T)
    cross = linalg.spd_sqrt(inner)
    val = float(np.trace(A) + np.trace(B) - 2.0 * np.trace(cross))
    # Roundoff can push the squared distance slightly negative at A = B.
    return float(np.sqrt(max(val, 0.0)))
