"""Producers of curvature residuals for the three application regimes.

Gradient outer products for training, Euclidean-gradient residuals for SPD
matrix optimization, and REINFORCE/Stein estimators for gradient-free
search, plus the classic multimodal test functions used by the latter.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EvaluationError, InvalidArgumentError
from .spectral import CurvatureResidual, SpectralFactor, reconstruct

SPD_KINDS = ("metric_nearness", "log_det")
TEST_FUNCTIONS = ("ackley", "rosenbrock", "bohachevsky", "schaffer", "griewank")


@dataclass(frozen=True)
class SpdProblem:
    """SPD matrix-learning instance with known optimum S* = Q^{-1}.

    metric_nearness fits S so that S Q x_i = x_i over the data X (subsampled
    per call via batch_size); log_det minimizes Tr(SQ) - log det S.
    """

    kind: str
    Q: np.ndarray
    X: np.ndarray | None = None
    batch_size: int = 0

    def __post_init__(self):
        if self.kind not in SPD_KINDS:
            raise InvalidArgumentError(f"unknown problem kind {self.kind!r}")
        Q = np.asarray(self.Q)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise InvalidArgumentError("Q must be square")
        if np.linalg.norm(Q - Q.T) > 1e-10 * (1.0 + np.linalg.norm(Q)):
            raise InvalidArgumentError("Q must be symmetric")
        if self.kind == "metric_nearness":
            if self.X is None or len(self.X) == 0:
                raise InvalidArgumentError("metric_nearness requires data X")
            if self.batch_size < 1:
                raise InvalidArgumentError("batch_size must be >= 1")

    @property
    def dim(self):
        return self.Q.shape[0]


@dataclass(frozen=True)
class NesConfig:
    """Sampling configuration for the gradient-free estimator."""

    pop_size: int
    antithetic: bool = True
    fitness_shaping: str = "ranks"
    seed: int = 0

    def __post_init__(self):
        if self.pop_size < 2:
            raise InvalidArgumentError("pop_size must be >= 2")
        if self.antithetic and self.pop_size % 2 != 0:
            raise InvalidArgumentError("antithetic sampling needs an even pop_size")
        if self.fitness_shaping not in ("ranks", "raw"):
            raise InvalidArgumentError(
                f"unknown fitness_shaping {self.fitness_shaping!r}"
            )


def default_pop_size(dim):
    """Population default 4 + floor(3 ln dim), rounded up to even."""
    k = 4 + int(3 * math.log(dim))
    return k + (k % 2)


def gop_residual(f, g, gamma):
    """Gradient-outer-product residual in rotated form.

    rotated = (B^T g)(B^T g)^T - gamma Diag(d); costs O(n^2), the full outer
    product g g^T is never rotated explicitly.
    """
    g = np.asarray(g)
    if g.shape != (f.dim,):
        raise InvalidArgumentError("gradient length does not match factor dim")
    r = f.basis.T @ g
    rotated = np.outer(r, r)
    if gamma != 0.0:
        rotated = rotated - gamma * np.diag(f.eigvals)
    return CurvatureResidual(rotated, source="gop")


def spd_loss(f, prob, batch=None):
    """Objective value at S = reconstruct(f) for an SPD problem instance."""
    S = reconstruct(f)
    if prob.kind == "log_det":
        return float(np.trace(S @ prob.Q) - np.sum(np.log(f.eigvals)))
    X = np.asarray(prob.X if batch is None else batch)
    R = X @ prob.Q @ S.T - X  # rows are S Q x_i - x_i
    return float(np.sum(R * R) / (2.0 * X.shape[0]))


def spd_opt_residual(f, prob, batch=None):
    """Loss and rotated curvature residual -2 D (B^T G_S B) D.

    G_S is the symmetric Euclidean gradient of the objective in S; the
    residual is its pullback to the inverse parametrization (indefinite in
    general).  For metric_nearness, `batch` selects the observed rows of X.
    """
    S = reconstruct(f)
    Q = prob.Q
    if prob.kind == "log_det":
        S_inv = (f.basis / f.eigvals) @ f.basis.T
        G_S = Q - S_inv
        loss = float(np.trace(S @ Q) - np.sum(np.log(f.eigvals)))
    else:
        X = np.asarray(prob.X if batch is None else batch)
        if X.size == 0:
            raise InvalidArgumentError("metric_nearness batch must be nonempty")
        QX = X @ Q.T          # rows Q x_i
        R = QX @ S.T - X      # rows S Q x_i - x_i
        M = R.T @ QX / X.shape[0]
        G_S = 0.5 * (M + M.T)
        loss = float(np.sum(R * R) / (2.0 * X.shape[0]))
    inner = f.basis.T @ G_S @ f.basis
    rotated = -2.0 * (f.eigvals[:, None] * inner * f.eigvals[None, :])
    rotated = 0.5 * (rotated + rotated.T)
    return loss, CurvatureResidual(rotated, source="spd_opt")


def _rank_utilities(fitness):
    """Rank-shaped utilities, minimization convention, sign-flipped so the
    returned gradient estimate is a descent direction under mu <- mu - step.
    """
    K = fitness.size
    order = np.argsort(fitness, kind="stable")
    ranks = np.empty(K, dtype=float)
    ranks[order] = np.arange(1, K + 1)
    shaped = np.maximum(0.0, np.log(K / 2.0 + 1.0) - np.log(ranks))
    shaped = shaped / np.sum(shaped) - 1.0 / K
    return -shaped


def nes_estimate(f, mu, objective, cfg, rng=None):
    """Monte Carlo gradient and curvature estimates from function values.

    Draws w_k = mu + B Diag(d^{-1/2}) z_k, evaluates the black-box
    objective, and returns (g_hat, Cr) where g_hat estimates the mean
    gradient in the S (w - mu) Stein form and Cr.rotated the rotated
    curvature with gamma = 0.  With rank shaping, utilities are signed so
    mu - step * S^{-1} g_hat moves toward better samples.
    """
    mu = np.asarray(mu)
    if mu.shape != (f.dim,):
        raise InvalidArgumentError("mean length does not match factor dim")
    if rng is None:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))
    K = cfg.pop_size
    if cfg.antithetic:
        half = rng.standard_normal((K // 2, f.dim))
        z = np.concatenate([half, -half], axis=0)
    else:
        z = rng.standard_normal((K, f.dim))
    root_d = np.sqrt(f.eigvals)
    w = mu + (z / root_d) @ f.basis.T
    fitness = np.empty(K)
    for k in range(K):
        val = objective(w[k])
        if not np.isfinite(val):
            raise EvaluationError("objective returned a non-finite value", point=w[k])
        fitness[k] = val
    u = _rank_utilities(fitness) if cfg.fitness_shaping == "ranks" else fitness
    if cfg.antithetic:
        # fold the mirrored half so equal pair utilities cancel exactly
        uz = (u[: K // 2] - u[K // 2:]) @ z[: K // 2]
    else:
        uz = u @ z
    g_hat = f.basis @ (root_d * (uz / K))
    inner = (z * u[:, None]).T @ z / K - np.mean(u) * np.eye(f.dim)
    inner = 0.5 * (inner + inner.T)
    rotated = root_d[:, None] * inner * root_d[None, :]
    return g_hat, CurvatureResidual(rotated, source="reinforce")


def test_function(name, w):
    """Multimodal benchmark objectives; each has minimum value 0."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size < 2:
        raise InvalidArgumentError("w must be a vector of length >= 2")
    if name == "ackley":
        n = w.size
        return float(
            20.0
            - 20.0 * np.exp(-0.2 * np.sqrt(np.mean(w * w)))
            + np.e
            - np.exp(np.mean(np.cos(2.0 * np.pi * w)))
        )
    if name == "rosenbrock":
        return float(
            np.sum(100.0 * (w[1:] - w[:-1] ** 2) ** 2 + (w[:-1] - 1.0) ** 2)
        )
    if name == "bohachevsky":
        a, b = w[:-1], w[1:]
        return float(
            np.sum(
                a * a
                + 2.0 * b * b
                - 0.3 * np.cos(3.0 * np.pi * a)
                - 0.4 * np.cos(4.0 * np.pi * b)
                + 0.7
            )
        )
    if name == "schaffer":
        s = w[:-1] ** 2 + w[1:] ** 2
        return float(np.sum(s ** 0.25 * (np.sin(50.0 * s ** 0.1) ** 2 + 1.0)))
    if name == "griewank":
        i = np.arange(1, w.size + 1)
        return float(
            np.sum(w * w) / 4000.0 - np.prod(np.cos(w / np.sqrt(i))) + 1.0
        )
    raise InvalidArgumentError(f"unknown test function {name!r}")
