"""Desk-scale training demo: a two-layer perceptron on a synthetic
Gaussian-mixture classification task, optimized per weight matrix with the
truncated Kronecker curvature scheme plus preconditioned clipping,
heavy-ball momentum, and decoupled weight decay.
"""

import dataclasses
import time

import numpy as np

from .. import kron
from ..errors import NumericalError
from .metrics import make_rng
from .traces import TraceRecord

_DEMO_STREAM = 0xA5


def make_mixture(rng, samples, input_dim, classes, mean_norm=6.0):
    """Linearly-separable-by-construction Gaussian mixture."""
    means = rng.standard_normal((classes, input_dim))
    means *= mean_norm / np.linalg.norm(means, axis=1, keepdims=True)
    y = rng.integers(0, classes, samples)
    X = means[y] + rng.standard_normal((samples, input_dim))
    return X, y


def _softmax_ce(logits, y):
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.sum(np.exp(z), axis=1, keepdims=True))
    loss = -float(np.mean(logp[np.arange(y.size), y]))
    probs = np.exp(logp)
    probs[np.arange(y.size), y] -= 1.0
    return loss, probs / y.size


class _KronOptState:
    """Per-weight Kronecker curvature state with a momentum buffer."""

    def __init__(self, shape):
        self.kf = kron.identity_kron_factor(*shape)
        self.mom = np.zeros(shape)

    def step(self, W, G, cfg, lr, momentum, weight_decay, clip):
        self.kf = kron.kron_rgd_step_truncated(self.kf, G, cfg)
        delta = kron.kron_precondition(self.kf, G, cfg.p)
        if clip is not None:
            delta = kron.clip_preconditioned(delta, clip)
        self.mom = momentum * self.mom + delta
        return W - lr * self.mom - lr * weight_decay * W


def run_train_demo_cell(spec, method, seed):
    params = spec.problem
    input_dim = int(params.get("input_dim", 32))
    hidden = int(params.get("hidden", 64))
    classes = int(params.get("classes", 10))
    samples = int(params.get("samples", 2000))
    batch_size = int(params.get("batch_size", 200))
    lr = float(params.get("lr", spec.config.beta1))
    momentum = float(params.get("momentum", 0.9))
    weight_decay = float(params.get("weight_decay", 1e-4))
    clip = spec.config.clip_norm if spec.config.clip_norm is not None else 10.0

    cfg = dataclasses.replace(
        spec.config, exp_mode="first_order", cayley_mode="truncated"
    )
    rng = make_rng(_DEMO_STREAM, seed, input_dim)
    X, y = make_mixture(rng, samples, input_dim, classes)

    W1 = rng.standard_normal((hidden, input_dim)) / np.sqrt(input_dim)
    b1 = np.zeros(hidden)
    W2 = rng.standard_normal((classes, hidden)) * 0.02
    b2 = np.zeros(classes)
    opt1, opt2 = _KronOptState(W1.shape), _KronOptState(W2.shape)
    mom_b1, mom_b2 = np.zeros(hidden), np.zeros(classes)

    records = []
    t0 = time.perf_counter()

    def forward(Xb):
        H = np.tanh(Xb @ W1.T + b1)
        return H, H @ W2.T + b2

    def eval_point(epoch):
        H, logits = forward(X)
        loss, _ = _softmax_ce(logits, y)
        acc = float(np.mean(np.argmax(logits, axis=1) == y))
        if not np.isfinite(loss):
            raise NumericalError("non-finite training loss")
        wall = time.perf_counter() - t0
        records.append(TraceRecord(spec.experiment_id, method, seed, epoch,
                                   "loss", loss, wall))
        records.append(TraceRecord(spec.experiment_id, method, seed, epoch,
                                   "accuracy", acc, wall))

    try:
        eval_point(0)
        for epoch in range(spec.steps):
            order = rng.permutation(samples)
            for start in range(0, samples, batch_size):
                idx = order[start:start + batch_size]
                Xb, yb = X[idx], y[idx]
                H, logits = forward(Xb)
                _, dlogits = _softmax_ce(logits, yb)
                G2 = dlogits.T @ H
                db2 = dlogits.sum(axis=0)
                dH = dlogits @ W2
                dpre = dH * (1.0 - H * H)
                G1 = dpre.T @ Xb
                db1 = dpre.sum(axis=0)

                W1 = opt1.step(W1, G1, cfg, lr, momentum, weight_decay, clip)
                W2 = opt2.step(W2, G2, cfg, lr, momentum, weight_decay, clip)
                mom_b1 = momentum * mom_b1 + db1
                mom_b2 = momentum * mom_b2 + db2
                b1 = b1 - lr * mom_b1
                b2 = b2 - lr * mom_b2
                for arr in (W1, W2, b1, b2):
                    if not np.all(np.isfinite(arr)):
                        raise NumericalError("non-finite parameter state")
            eval_point(epoch + 1)
    except NumericalError:
        records.append(TraceRecord(spec.experiment_id, method, seed, -1,
                                   "failure", 1.0, time.perf_counter() - t0))
    return records, None
