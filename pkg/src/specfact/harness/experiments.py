"""Declarative experiment engine: validation studies, SPD optimization,
gradient-free search, and the Cayley micro-benchmark.

Every (method, seed) cell is deterministic; matching experiments feed all
methods one shared pre-generated gradient stream (checked by hash).
"""

import dataclasses
import hashlib
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import baselines, kron, linalg
from ..curvature import (NesConfig, SpdProblem, default_pop_size, gop_residual,
                         nes_estimate, spd_loss, spd_opt_residual, test_function)
from ..errors import (ConfigError, DomainError, EvaluationError,
                      InvalidArgumentError, NumericalError, PreconditionError)
from ..spectral import (SpectralFactor, UpdateConfig, apply_inverse_root,
                        identity_factor, reconstruct, rgd_step_exact,
                        rgd_step_gop_truncated)
from .metrics import generate_random_spd, make_rng, rel_frobenius, wasserstein2_spd
from .traces import TraceRecord

THREADS_ENV = "SPECFACT_THREADS"

KINDS = (
    "fixed_point_full", "iterate_full", "fixed_point_kron", "iterate_kron",
    "spd_opt", "nes", "train_demo", "cayley_bench",
)
_FULL_METHODS = ("spectral", "spectral_truncated", "default_ema")
_KRON_METHODS = ("kron_exact", "kron_truncated", "kron_projection", "default_ema")
METHODS_BY_KIND = {
    "fixed_point_full": _FULL_METHODS,
    "iterate_full": _FULL_METHODS,
    "fixed_point_kron": _KRON_METHODS,
    "iterate_kron": _KRON_METHODS,
    "spd_opt": ("spectral",),
    "nes": ("nes_spectral",),
    "train_demo": ("kron_truncated",),
    "cayley_bench": ("spectral",),
}

# Stream keys keeping gradient, data, and method-internal randomness apart.
_GRAD_STREAM = 0xA1
_DATA_STREAM = 0xA2
_NES_STREAM = 0xA3
_BENCH_STREAM = 0xA4


@dataclass(frozen=True)
class ExperimentSpec:
    """Declarative experiment description consumed by run_experiment."""

    kind: str
    steps: int
    seeds: tuple
    methods: tuple
    config: UpdateConfig = field(default_factory=UpdateConfig)
    dim: int = 100
    n: int = 9
    m: int = 11
    cond: float = 100.0
    metrics: tuple = ()
    eval_every: int = 1
    precision: str = "f64"
    problem: dict = field(default_factory=dict)
    experiment_id: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        seeds = tuple(int(s) for s in self.seeds)
        methods = tuple(self.methods)
        if not seeds or not methods:
            raise ConfigError("at least one seed and one method are required")
        allowed = METHODS_BY_KIND[self.kind]
        for m in methods:
            if m not in allowed:
                raise ConfigError(f"method {m!r} is not valid for kind {self.kind!r}")
        if self.precision not in ("f32", "f64"):
            raise ConfigError(f"unknown precision {self.precision!r}")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        object.__setattr__(self, "seeds", seeds)
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "metrics", tuple(self.metrics))
        if not self.experiment_id:
            object.__setattr__(self, "experiment_id", self.kind)

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64

    def to_doc(self):
        doc = dataclasses.asdict(self)
        doc["seeds"] = list(self.seeds)
        doc["methods"] = list(self.methods)
        doc["metrics"] = list(self.metrics)
        return doc

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        cfg = doc.pop("config", {})
        if isinstance(cfg, dict):
            try:
                cfg = UpdateConfig(**cfg)
            except (TypeError, InvalidArgumentError) as exc:
                raise ConfigError(f"bad update config: {exc}") from exc
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown spec fields: {sorted(unknown)}")
        try:
            return cls(config=cfg, **doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _default_metrics(spec):
    if spec.metrics:
        return spec.metrics
    if spec.kind in ("fixed_point_kron", "iterate_kron"):
        return ("rel_frobenius", "wasserstein2")
    return ("rel_frobenius",)


def _matrix_metric(name, target, estimate):
    if name == "rel_frobenius":
        return rel_frobenius(target, estimate)
    if name == "wasserstein2":
        return wasserstein2_spd(
            np.asarray(target, dtype=np.float64), np.asarray(estimate, dtype=np.float64)
        )
    raise ConfigError(f"unknown metric {name!r}")


def _gradient_stream(spec, seed):
    """Shared Gaussian gradient sequence g_k ~ N(0, Sigma) and its hash."""
    dim = spec.dim if spec.kind.endswith("full") else spec.n * spec.m
    sigma = generate_random_spd(dim, spec.cond, seed)
    root = linalg.spd_sqrt(sigma)
    rng = make_rng(_GRAD_STREAM, seed, dim)
    grads = rng.standard_normal((spec.steps, dim)) @ root
    sigma = sigma.astype(spec.dtype)
    grads = grads.astype(spec.dtype)
    digest = hashlib.sha256(grads.tobytes()).hexdigest()
    return sigma, grads, digest


def _is_eval_step(k, spec):
    return k % spec.eval_every == 0 or k == spec.steps


def _emit(records, spec, method, seed, k, t0, target, estimate):
    wall = time.perf_counter() - t0
    for name in _default_metrics(spec):
        val = _matrix_metric(name, target, estimate)
        if not np.isfinite(val):
            raise NumericalError(f"non-finite metric {name}")
        records.append(
            TraceRecord(spec.experiment_id, method, seed, k, name, val, wall)
        )
    return wall


def _cell_full(spec, method, seed):
    sigma, grads, digest = _gradient_stream(spec, seed)
    dim = spec.dim
    iterate = spec.kind == "iterate_full"
    cfg = spec.config
    records = []
    t0 = time.perf_counter()

    S_ref = np.eye(dim, dtype=spec.dtype) if iterate else None
    if method == "default_ema":
        S = np.eye(dim, dtype=spec.dtype)
    else:
        f = identity_factor(dim, dtype=spec.dtype)
    if method == "spectral_truncated":
        cfg = dataclasses.replace(cfg, exp_mode="first_order")

    def estimate():
        return S if method == "default_ema" else reconstruct(f)

    _emit(records, spec, method, seed, 0, t0,
          S_ref if iterate else sigma, estimate())
    for k in range(spec.steps):
        g = grads[k]
        if method == "default_ema":
            S = baselines.ema_full_step(S, g, cfg.beta2, cfg.gamma, cfg.damping)
        elif method == "spectral":
            f = rgd_step_exact(f, gop_residual(f, g, cfg.gamma), cfg)
        else:
            f = rgd_step_gop_truncated(f, g, cfg)
        if iterate:
            S_ref = baselines.ema_full_step(S_ref, g, cfg.beta2, cfg.gamma, cfg.damping)
        if _is_eval_step(k + 1, spec):
            _emit(records, spec, method, seed, k + 1, t0,
                  S_ref if iterate else sigma, estimate())
    return records, digest


def _cell_kron(spec, method, seed):
    sigma, grads, digest = _gradient_stream(spec, seed)
    n, m = spec.n, spec.m
    iterate = spec.kind == "iterate_kron"
    cfg = spec.config
    records = []
    t0 = time.perf_counter()

    S_ref = np.eye(n * m, dtype=spec.dtype) if iterate else None
    state = None
    if method == "default_ema":
        S = np.eye(n * m, dtype=spec.dtype)
    elif method == "kron_projection":
        SC, SK = np.eye(n, dtype=spec.dtype), np.eye(m, dtype=spec.dtype)
    else:
        state = kron.identity_kron_factor(n, m, dtype=spec.dtype)
    if method == "kron_truncated":
        cfg = dataclasses.replace(cfg, exp_mode="first_order")
    elif method == "kron_exact":
        cfg = dataclasses.replace(cfg, exp_mode="exact")

    det_drift_max = 0.0

    def estimate():
        if method == "default_ema":
            return S
        if method == "kron_projection":
            return np.kron(SC, SK)
        return kron.kron_reconstruct(state)

    def eval_point(k):
        wall = _emit(records, spec, method, seed, k, t0,
                     S_ref if iterate else sigma, estimate())
        if state is not None:
            records.append(TraceRecord(spec.experiment_id, method, seed, k,
                                       "det_drift_max", det_drift_max, wall))

    eval_point(0)
    for k in range(spec.steps):
        g = grads[k]
        G = g.reshape(n, m)
        if method == "default_ema":
            S = baselines.ema_full_step(S, g, cfg.beta2, cfg.gamma, cfg.damping)
        elif method == "kron_projection":
            SC, SK = baselines.projection_kron_step(
                SC, SK, g, cfg.beta2, cfg.gamma, cfg.damping
            )
        elif method == "kron_exact":
            state = kron.kron_rgd_step_exact(state, G, cfg)
        else:
            state = kron.kron_rgd_step_truncated(state, G, cfg)
        if state is not None:
            drift = max(
                abs(float(np.sum(np.log(state.factor_C.eigvals)))),
                abs(float(np.sum(np.log(state.factor_K.eigvals)))),
            )
            det_drift_max = max(det_drift_max, drift)
        if iterate:
            S_ref = baselines.ema_full_step(S_ref, g, cfg.beta2, cfg.gamma, cfg.damping)
        if _is_eval_step(k + 1, spec):
            eval_point(k + 1)
    return records, digest


def _cell_spd(spec, method, seed):
    dim = spec.dim
    params = spec.problem
    spd_kind = params.get("spd_kind", "log_det")
    Q = generate_random_spd(dim, spec.cond, seed)
    if spd_kind == "metric_nearness":
        count = int(params.get("data_count", 8 * dim))
        batch_size = int(params.get("batch_size", 2 * dim))
        X = make_rng(_DATA_STREAM, seed, dim).standard_normal((count, dim))
        prob = SpdProblem(spd_kind, Q, X=X, batch_size=batch_size)
        loss_opt = 0.0
    else:
        prob = SpdProblem(spd_kind, Q)
        loss_opt = float(dim + np.linalg.slogdet(Q)[1])
    batch_rng = make_rng(_DATA_STREAM + 1, seed, dim)

    cfg = spec.config
    f = identity_factor(dim)
    records = []
    t0 = time.perf_counter()

    def eval_point(k):
        wall = time.perf_counter() - t0
        excess = spd_loss(f, prob) - loss_opt
        if not np.isfinite(excess):
            raise NumericalError("non-finite evaluation loss")
        records.append(TraceRecord(spec.experiment_id, method, seed, k,
                                   "excess_loss", excess, wall))
        records.append(TraceRecord(spec.experiment_id, method, seed, k,
                                   "min_eigval", float(np.min(f.eigvals)), wall))

    eval_point(0)
    for k in range(spec.steps):
        if spd_kind == "metric_nearness":
            idx = batch_rng.choice(prob.X.shape[0], size=prob.batch_size, replace=False)
            _, Cr = spd_opt_residual(f, prob, batch=prob.X[idx])
        else:
            _, Cr = spd_opt_residual(f, prob)
        f = rgd_step_exact(f, Cr, cfg)
        if _is_eval_step(k + 1, spec):
            eval_point(k + 1)
    return records, None


def _nes_initial_mean(params, dim, rng):
    if "init_distance" in params:
        v = rng.standard_normal(dim)
        return v * (float(params["init_distance"]) / np.linalg.norm(v))
    box = float(params.get("init_box", 2.0))
    return rng.uniform(-box, box, dim)


def _cell_nes(spec, method, seed):
    dim = spec.dim
    params = spec.problem
    fn_name = params.get("function", "rosenbrock")
    objective = lambda w: test_function(fn_name, w)
    K = int(params.get("pop_size", default_pop_size(dim)))
    eta_mu = float(params.get("eta_mu", 1.0))
    eta_sigma = float(
        params.get("eta_sigma", (9.0 + 3.0 * np.log(dim)) / (5.0 * dim ** 1.5))
    )
    sigma0 = float(params.get("init_sigma", 1.0))
    shaping = params.get("fitness_shaping", "ranks")

    rng = make_rng(_NES_STREAM, seed, dim)
    mu = _nes_initial_mean(params, dim, rng)
    f = SpectralFactor(np.eye(dim), np.full(dim, 1.0 / sigma0 ** 2))
    nes_cfg = NesConfig(pop_size=K, antithetic=True, fitness_shaping=shaping, seed=seed)
    # Learning rates are per summed utility; the estimator averages over K.
    step_cfg = dataclasses.replace(spec.config, beta2=eta_sigma * K, gamma=0.0)
    beta_mu = eta_mu * K

    records = []
    t0 = time.perf_counter()

    def eval_point(gen):
        wall = time.perf_counter() - t0
        val = objective(mu)
        if not np.isfinite(val):
            raise NumericalError("non-finite objective at the mean")
        records.append(TraceRecord(spec.experiment_id, method, seed, gen,
                                   "loss", val, wall))
        records.append(TraceRecord(spec.experiment_id, method, seed, gen,
                                   "evals", float(gen * K), wall))

    eval_point(0)
    for gen in range(spec.steps):
        g_hat, Cr = nes_estimate(f, mu, objective, nes_cfg, rng=rng)
        mu = mu - beta_mu * apply_inverse_root(f, g_hat, p=1.0)
        f = rgd_step_exact(f, Cr, step_cfg)
        if _is_eval_step(gen + 1, spec):
            eval_point(gen + 1)
    return records, None


def _cell_cayley_bench(spec, method, seed):
    dim = spec.dim
    rng = make_rng(_BENCH_STREAM, seed, dim)
    norms = spec.problem.get("norms", (0.05, 0.1, 0.2, 0.4))
    records = []
    t0 = time.perf_counter()
    eye = np.eye(dim)
    for i, norm in enumerate(norms):
        Z = rng.standard_normal((dim, dim))
        N = linalg.skew_part(Z)
        N *= norm / np.linalg.norm(N)
        t1 = time.perf_counter()
        Q = linalg.cayley_exact(N)
        exact_s = time.perf_counter() - t1
        t1 = time.perf_counter()
        Qt = linalg.cayley_truncated(N)
        trunc_s = time.perf_counter() - t1
        rows = {
            "norm": norm,
            "exact_time_s": exact_s,
            "trunc_time_s": trunc_s,
            "trunc_error": float(np.linalg.norm(Qt - Q)),
            "orth_error": float(np.linalg.norm(Q.T @ Q - eye)),
            "roundtrip_error": float(np.linalg.norm(linalg.cayley_inverse(Q) - N)),
        }
        wall = time.perf_counter() - t0
        for name, val in rows.items():
            records.append(TraceRecord(spec.experiment_id, method, seed, i,
                                       name, val, wall))
    return records, None


def _run_cell(spec, method, seed):
    runner = {
        "fixed_point_full": _cell_full,
        "iterate_full": _cell_full,
        "fixed_point_kron": _cell_kron,
        "iterate_kron": _cell_kron,
        "spd_opt": _cell_spd,
        "nes": _cell_nes,
        "cayley_bench": _cell_cayley_bench,
    }
    if spec.kind == "train_demo":
        from .train_demo import run_train_demo_cell

        return run_train_demo_cell(spec, method, seed)
    try:
        return runner[spec.kind](spec, method, seed)
    except (InvalidArgumentError, DomainError, PreconditionError,
            NumericalError, EvaluationError, FloatingPointError,
            np.linalg.LinAlgError):
        row = TraceRecord(spec.experiment_id, method, seed, -1,
                          "failure", 1.0, 0.0)
        return [row], None


def run_experiment(spec):
    """Run every (method, seed) cell and return the merged trace list.

    Cells are independent; with SPECFACT_THREADS > 1 they run on a thread
    pool, and the output order is (method, seed) regardless of scheduling.
    Matching experiments verify that all methods consumed the identical
    gradient stream (hash equality per seed).
    """
    cells = [(m, s) for m in spec.methods for s in spec.seeds]
    threads = int(os.environ.get(THREADS_ENV, "1") or "1")
    if threads > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda c: _run_cell(spec, *c), cells))
    else:
        results = [_run_cell(spec, m, s) for m, s in cells]

    stream_hash = {}
    records = []
    for (method, seed), (rows, digest) in zip(cells, results):
        if digest is not None:
            prev = stream_hash.setdefault(seed, digest)
            if prev != digest:
                raise NumericalError(
                    f"gradient stream mismatch between methods for seed {seed}"
                )
        records.extend(rows)
    return records
