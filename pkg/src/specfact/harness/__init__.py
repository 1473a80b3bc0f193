"""Experiment engine: problem generation, metrics, traces, and the CLI."""

from .experiments import ExperimentSpec, run_experiment
from .metrics import generate_random_spd, rel_frobenius, wasserstein2_spd
from .traces import TraceRecord, emit_traces, parse_traces

__all__ = [
    "ExperimentSpec",
    "TraceRecord",
    "emit_traces",
    "generate_random_spd",
    "parse_traces",
    "rel_frobenius",
    "run_experiment",
    "wasserstein2_spd",
]
