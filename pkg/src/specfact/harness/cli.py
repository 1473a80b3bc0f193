"""Command-line entry point for the experiment engine."""

import argparse
import json
import sys

from ..errors import ConfigError
from ..spectral import UpdateConfig
from .experiments import ExperimentSpec, run_experiment
from .traces import RNG_NAME, emit_traces, spec_hash

_KIND_BY_COMMAND = {
    "validate-full": "fixed_point_full",
    "validate-kron": "fixed_point_kron",
    "spd-opt": "spd_opt",
    "nes": "nes",
    "train-demo": "train_demo",
    "cayley-bench": "cayley_bench",
}


def default_spec(kind):
    """Small built-in configuration used when --config is absent."""
    if kind == "fixed_point_full":
        return ExperimentSpec(kind=kind, steps=1000, seeds=(0,), dim=100,
                              methods=("spectral", "default_ema"),
                              eval_every=50)
    if kind == "fixed_point_kron":
        return ExperimentSpec(kind=kind, steps=1000, seeds=(0,), n=9, m=11,
                              methods=("kron_exact", "kron_projection"),
                              eval_every=50)
    if kind == "spd_opt":
        return ExperimentSpec(kind=kind, steps=2000, seeds=(0,), dim=60,
                              methods=("spectral",), eval_every=100,
                              config=UpdateConfig(beta2=0.02))
    if kind == "nes":
        return ExperimentSpec(kind=kind, steps=2000, seeds=(0,), dim=10,
                              methods=("nes_spectral",), eval_every=50,
                              problem={"function": "rosenbrock"})
    if kind == "train_demo":
        return ExperimentSpec(kind=kind, steps=50, seeds=(0,), dim=32,
                              methods=("kron_truncated",),
                              config=UpdateConfig(beta1=0.05, beta2=0.05,
                                                  damping=1e-6,
                                                  cayley_mode="truncated",
                                                  exp_mode="first_order"))
    return ExperimentSpec(kind=kind, steps=1, seeds=(0,), dim=100,
                          methods=("spectral",))


def _load_spec(args, kind):
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config!r}: {exc}") from exc
        doc.setdefault("kind", kind)
        if doc["kind"] != kind:
            raise ConfigError(
                f"config kind {doc['kind']!r} does not match subcommand kind {kind!r}"
            )
        spec = ExperimentSpec.from_dict(doc)
    else:
        spec = default_spec(kind)
    overrides = {}
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    if args.precision is not None:
        overrides["precision"] = args.precision
    if overrides:
        import dataclasses

        spec = dataclasses.replace(spec, **overrides)
    return spec


def build_parser():
    parser = argparse.ArgumentParser(
        prog="specfact",
        description="Spectral-factorized curvature learning experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command in _KIND_BY_COMMAND:
        p = sub.add_parser(command)
        p.add_argument("--config", help="JSON experiment specification")
        p.add_argument("--seed", type=int, help="replace the seed list")
        p.add_argument("--out", default=None, help="trace output path")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--precision", choices=("f32", "f64"), default=None)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    kind = _KIND_BY_COMMAND[args.command]
    try:
        spec = _load_spec(args, kind)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    records = run_experiment(spec)

    cells = {(m, s) for m in spec.methods for s in spec.seeds}
    failed = {(r.method, r.seed) for r in records if r.metric == "failure"}
    if args.out:
        metadata = {
            "spec_hash": spec_hash(spec.to_doc()),
            "seeds": list(spec.seeds),
            "scalar_width": 32 if spec.precision == "f32" else 64,
            "rng": RNG_NAME,
        }
        emit_traces(records, args.out, format=args.format, metadata=metadata)
    else:
        for r in records:
            print(f"{r.experiment},{r.method},{r.seed},{r.iteration},"
                  f"{r.metric},{r.value},{r.wall_time_s}")
    if failed and failed == cells:
        print("numerical failure in all seeds", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
