"""Trace records and their CSV/JSON emission."""

import csv
import hashlib
import json
from dataclasses import asdict, dataclass

from ..errors import InvalidArgumentError

CSV_COLUMNS = ("experiment", "method", "seed", "iteration", "metric", "value", "wall_time_s")
RNG_NAME = "Philox"


@dataclass(frozen=True)
class TraceRecord:
    """One measured value: (experiment, method, seed, iteration, metric)."""

    experiment: str
    method: str
    seed: int
    iteration: int
    metric: str
    value: float
    wall_time_s: float


def spec_hash(spec_doc):
    """Stable hash of a canonicalized spec document (dict)."""
    blob = json.dumps(spec_doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def emit_traces(records, path, format="csv", metadata=None):
    """Write records to path plus a metadata sidecar at path + '.meta.json'.

    CSV columns are exactly experiment,method,seed,iteration,metric,value,
    wall_time_s; JSON is an array of objects with the same keys.
    """
    path = str(path)
    if format not in ("csv", "json"):
        raise InvalidArgumentError(f"unknown format {format!r}")
    try:
        if format == "csv":
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(CSV_COLUMNS)
                for r in records:
                    writer.writerow(
                        [r.experiment, r.method, r.seed, r.iteration,
                         r.metric, repr(r.value), repr(r.wall_time_s)]
                    )
        else:
            with open(path, "w") as fh:
                json.dump([asdict(r) for r in records], fh, indent=1)
                fh.write("\n")
        if metadata is not None:
            with open(path + ".meta.json", "w") as fh:
                json.dump(metadata, fh, indent=1, sort_keys=True)
                fh.write("\n")
    except OSError as exc:
        raise OSError(f"failed writing traces to {path!r}: {exc}") from exc


def parse_traces(path, format="csv"):
    """Inverse of emit_traces (round-trip identity for finite values)."""
    if format == "csv":
        out = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                out.append(
                    TraceRecord(
                        row["experiment"], row["method"], int(row["seed"]),
                        int(row["iteration"]), row["metric"],
                        float(row["value"]), float(row["wall_time_s"]),
                    )
                )
        return out
    with open(path) as fh:
        return [TraceRecord(**obj) for obj in json.load(fh)]
