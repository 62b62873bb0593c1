"""Experiment runner: JSON configs in, machine-readable reports out.

Every config carries a mandatory seed; identical configs produce
byte-identical report payloads (timestamps live only in the metadata
field). Reports are written atomically.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import experiments as ex
from .circuits import (
    CircuitSpec,
    DEFAULT_ENTRY_GUARD,
    grid_tensor,
    sample_circuit,
)
from .generators import cp_generate, hierarchical_generate, sample_cp_params, \
    sample_hierarchical_params
from .network import build_tensor_network, min_multiplicative_cut
from .experiments import EXPERIMENT_RANK_TOL
from .tensor import MemoryGuardError, OperatorSpec, Partition
from .trees import (
    PoolingSchedule,
    baseline_schedule,
    dilation_tree,
    mirror_schedule,
    resolve_partition,
    shallow_schedule,
    stride1_schedule,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GUARD = 3
EXIT_INTERNAL = 4

OUT_DIR_ENV = "CIRCUITRANK_OUT_DIR"

EXPERIMENTS = {
    "depth_efficiency": "even-odd ranks of random deep models vs the shallow-width lower bound",
    "rank_spectrum": "matricization ranks of a seeded model across partitions",
    "separation_rank": "grid-tensor matricization rank of one circuit for one partition",
    "overlap": "stride-1 circuit ranks vs the non-overlapping min-cut ceiling, plus exact reduction",
    "min_cut_verify": "Monte-Carlo max separation ranks vs multiplicative min-cuts",
    "width_advise": "exhaustive width allocation maximizing the worst target min-cut",
    "mixture": "two dilation trees vs their exchanged mixture, rank by partition",
    "grid_tensor_dump": "exhaustive grid tensor of a circuit in the debug dump format",
}


class ConfigError(ValueError):
    pass


def _require(config: dict, key: str, kind=None):
    if key not in config:
        raise ConfigError(f"missing required field '{key}'")
    value = config[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"field '{key}' has the wrong type")
    return value


def _positive_int(config: dict, key: str) -> int:
    value = _require(config, key)
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ConfigError(f"field '{key}' must be a positive integer")
    return value


def _parse_partitions(config: dict, n: int, schedule=None) -> list[Partition]:
    specs = _require(config, "partitions", list)
    if not specs:
        raise ConfigError("field 'partitions' must not be empty")
    out = []
    for entry in specs:
        try:
            if isinstance(entry, str):
                out.append(resolve_partition(entry, n, schedule))
            elif isinstance(entry, dict) and "window_splitting" in entry:
                out.append(resolve_partition(("window_splitting",
                                              entry["window_splitting"]), n, schedule))
            elif isinstance(entry, dict) and "custom" in entry:
                out.append(resolve_partition(("custom", entry["custom"]), n))
            else:
                raise ValueError(f"unknown partition entry {entry!r}")
        except ValueError as err:
            raise ConfigError(f"field 'partitions': {err}") from err
    return out


def _parse_schedule(obj: dict) -> PoolingSchedule:
    if "layers" in obj:
        return PoolingSchedule.from_json_dict(obj)
    kind = _require(obj, "type", str)
    n = _positive_int(obj, "n")
    try:
        if kind == "baseline":
            return baseline_schedule(n)
        if kind == "shallow":
            return shallow_schedule(n)
        if kind == "mirror":
            return mirror_schedule(n)
        if kind == "stride1":
            return stride1_schedule(n, int(obj.get("window", 2)))
    except ValueError as err:
        raise ConfigError(f"field 'schedule': {err}") from err
    raise ConfigError(f"field 'schedule.type': unknown type {kind!r}")


def _parse_operator(obj: dict) -> OperatorSpec:
    try:
        return OperatorSpec(obj.get("activation", "identity"),
                            obj.get("pooling", "product"))
    except ValueError as err:
        raise ConfigError(f"field 'activation'/'pooling': {err}") from err


def _parse_circuit(obj: dict):
    """(descriptor, schedule, factory(rng) -> CircuitSpec)."""
    schedule = _parse_schedule(_require(obj, "schedule", dict))
    m = _positive_int(obj, "mode_length")
    widths = _require(obj, "widths")
    op = _parse_operator(obj)

    def factory(rng) -> CircuitSpec:
        try:
            return sample_circuit(schedule, m, widths if isinstance(widths, int)
                                  else tuple(widths), op, rng)
        except ValueError as err:
            raise ConfigError(f"field 'widths': {err}") from err

    return f"circuit({op.activation},{op.pooling})", schedule, factory


def _parse_model(obj: dict, rel_tol: float):
    """(descriptor, n, factory(rng) -> DenseTensor, bounds_fn or None)."""
    kind = _require(obj, "kind", str)
    if kind == "cp":
        n = _positive_int(obj, "order")
        m = _positive_int(obj, "mode_length")
        r0 = _positive_int(obj, "num_terms")

        def factory(rng):
            return cp_generate(sample_cp_params(n, m, r0, rng))

        return f"cp(r0={r0})", n, factory, lambda partitions: [r0] * len(partitions)
    if kind == "hierarchical":
        n = _positive_int(obj, "n")
        m = _positive_int(obj, "mode_length")
        width = _positive_int(obj, "width")
        order = obj.get("dilation_order")
        try:
            tree = dilation_tree(n, tuple(order) if order else None)
        except ValueError as err:
            raise ConfigError(f"field 'dilation_order': {err}") from err

        def factory(rng):
            return hierarchical_generate(sample_hierarchical_params(tree, m, width, rng))

        return f"hierarchical(width={width})", n, factory, None
    if kind == "circuit":
        descriptor, schedule, circuit_factory = _parse_circuit(obj)
        guard = int(obj.get("max_entries", DEFAULT_ENTRY_GUARD))

        def factory(rng):
            return grid_tensor(circuit_factory(rng), guard)

        return descriptor, schedule.spatial_size, factory, None
    raise ConfigError(f"field 'model.kind': unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# Experiment dispatch
# ---------------------------------------------------------------------------


def _run_depth_efficiency(config: dict) -> dict:
    return ex.depth_efficiency_experiment(
        n=_positive_int(config, "n"),
        mode_length=_positive_int(config, "mode_length"),
        width=_positive_int(config, "width"),
        draws=_positive_int(config, "draws"),
        seed=config["seed"],
        rel_tol=config["tolerance"],
        include_rectifier_demo=bool(config.get("include_rectifier_demo", False)),
    )


def _run_rank_spectrum(config: dict) -> dict:
    descriptor, n, factory, bounds_fn = _parse_model(_require(config, "model", dict),
                                                     config["tolerance"])
    partitions = _parse_partitions(config, n)
    bounds = bounds_fn(partitions) if bounds_fn else None
    return ex.rank_spectrum_experiment(factory, partitions,
                                       _positive_int(config, "draws"),
                                       config["seed"], config["tolerance"],
                                       descriptor, bounds)


def _run_separation_rank(config: dict) -> dict:
    _, schedule, circuit_factory = _parse_circuit(_require(config, "circuit", dict))
    n = schedule.spatial_size
    partitions = _parse_partitions(config, n, schedule)
    circuit = circuit_factory(np.random.default_rng([config["seed"]]))
    records = [{
        "partition": p.label(),
        "separation_rank": ex.separation_rank(circuit, p, config["tolerance"],
                                              config["max_entries"]),
    } for p in partitions]
    return {"n": n, "records": records}


def _run_overlap(config: dict) -> dict:
    return ex.overlap_experiment(
        n=_positive_int(config, "n"),
        mode_length=_positive_int(config, "mode_length"),
        width=_positive_int(config, "width"),
        draws=_positive_int(config, "draws"),
        seed=config["seed"],
        window=int(config.get("window", 2)),
        rel_tol=config["tolerance"],
        max_entries=config["max_entries"],
    )


def _run_min_cut_verify(config: dict) -> dict:
    n = _positive_int(config, "n")
    schedule = baseline_schedule(n)
    partitions = _parse_partitions(config, n, schedule)
    return ex.min_cut_verification(
        n=n,
        mode_length=_positive_int(config, "mode_length"),
        width=_positive_int(config, "width"),
        partitions=partitions,
        draws=_positive_int(config, "draws"),
        seed=config["seed"],
        rel_tol=config["tolerance"],
        max_entries=config["max_entries"],
    )


def _run_width_advise(config: dict) -> dict:
    n = _positive_int(config, "n")
    partitions = _parse_partitions(config, n, baseline_schedule(n))
    try:
        return ex.width_advice_experiment(n, _positive_int(config, "mode_length"),
                                          _positive_int(config, "budget"), partitions)
    except ValueError as err:
        raise ConfigError(f"field 'budget': {err}") from err


def _run_mixture(config: dict) -> dict:
    orders = config.get("orders")
    return ex.mixture_experiment(
        n=_positive_int(config, "n"),
        mode_length=_positive_int(config, "mode_length"),
        width=_positive_int(config, "width"),
        draws=_positive_int(config, "draws"),
        seed=config["seed"],
        orders=tuple(tuple(o) for o in orders) if orders else None,
        rel_tol=config["tolerance"],
    )


def _run_grid_tensor_dump(config: dict) -> dict:
    _, _, circuit_factory = _parse_circuit(_require(config, "circuit", dict))
    circuit = circuit_factory(np.random.default_rng([config["seed"]]))
    tensor = grid_tensor(circuit, config["max_entries"])
    return {"tensor": tensor.to_json_dict()}


_RUNNERS = {
    "depth_efficiency": _run_depth_efficiency,
    "rank_spectrum": _run_rank_spectrum,
    "separation_rank": _run_separation_rank,
    "overlap": _run_overlap,
    "min_cut_verify": _run_min_cut_verify,
    "width_advise": _run_width_advise,
    "mixture": _run_mixture,
    "grid_tensor_dump": _run_grid_tensor_dump,
}


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def _csv_rows(experiment: str, config: dict, results: dict) -> list[list]:
    seed, tol = config["seed"], config["tolerance"]

    def row(partition, draws, max_rank, bound, matched):
        return [experiment, partition, draws, max_rank, bound, matched, seed, tol]

    if experiment == "depth_efficiency":
        return [row(results["partition"], results["draws"], results["max_rank"],
                    results["ceiling"], results["max_rank"] == results["ceiling"])]
    if experiment == "rank_spectrum":
        return [row(a["partition"], a["draws"], a["max_rank"], a.get("bound", ""),
                    a.get("within_bound", "")) for a in results["partitions"]]
    if experiment == "separation_rank":
        return [row(r["partition"], 1, r["separation_rank"], "", "")
                for r in results["records"]]
    if experiment == "overlap":
        return [row(results["partition"], results["draws"], results["max_rank"],
                    results["nonoverlapping_ceiling"], results["exceeds_ceiling"])]
    if experiment == "min_cut_verify":
        return [row(r["partition"], results["draws"], r["max_rank"], r["min_cut"],
                    r["max_equals_cut"]) for r in results["records"]]
    if experiment == "mixture":
        return [row(r["partition"], results["draws"], r["max_rank_mixture"],
                    max(r["max_rank_tree1"], r["max_rank_tree2"]),
                    r["mixture_exceeds_both"]) for r in results["records"]]
    raise ConfigError(f"field 'format': csv is not available for {experiment}")


CSV_HEADER = ["experiment", "partition", "draw_count", "max_rank",
              "theoretical_bound", "matched", "seed", "tolerance"]


def _render_report(experiment: str, config: dict, results: dict, fmt: str) -> str:
    if fmt == "json":
        payload = {"experiment": experiment, "config": config, "results": results}
        report = {
            "metadata": {
                "tool": "circuitrank",
                "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            },
            "payload": payload,
        }
        return json.dumps(report, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    writer.writerows(_csv_rows(experiment, config, results))
    return buf.getvalue()


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".report-")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _summary_line(experiment: str, results: dict, path: str) -> str:
    key = {
        "depth_efficiency": lambda r: f"fraction_at_ceiling={r['fraction_at_ceiling']:.3f}",
        "rank_spectrum": lambda r: f"partitions={len(r['partitions'])}",
        "separation_rank": lambda r: "ranks=" + ",".join(
            str(x["separation_rank"]) for x in r["records"]),
        "overlap": lambda r: f"max_rank={r['max_rank']} ceiling={r['nonoverlapping_ceiling']}",
        "min_cut_verify": lambda r: f"all_matched={r['all_matched']}",
        "width_advise": lambda r: f"widths={r['widths']} objective={r['objective']}",
        "mixture": lambda r: f"winning_partitions={len(r['winning_partitions'])}",
        "grid_tensor_dump": lambda r: f"entries={len(r['tensor']['entries'])}",
    }[experiment](results)
    return f"{experiment}: {key} -> {path}"


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------


def load_config(path: str) -> dict:
    try:
        with open(path) as handle:
            config = json.load(handle)
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from err
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    return config


def run_experiment(config: dict) -> tuple[str, dict, dict]:
    experiment = _require(config, "experiment", str)
    if experiment not in _RUNNERS:
        raise ConfigError(f"field 'experiment': unknown experiment {experiment!r}")
    seed = _require(config, "seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("field 'seed' must be a non-negative integer (seeds are mandatory)")
    resolved = dict(config)
    resolved.setdefault("tolerance", EXPERIMENT_RANK_TOL)
    resolved.setdefault("max_entries", DEFAULT_ENTRY_GUARD)
    if not isinstance(resolved["tolerance"], (int, float)) or resolved["tolerance"] <= 0:
        raise ConfigError("field 'tolerance' must be a positive number")
    if not isinstance(resolved["max_entries"], int) or resolved["max_entries"] < 1:
        raise ConfigError("field 'max_entries' must be a positive integer")
    results = _RUNNERS[experiment](resolved)
    return experiment, resolved, results


def _cmd_run(args) -> int:
    config = load_config(args.config) if args.config else {}
    if args.seed is not None:
        config["seed"] = args.seed
    if args.tol is not None:
        config["tolerance"] = args.tol
    if args.guard is not None:
        config["max_entries"] = args.guard
    if args.experiment is not None:
        config["experiment"] = args.experiment

    experiment, resolved, results = run_experiment(config)
    fmt = args.format or resolved.get("format", "json")
    if fmt not in ("json", "csv"):
        raise ConfigError(f"field 'format': unknown format {fmt!r}")
    out = args.out or resolved.get("out")
    if out is None:
        out_dir = os.environ.get(OUT_DIR_ENV, ".")
        out = os.path.join(out_dir, f"{experiment}.{fmt}")
    text = _render_report(experiment, resolved, results, fmt)
    _atomic_write(out, text)
    print(_summary_line(experiment, results, out))
    return EXIT_OK


def _cmd_list(_args) -> int:
    for name, description in EXPERIMENTS.items():
        print(f"{name}: {description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="circuitrank",
        description="Seeded expressiveness experiments for circuit grid tensors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("--config", help="path to the JSON experiment config")
    run.add_argument("--experiment", help="experiment kind (overrides the config)")
    run.add_argument("--seed", type=int, help="seed override")
    run.add_argument("--out", help="report output path")
    run.add_argument("--format", choices=("json", "csv"), help="report format")
    run.add_argument("--tol", type=float, help="numerical rank tolerance override")
    run.add_argument("--guard", type=int, help="grid tensor entry budget override")
    run.set_defaults(func=_cmd_run)
    lst = sub.add_parser("list", help="list the available experiments")
    lst.set_defaults(func=_cmd_list)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except MemoryGuardError as err:
        print(f"memory guard: {err}", file=sys.stderr)
        return EXIT_GUARD
    except Exception as err:  # noqa: BLE001
        print(f"internal error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
