"""Command-line entry point.

Subcommands:
  simulate-op         one operator -> latency report
  simulate-inference  prefill / decode / end-to-end -> inference report
  area                die-area breakdown
  cost                area + wafer + memory -> cost rows
  sweep               cartesian grid over descriptor fields -> CSV

Outputs are deterministic: identical manifests (including the mapper seed)
produce byte-identical files. Exit codes: 0 success, 2 configuration error,
3 infeasible configuration, 4 internal failure. Report and CSV schemas are
documented in docs/report_formats.md.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import dataclasses
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .areacost import (
    CostCalibration,
    calibrate_overheads,
    default_cost_calibration,
    die_area,
    full_cost_report,
    parse_cost_calibration,
)
from .errors import ConfigError, InfeasibleError, TilesimError
from .hardware import (
    SystemDescriptor,
    apply_override,
    parse_system_descriptor,
    preset,
    PRESET_NAMES,
)
from .inference import (
    simulate_decode_token,
    simulate_end_to_end,
    simulate_prefill,
)
from .mapper import MappingSearcher, SearchBudget, find_optimal_mapping
from .netsim import CollectiveSpec, link_transfer_latency, ring_allreduce_latency
from .workload import (
    InferenceScenario,
    ModelConfig,
    OperatorSpec,
    operator_roofline,
    parse_model_config,
    parse_scenario,
)

FORMATS = ("table", "csv", "report")

SWEEP_CSV_COLUMNS = ("prefill_seconds", "decode_token_seconds",
                     "end_to_end_seconds", "tokens_per_second")


@dataclass
class RunManifest:
    """Everything one invocation needs; `run` executes it."""

    subcommand: str
    hardware: str = ""
    model: str = ""
    scenario: str = ""
    calibration: str = ""
    budget: int = 512
    seed: int = 0
    jobs: int = 1
    out: str = "."
    formats: tuple = ("table", "report")
    op_args: dict = field(default_factory=dict)
    sweep_sets: tuple = ()  # ((path, (v1, v2, ...)), ...)
    decode_mode: str = "auto"
    systolic_cache: str = ""
    plan_cache: str = ""


def _read_text(path: str, what: str) -> str:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} file not found: {path}")
    return p.read_text()


def _load_system(arg: str) -> SystemDescriptor:
    if arg.startswith("preset:"):
        return preset(arg.split(":", 1)[1])
    return parse_system_descriptor(_read_text(arg, "hardware"))


def _load_scenario(arg: str) -> dict:
    """Scenario from a file path or an inline YAML snippet."""
    if Path(arg).exists():
        text = _read_text(arg, "scenario")
    else:
        text = arg
    return parse_scenario(text)


def _budget(manifest: RunManifest) -> SearchBudget:
    return SearchBudget(max_candidates=manifest.budget, seed=manifest.seed)


def _format_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _kv_table(title: str, rows: list) -> str:
    width = max((len(str(k)) for k, _ in rows), default=0)
    lines = [title, "-" * len(title)]
    lines += [f"{str(k):<{width}}  {_format_value(v)}" for k, v in rows]
    return "\n".join(lines) + "\n"


def _write_outputs(manifest: RunManifest, name: str, report_obj: dict,
                   table_text: str) -> None:
    out = Path(manifest.out)
    out.mkdir(parents=True, exist_ok=True)
    if "table" in manifest.formats:
        sys.stdout.write(table_text)
        (out / f"{name}_report.txt").write_text(table_text)
    if "report" in manifest.formats:
        (out / f"{name}_report.json").write_text(
            json.dumps(report_obj, sort_keys=True, indent=2) + "\n")


def _latency_report_dict(report) -> dict:
    return {
        "total_seconds": report.total_seconds,
        "compute_seconds": report.compute_seconds,
        "launch_overhead_seconds": report.launch_overhead_seconds,
        "io_seconds": dict(report.io_seconds),
        "bytes_moved": dict(report.bytes_moved),
        "flops_executed": report.flops_executed,
        "utilization": report.utilization,
    }


def _build_operator_spec(args: dict) -> OperatorSpec:
    kind = args.get("op")
    bpe = args.get("bpe", 2)
    if kind == "matmul":
        return OperatorSpec.matmul(args["m"], args["k"], args["n"],
                                   count=args.get("count", 1), bytes_per_element=bpe)
    if kind == "softmax":
        return OperatorSpec.softmax(args["m"], args["n"], bytes_per_element=bpe)
    if kind == "layernorm":
        return OperatorSpec.layer_norm(args["m"], args["n"], bytes_per_element=bpe)
    if kind == "gelu":
        return OperatorSpec.gelu(args["elements"], bytes_per_element=bpe)
    if kind == "allreduce":
        return OperatorSpec.all_reduce(args["bytes"], args["participants"])
    if kind == "p2p":
        return OperatorSpec.p2p(args["bytes"])
    raise ConfigError(f"simulate-op: unknown operator {kind!r}")


def _run_simulate_op(manifest: RunManifest) -> None:
    system = _load_system(manifest.hardware)
    spec = _build_operator_spec(manifest.op_args)
    searcher = MappingSearcher()
    if manifest.systolic_cache:
        searcher.systolic_table.load(manifest.systolic_cache)
    if manifest.plan_cache:
        searcher.load_plan_cache(manifest.plan_cache, system.device)

    if spec.is_collective:
        if system.interconnect is None:
            raise ConfigError("simulate-op: collectives need an interconnect section")
        if spec.kind == "AllReduce":
            seconds = ring_allreduce_latency(
                CollectiveSpec(spec.payload_bytes, spec.participants), system.interconnect)
        else:
            seconds = link_transfer_latency(spec.payload_bytes, system.interconnect)
        report_obj = {"operator": dataclasses.asdict(spec),
                      "latency": {"total_seconds": seconds}}
        rows = [("operator", spec.kind), ("payload_bytes", spec.payload_bytes),
                ("participants", spec.participants), ("total_seconds", seconds)]
        _write_outputs(manifest, "simulate_op", report_obj,
                       _kv_table("operator latency", rows))
        return

    plan, report = find_optimal_mapping(system.device, spec, _budget(manifest),
                                        searcher=searcher)
    flops, min_bytes, roofline_seconds = operator_roofline(spec, system.device)
    report_obj = {
        "operator": dataclasses.asdict(spec),
        "plan": dataclasses.asdict(plan),
        "latency": _latency_report_dict(report),
        "roofline": {"flops": flops, "min_bytes": min_bytes,
                     "seconds": roofline_seconds},
    }
    rows = [("operator", spec.kind),
            ("shape", f"m={spec.m} k={spec.k} n={spec.n} count={spec.count} "
                      f"elements={spec.elements}"),
            ("total_seconds", report.total_seconds),
            ("roofline_seconds", roofline_seconds),
            ("utilization", report.utilization),
            ("flops_executed", report.flops_executed),
            ("main_memory_bytes", report.bytes_moved["main_global"]),
            ("plan", f"tile=({plan.tile_m},{plan.tile_k},{plan.tile_n}) "
                     f"subtile=({plan.subtile_m},{plan.subtile_k},{plan.subtile_n}) "
                     f"lane=({plan.lane_m},{plan.lane_k},{plan.lane_n}) "
                     f"scheme={plan.scheme} dbg={plan.double_buffer_global} "
                     f"dbl={plan.double_buffer_local}")]
    _write_outputs(manifest, "simulate_op", report_obj,
                   _kv_table("operator latency", rows))
    if manifest.systolic_cache:
        searcher.systolic_table.save(manifest.systolic_cache)
    if manifest.plan_cache:
        searcher.save_plan_cache(manifest.plan_cache)


def _inference_metrics(system: SystemDescriptor, model: ModelConfig, scenario: dict,
                       budget: SearchBudget, decode_mode: str,
                       searcher: MappingSearcher | None = None) -> dict:
    """Scalar metrics for one scenario; shared by simulate-inference and sweep."""
    searcher = searcher or MappingSearcher()
    stage = scenario["stage"]
    metrics: dict = {key: "" for key in SWEEP_CSV_COLUMNS}
    detail: dict = {}
    if stage == "prefill":
        scn = InferenceScenario(stage="prefill", batch=scenario["batch"],
                                input_len=scenario["input_len"],
                                tensor_parallel=scenario["tensor_parallel"],
                                pipeline_parallel=scenario["pipeline_parallel"])
        seconds, layer, mem = simulate_prefill(system, model, scn, budget, searcher)
        metrics["prefill_seconds"] = seconds
        detail = {"prefill_seconds": seconds,
                  "per_operator": {name: s for name, s in layer.per_operator},
                  "memory": dataclasses.asdict(mem)}
    elif stage == "decode":
        seconds, layer = simulate_decode_token(
            system, model, scenario["batch"], scenario["context_len"],
            scenario["tensor_parallel"], scenario["pipeline_parallel"],
            budget, searcher)
        metrics["decode_token_seconds"] = seconds
        detail = {"decode_token_seconds": seconds,
                  "per_operator": {name: s for name, s in layer.per_operator}}
    else:  # end-to-end
        report = simulate_end_to_end(
            system, model, scenario["batch"], scenario["input_len"],
            scenario["output_len"], scenario["tensor_parallel"],
            scenario["pipeline_parallel"], budget, searcher, mode=decode_mode)
        metrics["prefill_seconds"] = report.prefill_seconds
        if report.decode_seconds_per_token:
            metrics["decode_token_seconds"] = report.decode_seconds_per_token[0][1]
        metrics["end_to_end_seconds"] = report.end_to_end_seconds
        metrics["tokens_per_second"] = report.tokens_per_second
        detail = {
            "prefill_seconds": report.prefill_seconds,
            "decode_seconds_per_token": [list(p) for p in report.decode_seconds_per_token],
            "end_to_end_seconds": report.end_to_end_seconds,
            "tokens_per_second": report.tokens_per_second,
            "per_operator": report.per_operator,
            "memory": dataclasses.asdict(report.memory),
            "mode": report.mode,
        }
    return {"metrics": metrics, "detail": detail}


def _run_simulate_inference(manifest: RunManifest) -> None:
    system = _load_system(manifest.hardware)
    model = parse_model_config(_read_text(manifest.model, "model"))
    scenario = _load_scenario(manifest.scenario)
    result = _inference_metrics(system, model, scenario, _budget(manifest),
                                manifest.decode_mode)
    detail = result["detail"]
    rows = [(k, v) for k, v in detail.items() if not isinstance(v, (dict, list))]
    if "per_operator" in detail:
        rows += [(f"op:{name}", s) for name, s in detail["per_operator"].items()]
    table = _kv_table(f"inference ({scenario['stage']})", rows)
    _write_outputs(manifest, "simulate_inference",
                   {"scenario": scenario, "result": detail}, table)


def _load_calibration(manifest: RunManifest) -> CostCalibration:
    if manifest.calibration:
        return parse_cost_calibration(_read_text(manifest.calibration, "calibration"))
    return default_cost_calibration()


def _run_area(manifest: RunManifest) -> None:
    system = _load_system(manifest.hardware)
    cal = _load_calibration(manifest)
    link_bw = system.interconnect.bandwidth if system.interconnect else 0.0
    report = die_area(system.device, cal.area, link_bw)
    rows = sorted(report.components_mm2.items()) + [("total_mm2", report.total_mm2)]
    _write_outputs(manifest, "area",
                   {"components_mm2": report.components_mm2,
                    "total_mm2": report.total_mm2},
                   _kv_table("die area (mm2)", rows))


def _run_cost(manifest: RunManifest) -> None:
    system = _load_system(manifest.hardware)
    cal = _load_calibration(manifest)
    link_bw = system.interconnect.bandwidth if system.interconnect else 0.0
    report = full_cost_report(system.device, cal.area, cal.wafer, link_bw,
                              cal.memory_price_per_gb)
    rows = [("total_mm2", report.total_mm2),
            ("die_cost_usd", report.die_cost_usd),
            ("memory_cost_usd", report.memory_cost_usd),
            ("total_cost_usd", report.total_cost_usd)]
    _write_outputs(manifest, "cost",
                   {"components_mm2": report.components_mm2,
                    "total_mm2": report.total_mm2,
                    "die_cost_usd": report.die_cost_usd,
                    "memory_cost_usd": report.memory_cost_usd,
                    "total_cost_usd": report.total_cost_usd},
                   _kv_table("cost", rows))


def _sweep_grid(sweep_sets) -> list:
    """Cartesian product in the order the --set flags were given."""
    grid = [()]
    for path, values in sweep_sets:
        grid = [point + ((path, value),) for point in grid for value in values]
    return grid


def _sweep_point(payload: tuple) -> dict:
    """Worker for one grid point (top level so process pools can pickle it)."""
    (hardware, model_text, scenario, budget_n, seed, decode_mode, overrides) = payload
    system = _load_system(hardware)
    for path, value in overrides:
        system = apply_override(system, path, value)
    model = parse_model_config(model_text)
    budget = SearchBudget(max_candidates=budget_n, seed=seed)
    result = _inference_metrics(system, model, scenario, budget, decode_mode)
    return result["metrics"]


def _run_sweep(manifest: RunManifest) -> None:
    if not manifest.sweep_sets:
        raise ConfigError("sweep: at least one --set path=v1,v2,... is required")
    model_text = _read_text(manifest.model, "model")
    scenario = _load_scenario(manifest.scenario)
    grid = _sweep_grid(manifest.sweep_sets)
    payloads = [
        (manifest.hardware, model_text, scenario, manifest.budget, manifest.seed,
         manifest.decode_mode, point)
        for point in grid
    ]
    if manifest.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=manifest.jobs) as pool:
            results = list(pool.map(_sweep_point, payloads))
    else:
        results = [_sweep_point(p) for p in payloads]

    param_names = [path for path, _ in manifest.sweep_sets]
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["index", *param_names, *SWEEP_CSV_COLUMNS])
    for index, (point, metrics) in enumerate(zip(grid, results)):
        row = [index] + [_format_value(v) for _, v in point]
        row += [("" if metrics[c] == "" else _format_value(metrics[c]))
                for c in SWEEP_CSV_COLUMNS]
        writer.writerow(row)
    out = Path(manifest.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_text = buffer.getvalue()
    (out / "sweep.csv").write_text(csv_text)
    if "table" in manifest.formats:
        sys.stdout.write(csv_text)
    if "report" in manifest.formats:
        (out / "sweep_report.json").write_text(json.dumps(
            {"columns": ["index", *param_names, *SWEEP_CSV_COLUMNS],
             "rows": [[i] + [v for _, v in point]
                      + [metrics[c] for c in SWEEP_CSV_COLUMNS]
                      for i, (point, metrics) in enumerate(zip(grid, results))]},
            sort_keys=True, indent=2) + "\n")


def run(manifest: RunManifest) -> int:
    """Execute a manifest; returns the process exit status."""
    handlers = {
        "simulate-op": _run_simulate_op,
        "simulate-inference": _run_simulate_inference,
        "area": _run_area,
        "cost": _run_cost,
        "sweep": _run_sweep,
    }
    if manifest.subcommand not in handlers:
        raise ConfigError(f"unknown subcommand {manifest.subcommand!r}")
    handlers[manifest.subcommand](manifest)
    return 0


def _add_common(p: argparse.ArgumentParser, needs_model: bool = False) -> None:
    p.add_argument("--hardware", required=True,
                   help=f"hardware description file, or preset:{{{','.join(PRESET_NAMES)}}}")
    if needs_model:
        p.add_argument("--model", required=True, help="model configuration file")
        p.add_argument("--scenario", required=True,
                       help="scenario file or inline YAML")
        p.add_argument("--decode-mode", default="auto",
                       choices=("auto", "exact", "interpolated"))
    p.add_argument("--budget", type=int, default=512,
                   help="max mapping candidates simulated per operator")
    p.add_argument("--seed", type=int, default=0, help="mapper subsampling seed")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--format", default="table,report",
                   help="comma-set of {table,csv,report}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tilesim",
        description="Analytical latency, area, and cost model for LLM inference hardware.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    op = sub.add_parser("simulate-op", help="simulate one operator")
    _add_common(op)
    op.add_argument("--op", required=True,
                    choices=("matmul", "softmax", "layernorm", "gelu", "allreduce", "p2p"))
    op.add_argument("--m", type=int, default=1)
    op.add_argument("--k", type=int, default=1)
    op.add_argument("--n", type=int, default=1)
    op.add_argument("--count", type=int, default=1)
    op.add_argument("--elements", type=int, default=0)
    op.add_argument("--bytes", type=int, default=0, dest="payload_bytes")
    op.add_argument("--participants", type=int, default=1)
    op.add_argument("--bpe", type=int, default=2, help="bytes per element")
    op.add_argument("--systolic-cache", default="", help="systolic cycle cache file")
    op.add_argument("--plan-cache", default="", help="mapping plan cache file")

    inf = sub.add_parser("simulate-inference", help="simulate prefill/decode/end-to-end")
    _add_common(inf, needs_model=True)

    area = sub.add_parser("area", help="die-area breakdown")
    _add_common(area)
    area.add_argument("--calibration", default="", help="area/cost calibration file")

    cost = sub.add_parser("cost", help="die + memory cost")
    _add_common(cost)
    cost.add_argument("--calibration", default="", help="area/cost calibration file")

    sweep = sub.add_parser("sweep", help="cartesian sweep over descriptor fields")
    _add_common(sweep, needs_model=True)
    sweep.add_argument("--set", action="append", default=[], dest="sets",
                       metavar="PATH=V1,V2,...",
                       help="e.g. device.memory_bandwidth=400e9,800e9 (repeatable)")
    sweep.add_argument("--jobs", type=int, default=1, help="concurrent sweep points")

    return parser


def _parse_sets(raw_sets: list) -> tuple:
    parsed = []
    for item in raw_sets:
        if "=" not in item:
            raise ConfigError(f"sweep: bad --set {item!r}, expected PATH=V1,V2,...")
        path, values = item.split("=", 1)
        if not values:
            raise ConfigError(f"sweep: --set {path} has no values")
        parsed.append((path, tuple(values.split(","))))
    return tuple(parsed)


def manifest_from_args(args: argparse.Namespace) -> RunManifest:
    formats = tuple(f for f in args.format.split(",") if f)
    for f in formats:
        if f not in FORMATS:
            raise ConfigError(f"unknown output format {f!r}; known: {FORMATS}")
    op_args = {}
    if args.subcommand == "simulate-op":
        op_args = {"op": args.op, "m": args.m, "k": args.k, "n": args.n,
                   "count": args.count, "elements": args.elements,
                   "bytes": args.payload_bytes, "participants": args.participants,
                   "bpe": args.bpe}
    return RunManifest(
        subcommand=args.subcommand,
        hardware=getattr(args, "hardware", ""),
        model=getattr(args, "model", ""),
        scenario=getattr(args, "scenario", ""),
        calibration=getattr(args, "calibration", ""),
        budget=args.budget,
        seed=args.seed,
        jobs=getattr(args, "jobs", 1),
        out=args.out,
        formats=formats,
        op_args=op_args,
        sweep_sets=_parse_sets(getattr(args, "sets", [])),
        decode_mode=getattr(args, "decode_mode", "auto"),
        systolic_cache=getattr(args, "systolic_cache", ""),
        plan_cache=getattr(args, "plan_cache", ""),
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        manifest = manifest_from_args(args)
        return run(manifest)
    except ConfigError as exc:
        print(f"tilesim: config error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleError as exc:
        print(f"tilesim: infeasible configuration: {exc}", file=sys.stderr)
        return 3
    except TilesimError as exc:
        print(f"tilesim: error: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:  # invariant failures and genuine bugs
        print(f"tilesim: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
