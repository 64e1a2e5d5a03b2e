"""End-to-end prefill and decoding simulation on a multi-device system.

Tensor parallelism splits every layer across `tensor_parallel` devices and
pays two ring all-reduces per layer; pipeline parallelism assigns contiguous
layer groups to stages joined by point-to-point activation transfers. Every
unique operator spec is mapped once (the mapper memoizes), so the 96
identical layers of a big model cost a single search per operator.

End-to-end latency is prefill plus the sum of per-token decode latencies;
decode at long output lengths may be sampled at a subset of context lengths
and filled in by piecewise-linear interpolation (mode="interpolated" or
"auto" above `EXACT_DECODE_THRESHOLD` tokens).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import CapacityError, ConfigError
from .hardware import SystemDescriptor
from .mapper import MappingSearcher, SearchBudget, find_optimal_mapping
from .netsim import CollectiveSpec, p2p_latency, ring_allreduce_latency
from .workload import (
    InferenceScenario,
    ModelConfig,
    OperatorGraph,
    build_layer_graph,
    kv_cache_bytes,
    layer_weight_bytes,
    op_min_bytes,
)

# Decode runs longer than this are interpolated from sampled context lengths
# unless mode="exact" forces full summation.
EXACT_DECODE_THRESHOLD = 64
DECODE_SAMPLE_POINTS = 9


@dataclass(frozen=True)
class MemoryBudget:
    parameter_bytes: int
    kv_cache_bytes: int
    peak_activation_bytes: int
    capacity_bytes: int

    @property
    def required_bytes(self) -> int:
        return self.parameter_bytes + self.kv_cache_bytes + self.peak_activation_bytes


@dataclass
class StageBreakdown:
    """Latency of one layer, per operator, in graph order."""

    layer_seconds: float
    per_operator: list  # (name, seconds) in graph order


@dataclass
class InferenceReport:
    prefill_seconds: float
    decode_seconds_per_token: list  # (context_len, seconds), ascending
    end_to_end_seconds: float
    tokens_per_second: float
    per_operator: dict  # operator name -> aggregate seconds over the whole run
    memory: MemoryBudget
    mode: str  # "exact" or "interpolated"


def _parallelism(system: SystemDescriptor, tensor_parallel: int, pipeline_parallel: int):
    if tensor_parallel * pipeline_parallel != system.devices:
        raise ConfigError(
            f"tensor_parallel ({tensor_parallel}) x pipeline_parallel "
            f"({pipeline_parallel}) must equal system devices ({system.devices})"
        )


def _layers_per_stage(model: ModelConfig, pipeline_parallel: int) -> int:
    if model.n_layers % pipeline_parallel != 0:
        raise ConfigError(
            f"pipeline_parallel ({pipeline_parallel}) must divide n_layers "
            f"({model.n_layers})"
        )
    return model.n_layers // pipeline_parallel


def memory_budget(system: SystemDescriptor, model: ModelConfig, batch: int,
                  tokens_in_cache: int, tensor_parallel: int,
                  pipeline_parallel: int, graph: OperatorGraph) -> MemoryBudget:
    """Per-device memory need: parameters + KV cache + peak activation."""
    layers = _layers_per_stage(model, pipeline_parallel)
    params = layer_weight_bytes(model, tensor_parallel) * layers
    kv = 0
    if tokens_in_cache > 0:
        kv = kv_cache_bytes(model, batch, tokens_in_cache, layers) // tensor_parallel
    peak_act = max((op_min_bytes(op.spec) for op in graph if not op.spec.is_collective),
                   default=0)
    return MemoryBudget(
        parameter_bytes=params,
        kv_cache_bytes=kv,
        peak_activation_bytes=peak_act,
        capacity_bytes=system.device.effective_memory_capacity(),
    )


def _check_memory(budget: MemoryBudget, detail: str) -> None:
    if budget.required_bytes > budget.capacity_bytes:
        raise CapacityError(budget.required_bytes, budget.capacity_bytes, detail)


def _layer_latency(system: SystemDescriptor, graph: OperatorGraph,
                   budget: SearchBudget, searcher: MappingSearcher | None) -> StageBreakdown:
    device = system.device
    per_op = []
    total = 0.0
    for op in graph:
        if op.spec.kind == "AllReduce":
            seconds = ring_allreduce_latency(
                CollectiveSpec(op.spec.payload_bytes, op.spec.participants),
                system.interconnect,
            )
        elif op.spec.kind == "P2P":
            seconds = p2p_latency(op.spec.payload_bytes, system.interconnect)
        else:
            _plan, report = find_optimal_mapping(device, op.spec, budget, searcher=searcher)
            seconds = report.total_seconds
        per_op.append((op.name, seconds))
        total += seconds
    return StageBreakdown(total, per_op)


def simulate_prefill(system: SystemDescriptor, model: ModelConfig,
                     scenario: InferenceScenario,
                     budget: SearchBudget = SearchBudget(),
                     searcher: MappingSearcher | None = None,
                     ) -> tuple[float, StageBreakdown, MemoryBudget]:
    """Prefill latency across all pipeline stages, plus the layer breakdown."""
    if scenario.stage != "prefill":
        raise ConfigError(f"simulate_prefill needs a prefill scenario, got {scenario.stage}")
    _parallelism(system, scenario.tensor_parallel, scenario.pipeline_parallel)
    graph = build_layer_graph(model, scenario)
    mem = memory_budget(system, model, scenario.batch, scenario.input_len,
                        scenario.tensor_parallel, scenario.pipeline_parallel, graph)
    _check_memory(mem, "prefill")
    layer = _layer_latency(system, graph, budget, searcher)
    total = model.n_layers * layer.layer_seconds
    if scenario.pipeline_parallel > 1:
        activation = scenario.batch * scenario.input_len * model.d_model * model.bytes_per_element
        total += (scenario.pipeline_parallel - 1) * p2p_latency(activation, system.interconnect)
    return total, layer, mem


def simulate_decode_token(system: SystemDescriptor, model: ModelConfig, batch: int,
                          context_len: int, tensor_parallel: int = 1,
                          pipeline_parallel: int = 1,
                          budget: SearchBudget = SearchBudget(),
                          searcher: MappingSearcher | None = None,
                          ) -> tuple[float, StageBreakdown]:
    """Latency of generating one token at the given KV-cache depth."""
    _parallelism(system, tensor_parallel, pipeline_parallel)
    scenario = InferenceScenario(stage="decode", batch=batch, context_len=context_len,
                                 tensor_parallel=tensor_parallel,
                                 pipeline_parallel=pipeline_parallel)
    graph = build_layer_graph(model, scenario)
    mem = memory_budget(system, model, batch, context_len + 1, tensor_parallel,
                        pipeline_parallel, graph)
    _check_memory(mem, f"decode at context {context_len}")
    layer = _layer_latency(system, graph, budget, searcher)
    total = model.n_layers * layer.layer_seconds
    if pipeline_parallel > 1:
        activation = batch * model.d_model * model.bytes_per_element
        total += (pipeline_parallel - 1) * p2p_latency(activation, system.interconnect)
    return total, layer


def _decode_contexts(input_len: int, output_len: int) -> list[int]:
    """Context length seen by token t: input_len + t - 1."""
    return [input_len + t - 1 for t in range(1, output_len + 1)]


def _sample_contexts(contexts: list[int]) -> list[int]:
    if len(contexts) <= DECODE_SAMPLE_POINTS:
        return list(contexts)
    lo, hi = contexts[0], contexts[-1]
    picks = {lo + (hi - lo) * i // (DECODE_SAMPLE_POINTS - 1)
             for i in range(DECODE_SAMPLE_POINTS)}
    return sorted(picks)


def _interpolate(samples: list[tuple[int, float]], x: int) -> float:
    if x <= samples[0][0]:
        return samples[0][1]
    if x >= samples[-1][0]:
        return samples[-1][1]
    for (x0, y0), (x1, y1) in zip(samples, samples[1:]):
        if x0 <= x <= x1:
            if x1 == x0:
                return y0
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    return samples[-1][1]


def simulate_end_to_end(system: SystemDescriptor, model: ModelConfig, batch: int,
                        input_len: int, output_len: int,
                        tensor_parallel: int = 1, pipeline_parallel: int = 1,
                        budget: SearchBudget = SearchBudget(),
                        searcher: MappingSearcher | None = None,
                        mode: str = "auto") -> InferenceReport:
    """Prefill plus auto-regressive generation of `output_len` tokens.

    mode: "exact" sums every token's decode latency; "interpolated" samples
    `DECODE_SAMPLE_POINTS` context lengths and fills the rest linearly;
    "auto" picks exact up to EXACT_DECODE_THRESHOLD tokens.
    """
    if mode not in ("auto", "exact", "interpolated"):
        raise ConfigError(f"unknown end-to-end mode {mode!r}")
    searcher = searcher or MappingSearcher()

    prefill_scenario = InferenceScenario(stage="prefill", batch=batch, input_len=input_len,
                                         tensor_parallel=tensor_parallel,
                                         pipeline_parallel=pipeline_parallel)
    # The worst-case memory point is the end of generation.
    last_tokens = input_len + output_len
    graph = build_layer_graph(model, prefill_scenario)
    mem = memory_budget(system, model, batch, last_tokens, tensor_parallel,
                        pipeline_parallel, graph)
    _check_memory(mem, f"end of generation ({last_tokens} tokens in cache)")

    prefill_seconds, prefill_layer, _ = simulate_prefill(
        system, model, prefill_scenario, budget, searcher)

    per_operator: dict[str, float] = {}
    for name, seconds in prefill_layer.per_operator:
        per_operator[name] = per_operator.get(name, 0.0) + seconds * model.n_layers

    contexts = _decode_contexts(input_len, output_len)
    if mode == "auto":
        mode = "exact" if output_len <= EXACT_DECODE_THRESHOLD else "interpolated"

    decode_points: list[tuple[int, float]] = []
    decode_total = 0.0
    if contexts:
        if mode == "exact":
            for ctx in contexts:
                seconds, layer = simulate_decode_token(
                    system, model, batch, ctx, tensor_parallel, pipeline_parallel,
                    budget, searcher)
                decode_points.append((ctx, seconds))
                decode_total += seconds
                for name, op_seconds in layer.per_operator:
                    key = f"decode:{name}"
                    per_operator[key] = per_operator.get(key, 0.0) + op_seconds * model.n_layers
        else:
            samples = []
            for ctx in _sample_contexts(contexts):
                seconds, _layer = simulate_decode_token(
                    system, model, batch, ctx, tensor_parallel, pipeline_parallel,
                    budget, searcher)
                samples.append((ctx, seconds))
            decode_points = samples
            decode_total = sum(_interpolate(samples, ctx) for ctx in contexts)

    end_to_end = prefill_seconds + decode_total
    tokens_per_second = (batch * output_len / end_to_end) if output_len and end_to_end > 0 else 0.0
    return InferenceReport(
        prefill_seconds=prefill_seconds,
        decode_seconds_per_token=decode_points,
        end_to_end_seconds=end_to_end,
        tokens_per_second=tokens_per_second,
        per_operator=per_operator,
        memory=mem,
        mode=mode,
    )
