"""Decoder-only Transformer workloads as operator graphs.

Builds the ordered operator list for one Transformer layer on one
tensor-parallel device, and sizes the KV cache and activations for the
prefill and decode stages. Graphs carry shapes and precision only; no
numerics are ever evaluated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InvariantError
from .hardware import DeviceDescriptor, peak_compute_throughput

STAGES = ("prefill", "decode")
OPERATOR_KINDS = ("Matmul", "Softmax", "LayerNorm", "GELU", "AllReduce", "P2P")

# Elementary-operation counts per element, used for flop accounting and as
# the vector-unit work model. Softmax is the single-read online form:
# running max (compare), subtract, exponentiate, running sum (add), and one
# divide per element. LayerNorm is two reduction passes (mean; variance via
# subtract/multiply/add) plus normalize-scale-shift. GELU is the tanh
# approximation: one add, four multiplies, one tanh.
SOFTMAX_CHEAP_OPS_PER_ELEMENT = 3  # compare, subtract, add
SOFTMAX_EXP_PER_ELEMENT = 1
SOFTMAX_DIV_PER_ELEMENT = 1
LAYERNORM_MEAN_OPS_PER_ELEMENT = 1
LAYERNORM_VAR_OPS_PER_ELEMENT = 3
LAYERNORM_NORM_OPS_PER_ELEMENT = 4
GELU_CHEAP_OPS_PER_ELEMENT = 5  # add + 4 mul
GELU_TANH_PER_ELEMENT = 1

SOFTMAX_FLOPS_PER_ELEMENT = 5
LAYERNORM_FLOPS_PER_ELEMENT = 8
GELU_FLOPS_PER_ELEMENT = 6


def _check(cond: bool, invariant: str, message: str) -> None:
    if not cond:
        raise InvariantError(invariant, message)


@dataclass(frozen=True)
class ModelConfig:
    """Decoder-only Transformer shape. `d_ff` defaults to 4 x d_model."""

    d_model: int
    n_heads: int
    n_layers: int
    d_ff: int = 0
    bytes_per_element: int = 2  # fp16/bf16 everywhere unless overridden

    def __post_init__(self):
        if self.d_ff == 0:
            object.__setattr__(self, "d_ff", 4 * self.d_model)
        _check(self.d_model >= 1, "d_model >= 1", f"got {self.d_model}")
        _check(self.n_heads >= 1, "n_heads >= 1", f"got {self.n_heads}")
        _check(self.n_layers >= 1, "n_layers >= 1", f"got {self.n_layers}")
        _check(self.d_ff >= 1, "d_ff >= 1", f"got {self.d_ff}")
        _check(self.bytes_per_element >= 1, "bytes_per_element >= 1", f"got {self.bytes_per_element}")
        _check(
            self.d_model % self.n_heads == 0,
            "d_model divisible by n_heads",
            f"d_model={self.d_model}, n_heads={self.n_heads}",
        )

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


@dataclass(frozen=True)
class InferenceScenario:
    """One inference stage on a parallel system.

    For decode, `context_len` counts tokens already resident in the KV cache;
    the simulated step generates one further token that attends to
    context_len + 1 keys (itself included).
    """

    stage: str
    batch: int
    input_len: int = 0
    context_len: int = 0
    tensor_parallel: int = 1
    pipeline_parallel: int = 1

    def __post_init__(self):
        if self.stage not in STAGES:
            raise InvariantError("stage in {prefill, decode}", f"got {self.stage!r}")
        _check(self.batch >= 1, "batch >= 1", f"got {self.batch}")
        if self.stage == "prefill":
            _check(self.input_len >= 1, "prefill requires input_len >= 1", f"got {self.input_len}")
        else:
            _check(
                self.context_len >= 1,
                "decode requires context_len >= 1",
                f"got {self.context_len}",
            )
        _check(self.tensor_parallel >= 1, "tensor_parallel >= 1", f"got {self.tensor_parallel}")
        _check(
            self.pipeline_parallel >= 1, "pipeline_parallel >= 1", f"got {self.pipeline_parallel}"
        )


@dataclass(frozen=True)
class OperatorSpec:
    """A typed dense operator with shapes and precision.

    Shape fields are kind-specific:
      Matmul          m, k, n and `count` independent matmuls of that shape
      Softmax/LayerNorm  m rows of n elements (normalized along n)
      GELU            `elements`
      AllReduce/P2P   `payload_bytes` per participant, `participants`
    """

    kind: str
    m: int = 0
    k: int = 0
    n: int = 0
    count: int = 1
    elements: int = 0
    payload_bytes: int = 0
    participants: int = 1
    bytes_per_element: int = 2

    def __post_init__(self):
        if self.kind not in OPERATOR_KINDS:
            raise InvariantError("kind is a known operator", f"got {self.kind!r}")
        _check(self.bytes_per_element >= 1, "bytes_per_element >= 1", f"got {self.bytes_per_element}")
        if self.kind == "Matmul":
            _check(min(self.m, self.k, self.n) >= 1, "Matmul dims >= 1",
                   f"got {self.m}x{self.k}x{self.n}")
            _check(self.count >= 1, "Matmul batch count >= 1", f"got {self.count}")
        elif self.kind in ("Softmax", "LayerNorm"):
            _check(min(self.m, self.n) >= 1, f"{self.kind} dims >= 1", f"got {self.m}x{self.n}")
        elif self.kind == "GELU":
            _check(self.elements >= 0, "GELU elements >= 0", f"got {self.elements}")
        else:  # AllReduce, P2P
            _check(self.participants >= 1, "participants >= 1", f"got {self.participants}")
            _check(self.payload_bytes >= 0, "payload_bytes >= 0", f"got {self.payload_bytes}")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def matmul(m: int, k: int, n: int, count: int = 1, bytes_per_element: int = 2) -> "OperatorSpec":
        return OperatorSpec("Matmul", m=m, k=k, n=n, count=count,
                            bytes_per_element=bytes_per_element)

    @staticmethod
    def softmax(m: int, n: int, bytes_per_element: int = 2) -> "OperatorSpec":
        return OperatorSpec("Softmax", m=m, n=n, bytes_per_element=bytes_per_element)

    @staticmethod
    def layer_norm(m: int, n: int, bytes_per_element: int = 2) -> "OperatorSpec":
        return OperatorSpec("LayerNorm", m=m, n=n, bytes_per_element=bytes_per_element)

    @staticmethod
    def gelu(elements: int, bytes_per_element: int = 2) -> "OperatorSpec":
        return OperatorSpec("GELU", elements=elements, bytes_per_element=bytes_per_element)

    @staticmethod
    def all_reduce(payload_bytes: int, participants: int) -> "OperatorSpec":
        return OperatorSpec("AllReduce", payload_bytes=payload_bytes, participants=participants)

    @staticmethod
    def p2p(payload_bytes: int) -> "OperatorSpec":
        return OperatorSpec("P2P", payload_bytes=payload_bytes, participants=2)

    @property
    def is_collective(self) -> bool:
        return self.kind in ("AllReduce", "P2P")


@dataclass(frozen=True)
class GraphOp:
    name: str
    spec: OperatorSpec


@dataclass(frozen=True)
class OperatorGraph:
    """Ordered operators of one layer on one tensor-parallel device."""

    ops: tuple[GraphOp, ...]

    def __iter__(self):
        return iter(self.ops)

    def __len__(self):
        return len(self.ops)

    def specs(self) -> tuple[OperatorSpec, ...]:
        return tuple(op.spec for op in self.ops)


def build_layer_graph(model: ModelConfig, scenario: InferenceScenario) -> OperatorGraph:
    """Operator list for one Transformer layer on one tensor-parallel device.

    Attention-score and context matmuls are emitted as batched matmuls with
    count = batch x heads-per-device so the simulator can spread heads across
    cores. Residual additions are folded into the LayerNorm element counts.
    With tensor_parallel == 1 the (zero-byte) all-reduces are dropped.
    """
    tp = scenario.tensor_parallel
    if model.n_heads % tp != 0:
        raise InvariantError(
            "tensor_parallel divides n_heads", f"n_heads={model.n_heads}, tp={tp}"
        )
    if model.d_ff % tp != 0:
        raise InvariantError("tensor_parallel divides d_ff", f"d_ff={model.d_ff}, tp={tp}")

    bpe = model.bytes_per_element
    heads_dev = model.n_heads // tp
    hd = model.head_dim
    if scenario.stage == "prefill":
        seq_q = scenario.input_len
        seq_kv = scenario.input_len
    else:
        seq_q = 1
        seq_kv = scenario.context_len + 1  # the new token attends to itself
    m_tokens = scenario.batch * seq_q

    ops: list[GraphOp] = [
        GraphOp("qkv_proj", OperatorSpec.matmul(m_tokens, model.d_model, 3 * model.d_model // tp,
                                                bytes_per_element=bpe)),
        GraphOp("attn_scores", OperatorSpec.matmul(seq_q, hd, seq_kv,
                                                   count=scenario.batch * heads_dev,
                                                   bytes_per_element=bpe)),
        GraphOp("attn_softmax", OperatorSpec.softmax(scenario.batch * heads_dev * seq_q, seq_kv,
                                                     bytes_per_element=bpe)),
        GraphOp("attn_context", OperatorSpec.matmul(seq_q, seq_kv, hd,
                                                    count=scenario.batch * heads_dev,
                                                    bytes_per_element=bpe)),
        GraphOp("out_proj", OperatorSpec.matmul(m_tokens, model.d_model // tp, model.d_model,
                                                bytes_per_element=bpe)),
        GraphOp("attn_allreduce",
                OperatorSpec.all_reduce(m_tokens * model.d_model * bpe, tp)),
        GraphOp("attn_norm", OperatorSpec.layer_norm(m_tokens, model.d_model,
                                                     bytes_per_element=bpe)),
        GraphOp("mlp_up", OperatorSpec.matmul(m_tokens, model.d_model, model.d_ff // tp,
                                              bytes_per_element=bpe)),
        GraphOp("mlp_gelu", OperatorSpec.gelu(m_tokens * model.d_ff // tp,
                                              bytes_per_element=bpe)),
        GraphOp("mlp_down", OperatorSpec.matmul(m_tokens, model.d_ff // tp, model.d_model,
                                                bytes_per_element=bpe)),
        GraphOp("mlp_allreduce",
                OperatorSpec.all_reduce(m_tokens * model.d_model * bpe, tp)),
        GraphOp("mlp_norm", OperatorSpec.layer_norm(m_tokens, model.d_model,
                                                    bytes_per_element=bpe)),
    ]
    if tp == 1:
        ops = [op for op in ops if op.spec.kind != "AllReduce"]
    return OperatorGraph(tuple(ops))


def kv_cache_bytes(model: ModelConfig, batch: int, tokens: int, layers: int) -> int:
    """Bytes of stored Key and Value tensors: 2 x d_model x bpe x batch x tokens x layers."""
    _check(batch >= 1, "batch >= 1", f"got {batch}")
    _check(tokens >= 1, "tokens >= 1", f"got {tokens}")
    _check(layers >= 1, "layers >= 1", f"got {layers}")
    return 2 * model.d_model * model.bytes_per_element * batch * tokens * layers


def layer_weight_bytes(model: ModelConfig, tensor_parallel: int = 1) -> int:
    """Matmul weight bytes of one layer on one device: 12 x d_model^2 / tp x bpe.

    QKV contributes 3 d^2, the output projection d^2, and the MLP pair
    2 x d x d_ff (8 d^2 at the default d_ff = 4d).
    """
    d = model.d_model
    per_device = (3 * d * d + d * d + 2 * d * model.d_ff) // tensor_parallel
    return per_device * model.bytes_per_element


# ---------------------------------------------------------------------------
# Analytic operation counts (shared by the roofline oracle and the simulator)
# ---------------------------------------------------------------------------


# ---------------------------------------------------------------------------
# Model / scenario documents (same key-value format as hardware descriptions)
# ---------------------------------------------------------------------------

_MODEL_FIELDS = {
    "d_model": (True, int, None),
    "n_heads": (True, int, None),
    "n_layers": (True, int, None),
    "d_ff": (False, int, 0),
    "bytes_per_element": (False, int, 2),
}

_SCENARIO_FIELDS = {
    "stage": (True, str, None),
    "batch": (True, int, None),
    "input_len": (False, int, 0),
    "context_len": (False, int, 0),
    "output_len": (False, int, 0),
    "tensor_parallel": (False, int, 1),
    "pipeline_parallel": (False, int, 1),
}

SCENARIO_STAGES = ("prefill", "decode", "end-to-end")


def _load_fields(doc: dict, section: str, schema: dict) -> dict:
    from .errors import SchemaError

    raw = doc.get(section)
    if raw is None:
        raise SchemaError(section, "required section is missing")
    if not isinstance(raw, dict):
        raise SchemaError(section, f"expected a mapping, got {type(raw).__name__}")
    out = {}
    for key in raw:
        if key not in schema:
            raise SchemaError(f"{section}.{key}", "unknown field")
    for key, (required, kind, default) in schema.items():
        if key in raw:
            value = raw[key]
            if kind is int:
                if isinstance(value, bool) or not isinstance(value, (int, float)) \
                        or (isinstance(value, float) and value != int(value)):
                    raise SchemaError(f"{section}.{key}", f"expected an integer, got {value!r}")
                value = int(value)
            elif kind is str and not isinstance(value, str):
                raise SchemaError(f"{section}.{key}", f"expected a string, got {value!r}")
            out[key] = value
        elif required:
            raise SchemaError(f"{section}.{key}", "required field is missing")
        else:
            out[key] = default
    return out


def _load_doc(text: str) -> dict:
    import yaml

    from .errors import SchemaError

    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SchemaError("<document>", f"not valid YAML: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise SchemaError("<document>", "top level must be a mapping of sections")
    return doc


def parse_model_config(text: str) -> ModelConfig:
    """Read the `model` section of a configuration document."""
    fields = _load_fields(_load_doc(text), "model", _MODEL_FIELDS)
    return ModelConfig(**fields)


def parse_scenario(text: str) -> dict:
    """Read the `scenario` section; stage may also be "end-to-end"."""
    from .errors import SchemaError

    fields = _load_fields(_load_doc(text), "scenario", _SCENARIO_FIELDS)
    if fields["stage"] not in SCENARIO_STAGES:
        raise SchemaError("scenario.stage", f"must be one of {SCENARIO_STAGES}, "
                                            f"got {fields['stage']!r}")
    return fields


def op_flops(spec: OperatorSpec) -> int:
    """Useful arithmetic operations of one operator execution."""
    if spec.kind == "Matmul":
        return 2 * spec.m * spec.k * spec.n * spec.count
    if spec.kind == "Softmax":
        return SOFTMAX_FLOPS_PER_ELEMENT * spec.m * spec.n
    if spec.kind == "LayerNorm":
        return LAYERNORM_FLOPS_PER_ELEMENT * spec.m * spec.n
    if spec.kind == "GELU":
        return GELU_FLOPS_PER_ELEMENT * spec.elements
    return 0  # collectives move bytes, no arithmetic counted


def op_min_bytes(spec: OperatorSpec) -> int:
    """Minimum main-memory traffic: every operand touched exactly once."""
    bpe = spec.bytes_per_element
    if spec.kind == "Matmul":
        # A and B read once, C read and written once (C = AB + C).
        return (spec.m * spec.k + spec.k * spec.n + 2 * spec.m * spec.n) * bpe * spec.count
    if spec.kind in ("Softmax", "LayerNorm"):
        return 2 * spec.m * spec.n * bpe
    if spec.kind == "GELU":
        return 2 * spec.elements * bpe
    # Collectives: payload per participant; a single participant moves nothing.
    return spec.payload_bytes if spec.participants >= 2 else 0


def operator_roofline(spec: OperatorSpec, device: DeviceDescriptor) -> tuple[int, int, float]:
    """(flops, min_bytes, latency lower bound) for one operator on one device.

    The latency bound is max(flops / peak compute, min_bytes / memory
    bandwidth); no schedule can beat it. For collectives the byte term uses
    device memory bandwidth, which under-estimates the link-bound time and so
    stays a valid lower bound for the shipped presets (link <= memory
    bandwidth on all of them).
    """
    flops = op_flops(spec)
    min_bytes = op_min_bytes(spec)
    peak = peak_compute_throughput(device)
    bw = device.effective_memory_bandwidth()
    return flops, min_bytes, max(flops / peak, min_bytes / bw)
