import pytest

from tilesim.errors import InvariantError, SchemaError
from tilesim.hardware import preset
from tilesim.workload import (
    InferenceScenario,
    ModelConfig,
    OperatorSpec,
    build_layer_graph,
    kv_cache_bytes,
    layer_weight_bytes,
    op_flops,
    op_min_bytes,
    operator_roofline,
    parse_model_config,
    parse_scenario,
)

GPT3 = ModelConfig(d_model=12288, n_heads=96, n_layers=96)


def by_name(graph):
    return {op.name: op.spec for op in graph}


def test_gpt3_defaults():
    assert GPT3.d_ff == 4 * 12288
    assert GPT3.head_dim == 128
    assert GPT3.bytes_per_element == 2


def test_model_invariants():
    with pytest.raises(InvariantError):
        ModelConfig(d_model=100, n_heads=3, n_layers=1)  # heads must divide
    with pytest.raises(InvariantError):
        ModelConfig(d_model=0, n_heads=1, n_layers=1)


def test_scenario_invariants():
    with pytest.raises(InvariantError):
        InferenceScenario(stage="prefill", batch=1, input_len=0)
    with pytest.raises(InvariantError):
        InferenceScenario(stage="decode", batch=1, context_len=0)
    with pytest.raises(InvariantError):
        InferenceScenario(stage="training", batch=1, input_len=1)


def test_prefill_qkv_shape_gpt3_tp4():
    scenario = InferenceScenario(stage="prefill", batch=8, input_len=2048,
                                 tensor_parallel=4)
    ops = by_name(build_layer_graph(GPT3, scenario))
    qkv = ops["qkv_proj"]
    assert (qkv.m, qkv.k, qkv.n) == (16384, 12288, 9216)
    assert qkv.count == 1
    # attention runs per head per batch item, 24 heads on this device
    scores = ops["attn_scores"]
    assert (scores.m, scores.k, scores.n) == (2048, 128, 2048)
    assert scores.count == 8 * 24
    softmax = ops["attn_softmax"]
    assert (softmax.m, softmax.n) == (8 * 24 * 2048, 2048)
    ctx = ops["attn_context"]
    assert (ctx.m, ctx.k, ctx.n) == (2048, 2048, 128)
    proj = ops["out_proj"]
    assert (proj.m, proj.k, proj.n) == (16384, 3072, 12288)
    ar = ops["attn_allreduce"]
    assert ar.payload_bytes == 16384 * 12288 * 2
    assert ar.participants == 4
    up = ops["mlp_up"]
    assert (up.k, up.n) == (12288, 49152 // 4)
    gelu = ops["mlp_gelu"]
    assert gelu.elements == 16384 * 49152 // 4


def test_tp1_graph_has_no_allreduce():
    scenario = InferenceScenario(stage="prefill", batch=1, input_len=16)
    kinds = [op.spec.kind for op in build_layer_graph(GPT3, scenario)]
    assert "AllReduce" not in kinds
    assert kinds.count("Matmul") == 5
    assert kinds.count("LayerNorm") == 2


def test_tp4_graph_has_two_allreduces():
    scenario = InferenceScenario(stage="prefill", batch=1, input_len=16, tensor_parallel=4)
    kinds = [op.spec.kind for op in build_layer_graph(GPT3, scenario)]
    assert kinds.count("AllReduce") == 2


def test_decode_projections_have_m_batch():
    scenario = InferenceScenario(stage="decode", batch=1, context_len=512)
    ops = by_name(build_layer_graph(GPT3, scenario))
    for name in ("qkv_proj", "out_proj", "mlp_up", "mlp_down"):
        assert ops[name].m == 1
    # the new token attends to itself: context_len + 1 keys
    assert ops["attn_scores"].n == 513
    assert ops["attn_softmax"].n == 513
    assert ops["attn_context"].k == 513


def test_indivisible_tensor_parallel_errors():
    scenario = InferenceScenario(stage="prefill", batch=1, input_len=4, tensor_parallel=5)
    with pytest.raises(InvariantError):
        build_layer_graph(GPT3, scenario)


def test_kv_cache_bytes_examples():
    tiny = ModelConfig(d_model=12288, n_heads=96, n_layers=1)
    assert kv_cache_bytes(tiny, batch=1, tokens=1, layers=1) == 49152
    assert kv_cache_bytes(tiny, batch=2, tokens=1, layers=1) == 2 * 49152
    # GPT-3: 96 layers, batch 8, 2048 tokens
    assert kv_cache_bytes(GPT3, batch=8, tokens=2048, layers=96) == 77309411328
    with pytest.raises(InvariantError):
        kv_cache_bytes(GPT3, batch=1, tokens=0, layers=1)


def test_kv_cache_multiplicative():
    m = ModelConfig(d_model=64, n_heads=4, n_layers=2)
    base = kv_cache_bytes(m, 2, 8, 2)
    assert kv_cache_bytes(m, 4, 8, 2) == 2 * base
    assert kv_cache_bytes(m, 2, 24, 2) == 3 * base
    assert kv_cache_bytes(m, 2, 8, 4) == 2 * base


def test_layer_weight_bytes_matches_graph():
    # weight operands of one layer touched once: 12 d^2 / tp elements
    for tp in (1, 4):
        scenario = InferenceScenario(stage="prefill", batch=1, input_len=8,
                                     tensor_parallel=tp)
        graph = build_layer_graph(GPT3, scenario)
        weight_elems = sum(op.spec.k * op.spec.n for op in graph
                           if op.spec.kind == "Matmul" and op.name != "attn_scores"
                           and op.name != "attn_context")
        assert weight_elems * 2 == layer_weight_bytes(GPT3, tp)
        assert layer_weight_bytes(GPT3, tp) == 12 * 12288 * 12288 * 2 // tp


def test_prefill_quadratic_decode_linear():
    def graph_flops(scenario):
        return sum(op_flops(op.spec) for op in build_layer_graph(GPT3, scenario))

    def attn_flops(scenario):
        ops = by_name(build_layer_graph(GPT3, scenario))
        return op_flops(ops["attn_scores"]) + op_flops(ops["attn_context"])

    p1 = InferenceScenario(stage="prefill", batch=1, input_len=256)
    p2 = InferenceScenario(stage="prefill", batch=1, input_len=512)
    assert attn_flops(p2) == 4 * attn_flops(p1)  # score work quadratic in length

    d1 = InferenceScenario(stage="decode", batch=1, context_len=255)
    d2 = InferenceScenario(stage="decode", batch=1, context_len=511)
    assert attn_flops(d2) == 2 * attn_flops(d1)  # per-token work linear in context
    assert graph_flops(d2) < 2 * graph_flops(d1)  # projections don't grow


def test_roofline_trivial_matmul():
    dev = preset("a100").device
    spec = OperatorSpec.matmul(1, 1, 1)
    flops, min_bytes, latency = operator_roofline(spec, dev)
    assert flops == 2
    assert min_bytes == 8  # fp16: A, B read; C read and written
    assert latency == max(2 / (108 * 4 * 256 * 2 * 1.41e9), 8 / 2e12)


def test_roofline_closed_form_big_matmul():
    dev = preset("a100").device
    spec = OperatorSpec.matmul(8192, 12288, 12288)
    flops, min_bytes, _ = operator_roofline(spec, dev)
    assert flops == 2 * 8192 * 12288 * 12288
    assert min_bytes == (8192 * 12288 + 12288 * 12288 + 2 * 8192 * 12288) * 2


def test_roofline_allreduce():
    dev = preset("a100").device
    spec = OperatorSpec.all_reduce(10_000, 4)
    flops, min_bytes, _ = operator_roofline(spec, dev)
    assert flops == 0
    assert min_bytes == 10_000
    # single participant moves nothing
    assert op_min_bytes(OperatorSpec.all_reduce(10_000, 1)) == 0


def test_operator_spec_validation():
    with pytest.raises(InvariantError):
        OperatorSpec.matmul(0, 1, 1)
    with pytest.raises(InvariantError):
        OperatorSpec("Matmul", m=1, k=1, n=1, count=0)
    with pytest.raises(InvariantError):
        OperatorSpec("Conv2D")
    OperatorSpec.gelu(0)  # zero elements is legal


def test_parse_model_and_scenario_documents():
    text = """
model: {d_model: 1024, n_heads: 16, n_layers: 4}
scenario: {stage: decode, batch: 2, context_len: 100}
"""
    model = parse_model_config(text)
    assert model.d_ff == 4096
    scn = parse_scenario(text)
    assert scn["stage"] == "decode"
    assert scn["tensor_parallel"] == 1

    with pytest.raises(SchemaError) as err:
        parse_model_config("model: {n_heads: 16, n_layers: 4}")
    assert "d_model" in str(err.value)
    with pytest.raises(SchemaError):
        parse_scenario("scenario: {stage: warmup, batch: 1}")
    with pytest.raises(SchemaError):
        parse_scenario("model: {d_model: 8, n_heads: 1, n_layers: 1}")
