"""tilesim: analytical performance, area, and cost model for LLM inference
accelerators.

Given a parameterized hardware description and a Transformer inference
scenario, tilesim predicts operator and end-to-end latency by tile-by-tile
simulation with an automatic mapping search, and estimates die area and cost
for the described hardware.
"""

from .errors import (
    CapacityError,
    ConfigError,
    InfeasibleError,
    InvariantError,
    SchemaError,
    TilesimError,
)
from .hardware import (
    CoreDescriptor,
    DeviceDescriptor,
    LinkParameters,
    SystemDescriptor,
    parse_system_descriptor,
    peak_compute_throughput,
    preset,
    render_system_descriptor,
)
from .inference import (
    InferenceReport,
    simulate_decode_token,
    simulate_end_to_end,
    simulate_prefill,
)
from .mapper import MappingSearcher, SearchBudget, enumerate_candidate_plans, find_optimal_mapping
from .netsim import CollectiveSpec, link_transfer_latency, p2p_latency, ring_allreduce_latency
from .opsim import (
    BufferFit,
    LatencyReport,
    MappingPlan,
    buffer_fit,
    simulate_matmul,
    simulate_operator,
    simulate_vector_op,
)
from .systolic import CycleMemoTable, SystolicQuery, systolic_tile_cycles
from .workload import (
    InferenceScenario,
    ModelConfig,
    OperatorGraph,
    OperatorSpec,
    build_layer_graph,
    kv_cache_bytes,
    operator_roofline,
)

__version__ = "0.1.0"
