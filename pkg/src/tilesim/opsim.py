"""Tile-by-tile timing simulation of one operator on one device.

A matmul C = AB + C is simulated the way a tuned kernel runs it: A, B, and C
are cut into tiles that fit the global buffer; each tile is cut into core
subtiles that fit a local buffer; subtiles are cut into lane blocks fed to
the systolic arrays. Timing walks the tile loops:

  main memory <-> global buffer   tiles stream at memory bandwidth; a C tile
                                  is read once and written once per output
                                  tile (the accumulating partial stays in the
                                  global buffer across the K loop).
  global buffer <-> cores         waves of subtiles; under schedule scheme 1
                                  cores own distinct output subtiles and
                                  reads shared within a wave are merged;
                                  under scheme 2 cores split the K range of
                                  one output subtile and reduce partials
                                  through the global buffer. A core keeps its
                                  output subtile across its K steps
                                  (read-after-write handled, no partial
                                  round-trips).
  local buffer -> lanes           lane blocks run on the systolic arrays;
                                  cycle counts come from the systolic model.

Double buffering at a level overlaps that level's transfers with the work
below it (per-step time = max(io, compute) with one fill and one drain step)
and halves the usable capacity of that level. Write-backs are serialized
into the io term of the following step. Edge tiles are timed at full tile
size (padding); `bytes_moved` reports the unpadded traffic.

Vector operators (Softmax, LayerNorm, GELU) use the same machinery without
the systolic level. Softmax is the single-read online form. LayerNorm needs
a row's statistics before it can normalize that row, so rows that do not
stay resident in the local buffer force a second read pass over the data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError, InfeasibleError, InvariantError
from .hardware import CoreDescriptor, DeviceDescriptor, peak_compute_throughput
from .systolic import CycleMemoTable, SystolicQuery, systolic_tile_cycles
from .workload import (
    GELU_CHEAP_OPS_PER_ELEMENT,
    LAYERNORM_MEAN_OPS_PER_ELEMENT,
    LAYERNORM_NORM_OPS_PER_ELEMENT,
    LAYERNORM_VAR_OPS_PER_ELEMENT,
    SOFTMAX_CHEAP_OPS_PER_ELEMENT,
    OperatorSpec,
    op_flops,
)

IO_LEVELS = ("main_global", "global_local", "local_lane")

SCHEME_COLUMN_PARTITION = 1
SCHEME_COOPERATIVE_REDUCTION = 2


@dataclass(frozen=True)
class MappingPlan:
    """Tiling at each memory level plus scheduling knobs.

    (tile_*) bound the global-buffer tiles, (subtile_*) the per-core local
    tiles, (lane_*) the systolic blocks. Subtiles must divide their tile;
    lane blocks must not exceed their subtile. Vector operators use the m/n
    dims only and keep the k dims at 1.
    """

    tile_m: int
    tile_k: int
    tile_n: int
    subtile_m: int
    subtile_k: int
    subtile_n: int
    lane_m: int = 1
    lane_k: int = 1
    lane_n: int = 1
    scheme: int = SCHEME_COLUMN_PARTITION
    double_buffer_global: bool = False
    double_buffer_local: bool = False

    def __post_init__(self):
        for name in ("tile_m", "tile_k", "tile_n", "subtile_m", "subtile_k",
                     "subtile_n", "lane_m", "lane_k", "lane_n"):
            if getattr(self, name) < 1:
                raise InvariantError(f"{name} >= 1", f"got {getattr(self, name)}")
        for t, s in (("tile_m", "subtile_m"), ("tile_k", "subtile_k"),
                     ("tile_n", "subtile_n")):
            if getattr(self, t) % getattr(self, s) != 0:
                raise InvariantError(
                    "subtile divides tile",
                    f"{s}={getattr(self, s)} does not divide {t}={getattr(self, t)}",
                )
        for s, l in (("subtile_m", "lane_m"), ("subtile_k", "lane_k"),
                     ("subtile_n", "lane_n")):
            if getattr(self, l) > getattr(self, s):
                raise InvariantError(
                    "lane tile within subtile",
                    f"{l}={getattr(self, l)} exceeds {s}={getattr(self, s)}",
                )
        if self.scheme not in (SCHEME_COLUMN_PARTITION, SCHEME_COOPERATIVE_REDUCTION):
            raise InvariantError("scheme in {1, 2}", f"got {self.scheme}")


@dataclass(frozen=True)
class LevelFit:
    required_bytes: int
    capacity_bytes: int

    @property
    def ok(self) -> bool:
        return self.required_bytes <= self.capacity_bytes

    @property
    def overflow_bytes(self) -> int:
        return max(0, self.required_bytes - self.capacity_bytes)


@dataclass(frozen=True)
class BufferFit:
    levels: dict  # level name -> LevelFit

    @property
    def ok(self) -> bool:
        return all(fit.ok for fit in self.levels.values())

    def failures(self) -> list[str]:
        return [
            f"{name}: need {fit.required_bytes} bytes, have {fit.capacity_bytes} "
            f"(overflow {fit.overflow_bytes})"
            for name, fit in self.levels.items()
            if not fit.ok
        ]


@dataclass
class LatencyReport:
    """Hierarchical time breakdown of one simulated operator.

    `compute_seconds` is systolic plus vector busy time summed along the
    serialized schedule; `io_seconds` sums each level's transfer time before
    any overlap. Under double buffering the total can be less than their sum
    but never less than any single component.
    """

    total_seconds: float
    compute_seconds: float
    launch_overhead_seconds: float
    io_seconds: dict
    bytes_moved: dict
    flops_executed: int
    utilization: float

    @staticmethod
    def empty(launch: float = 0.0) -> "LatencyReport":
        return LatencyReport(
            total_seconds=launch,
            compute_seconds=0.0,
            launch_overhead_seconds=launch,
            io_seconds={level: 0.0 for level in IO_LEVELS},
            bytes_moved={level: 0 for level in IO_LEVELS},
            flops_executed=0,
            utilization=0.0,
        )


def _compose_steps(runs: list[tuple[float, float, int]], pipelined: bool) -> float:
    """Total time of sequential (io, compute) steps given as ordered runs.

    Each run is (io, compute, count). Non-pipelined steps cost io + compute.
    Pipelined steps overlap a step's io with the previous step's compute:
    io_1 + sum over later steps of max(io_i, compute_{i-1}) + compute_T.
    """
    runs = [(io, comp, count) for io, comp, count in runs if count > 0]
    if not runs:
        return 0.0
    if not pipelined:
        return sum((io + comp) * count for io, comp, count in runs)
    io0, comp0, n0 = runs[0]
    total = io0 + (n0 - 1) * max(io0, comp0)
    prev_comp = comp0
    for io, comp, count in runs[1:]:
        total += max(io, prev_comp) + (count - 1) * max(io, comp)
        prev_comp = comp
    return total + prev_comp


def _gb_cycles(device: DeviceDescriptor, nbytes: float) -> float:
    if nbytes == 0:
        return 0.0
    if device.global_buffer_bandwidth <= 0:
        raise InfeasibleError("zero global-buffer bandwidth with nonzero traffic")
    return nbytes / device.global_buffer_bandwidth


def _vector_shape(spec: OperatorSpec) -> tuple[int, int]:
    """(rows, row length) view of a vector operator; GELU is one long row."""
    if spec.kind == "GELU":
        return 1, spec.elements
    return spec.m, spec.n


def buffer_fit(device: DeviceDescriptor, spec: OperatorSpec, plan: MappingPlan) -> BufferFit:
    """Per-level byte requirement of a plan versus the device capacities.

    Double buffering doubles a level's footprint. Devices without a separate
    main memory must hold the whole operand set in the global buffer.
    """
    core = device.core
    bpe = spec.bytes_per_element
    gb_mult = 2 if plan.double_buffer_global else 1
    lb_mult = 2 if plan.double_buffer_local else 1

    if spec.kind == "Matmul":
        tile = (plan.tile_m * plan.tile_k + plan.tile_k * plan.tile_n
                + plan.tile_m * plan.tile_n)
        sub = (plan.subtile_m * plan.subtile_k + plan.subtile_k * plan.subtile_n
               + plan.subtile_m * plan.subtile_n)
        lane = (plan.lane_m * plan.lane_k + plan.lane_k * plan.lane_n
                + plan.lane_m * plan.lane_n)
        if device.has_main_memory:
            global_req = tile * bpe * gb_mult
        else:
            operands = (spec.m * spec.k + spec.k * spec.n + spec.m * spec.n) * spec.count
            global_req = operands * bpe
        local_req = sub * bpe * lb_mult
        lane_req = lane * bpe
    elif spec.kind in ("Softmax", "LayerNorm", "GELU"):
        rows, cols = _vector_shape(spec)
        tile = 2 * plan.tile_m * plan.tile_n  # input tile + output tile
        sub = 2 * plan.subtile_m * plan.subtile_n
        if device.has_main_memory:
            global_req = tile * bpe * gb_mult
        else:
            global_req = 2 * rows * cols * bpe
        local_req = sub * bpe * lb_mult
        lane_req = 2 * core.vector_width * bpe  # streaming registers only
    else:  # collectives occupy no on-device buffers in this model
        global_req = local_req = lane_req = 0

    return BufferFit(
        levels={
            "global": LevelFit(global_req, device.global_buffer_capacity),
            "local": LevelFit(local_req, core.local_buffer_capacity),
            "lane": LevelFit(lane_req, core.register_file_bytes_per_lane),
        }
    )


# ---------------------------------------------------------------------------
# Matmul
# ---------------------------------------------------------------------------


def _distinct_blocks_in_range(start: int, stop: int, m_count: int) -> tuple[int, int]:
    """Distinct (row, column) coordinates among linear indices [start, stop).

    Subtiles are linearized column-major (row index fastest), so a wave of
    consecutive indices spans few columns and B reads merge well.
    """
    if stop <= start:
        return 0, 0
    n_lo, n_hi = start // m_count, (stop - 1) // m_count
    cols = n_hi - n_lo + 1
    if cols == 1:
        rows = stop - start
    elif cols == 2:
        head = m_count - start % m_count
        tail = stop - n_hi * m_count
        rows = min(m_count, head + tail)
    else:
        rows = m_count
    return rows, cols


def _lane_block_cycles(core: CoreDescriptor, plan: MappingPlan,
                       memo: CycleMemoTable | None) -> int:
    """One lane block: serialized K chunks on the systolic array."""
    q = SystolicQuery(core.systolic_rows, core.systolic_cols,
                      plan.lane_m, plan.lane_k, plan.lane_n)
    per_chunk = memo.lookup_or_compute(q) if memo is not None else systolic_tile_cycles(q)
    return math.ceil(plan.subtile_k / plan.lane_k) * per_chunk


def _core_subtile_cycles(core: CoreDescriptor, plan: MappingPlan,
                         memo: CycleMemoTable | None) -> int:
    """One core computing one Sm x Sk x Sn subtile with its lanes.

    Lane blocks are dealt round-robin to the lanes; the block results are
    folded into the held output subtile by the vector units.
    """
    blocks = (math.ceil(plan.subtile_m / plan.lane_m)
              * math.ceil(plan.subtile_n / plan.lane_n))
    lane_cycles = math.ceil(blocks / core.lane_count) * _lane_block_cycles(core, plan, memo)
    merge = math.ceil(plan.subtile_m * plan.subtile_n
                      / (core.vector_width * core.lane_count))
    return lane_cycles + merge


@dataclass
class _CoreStep:
    """Core-level cost of one global step (cycles; bytes through the global buffer)."""

    cycles: float
    io_cycles: float
    compute_cycles: float
    io_bytes: int


def _matmul_core_step(device: DeviceDescriptor, spec: OperatorSpec, plan: MappingPlan,
                      group_items: int, memo: CycleMemoTable | None,
                      merge_reads: bool) -> _CoreStep:
    core = device.core
    bpe = spec.bytes_per_element
    m2 = plan.tile_m // plan.subtile_m
    n2 = plan.tile_n // plan.subtile_n
    k2 = plan.tile_k // plan.subtile_k
    per_item = m2 * n2
    pool = group_items * per_item

    a_block = plan.subtile_m * plan.subtile_k * bpe
    b_block = plan.subtile_k * plan.subtile_n * bpe
    c_block = plan.subtile_m * plan.subtile_n * bpe
    subtile_compute = float(_core_subtile_cycles(core, plan, memo))

    total = 0.0
    io_acc = 0.0
    comp_acc = 0.0
    bytes_acc = 0

    if plan.scheme == SCHEME_COLUMN_PARTITION:
        # Waves of distinct output subtiles; each core runs the whole K loop
        # on its own subtile, reading its A/B blocks per K step. Reads shared
        # within the wave are merged unless the test hook disables it.
        for start in range(0, pool, device.core_count):
            stop = min(pool, start + device.core_count)
            wave = stop - start
            if merge_reads:
                a_blocks = b_blocks = 0
                for item in range(start // per_item, (stop - 1) // per_item + 1):
                    seg_lo = max(start, item * per_item) - item * per_item
                    seg_hi = min(stop, (item + 1) * per_item) - item * per_item
                    rows, cols = _distinct_blocks_in_range(seg_lo, seg_hi, m2)
                    a_blocks += rows
                    b_blocks += cols
            else:
                a_blocks = b_blocks = wave
            read_k = a_blocks * a_block + b_blocks * b_block
            io_k0 = _gb_cycles(device, read_k + wave * c_block)
            io_mid = _gb_cycles(device, read_k)
            write = _gb_cycles(device, wave * c_block)
            total += _compose_steps(
                [(io_k0, subtile_compute, 1), (io_mid, subtile_compute, k2 - 1)],
                plan.double_buffer_local,
            ) + write
            io_acc += io_k0 + io_mid * (k2 - 1) + write
            comp_acc += subtile_compute * k2
            bytes_acc += read_k * k2 + 2 * wave * c_block
    else:
        # Cooperative reduction: a group of cores splits the K range of one
        # output subtile. Each core reads its own A/B blocks (nothing to
        # merge), writes its partial to the global buffer, and the vector
        # units fold the partials plus the original C into the result.
        group = min(device.core_count, k2)
        concurrent = max(1, device.core_count // group)
        waves = math.ceil(pool / concurrent)
        steps = math.ceil(k2 / group)
        active = concurrent * group
        read_step = active * (a_block + b_block)
        io_k0 = _gb_cycles(device, read_step + concurrent * c_block)
        io_mid = _gb_cycles(device, read_step)
        wave_cycles = _compose_steps(
            [(io_k0, subtile_compute, 1), (io_mid, subtile_compute, steps - 1)],
            plan.double_buffer_local,
        )
        reduction_bytes = concurrent * (2 * group + 1) * c_block  # partials out+back, result
        reduction_vector = math.ceil(
            group * plan.subtile_m * plan.subtile_n / (core.vector_width * core.lane_count)
        )
        wave_cycles += _gb_cycles(device, reduction_bytes) + reduction_vector
        total = waves * wave_cycles
        io_acc = waves * (io_k0 + io_mid * (steps - 1) + _gb_cycles(device, reduction_bytes))
        comp_acc = waves * (subtile_compute * steps + reduction_vector)
        bytes_acc = waves * (read_step * steps + concurrent * c_block + reduction_bytes)

    return _CoreStep(total, io_acc, comp_acc, bytes_acc)


def simulate_matmul(device: DeviceDescriptor, spec: OperatorSpec, plan: MappingPlan,
                    memo: CycleMemoTable | None = None,
                    merge_reads: bool = True) -> LatencyReport:
    """Simulate one (batched) matmul under a mapping plan.

    Batched items whose tiles fit the global buffer together are
    co-scheduled in one step so small matmuls can still fill the cores.
    `merge_reads=False` disables wave-level read merging (test hook).
    """
    if spec.kind != "Matmul":
        raise ConfigError(f"simulate_matmul got operator kind {spec.kind!r}")
    fit = buffer_fit(device, spec, plan)
    if not fit.ok:
        raise InfeasibleError("plan does not fit buffers: " + "; ".join(fit.failures()))

    bpe = spec.bytes_per_element
    freq = device.frequency
    mt = math.ceil(spec.m / plan.tile_m)
    kt = math.ceil(spec.k / plan.tile_k)
    nt = math.ceil(spec.n / plan.tile_n)

    gb_mult = 2 if plan.double_buffer_global else 1
    item_tile_bytes = (plan.tile_m * plan.tile_k + plan.tile_k * plan.tile_n
                       + plan.tile_m * plan.tile_n) * bpe * gb_mult
    if device.has_main_memory:
        if device.memory_bandwidth <= 0:
            raise InfeasibleError("zero memory bandwidth with nonzero traffic")
        group_items = min(spec.count, max(1, device.global_buffer_capacity // item_tile_bytes))
    else:
        group_items = spec.count
    groups = math.ceil(spec.count / group_items)

    step = _matmul_core_step(device, spec, plan, group_items, memo, merge_reads)
    comp_s = step.cycles / freq

    a_tile = plan.tile_m * plan.tile_k * bpe * group_items
    b_tile = plan.tile_k * plan.tile_n * bpe * group_items
    c_tile = plan.tile_m * plan.tile_n * bpe * group_items
    if device.has_main_memory:
        mem_bw = device.memory_bandwidth
        io_first = (a_tile + b_tile + c_tile) / mem_bw
        io_mid = (a_tile + b_tile) / mem_bw
        io_boundary = (a_tile + b_tile + 2 * c_tile) / mem_bw  # next C in, last C out
        write_tail = c_tile / mem_bw
    else:
        io_first = io_mid = io_boundary = write_tail = 0.0

    blocks = mt * nt
    group_seconds = _compose_steps(
        [(io_first, comp_s, 1), (io_boundary, comp_s, blocks - 1),
         (io_mid, comp_s, blocks * (kt - 1))],
        plan.double_buffer_global,
    ) + write_tail

    launch = device.kernel_launch_overhead
    total = groups * group_seconds + launch

    steps_per_group = blocks * kt
    io_main_seconds = groups * (io_first + io_boundary * (blocks - 1)
                                + io_mid * blocks * (kt - 1) + write_tail)
    # All global steps are identical at the core level.
    io_global_seconds = groups * steps_per_group * step.io_cycles / freq
    compute_seconds = groups * steps_per_group * step.compute_cycles / freq

    bytes_main = 0
    if device.has_main_memory:
        # Unpadded traffic: A swept once per N tile column, B once per M tile
        # row, C read and written once each.
        bytes_main = spec.count * bpe * (nt * spec.m * spec.k + mt * spec.k * spec.n
                                         + 2 * spec.m * spec.n)
    bytes_global = groups * steps_per_group * step.io_bytes

    flops = op_flops(spec)
    return LatencyReport(
        total_seconds=total,
        compute_seconds=compute_seconds,
        launch_overhead_seconds=launch,
        io_seconds={"main_global": io_main_seconds, "global_local": io_global_seconds,
                    "local_lane": 0.0},
        bytes_moved={"main_global": bytes_main, "global_local": bytes_global,
                     "local_lane": 0},
        flops_executed=flops,
        utilization=flops / (total * peak_compute_throughput(device)) if total > 0 else 0.0,
    )


# ---------------------------------------------------------------------------
# Vector operators
# ---------------------------------------------------------------------------


def _chunk_cycles(core: CoreDescriptor, spec: OperatorSpec, elements: int, sweep: str) -> float:
    """Vector-unit cycles to process `elements` contiguous elements once."""
    groups = math.ceil(elements / core.vector_width)
    t, d = core.transcendental_cycles, core.divide_cycles
    if spec.kind == "Softmax":
        return groups * (SOFTMAX_CHEAP_OPS_PER_ELEMENT + t + d)  # exp and divide
    if spec.kind == "GELU":
        return groups * (GELU_CHEAP_OPS_PER_ELEMENT + t)  # tanh
    stats = LAYERNORM_MEAN_OPS_PER_ELEMENT + LAYERNORM_VAR_OPS_PER_ELEMENT
    if sweep == "stats":
        return groups * stats
    if sweep == "normalize":
        return groups * LAYERNORM_NORM_OPS_PER_ELEMENT
    return groups * (stats + LAYERNORM_NORM_OPS_PER_ELEMENT)


def _row_end_cycles(core: CoreDescriptor, spec: OperatorSpec) -> float:
    """Per-row wrap-up: tree reductions across the vector width, row scalars."""
    tree = math.ceil(math.log2(core.vector_width)) if core.vector_width > 1 else 0
    if spec.kind == "Softmax":
        return 2 * tree  # fold running max and running sum
    if spec.kind == "LayerNorm":
        return 2 * tree + core.transcendental_cycles + core.divide_cycles  # sqrt, 1/std
    return 0.0


def _vector_core_step(device: DeviceDescriptor, spec: OperatorSpec, plan: MappingPlan,
                      sweep: str, writes: bool, last_col: bool) -> _CoreStep:
    """Core-level cost of one global step of a vector-operator sweep."""
    core = device.core
    bpe = spec.bytes_per_element
    m2 = plan.tile_m // plan.subtile_m
    n2 = plan.tile_n // plan.subtile_n
    pool = m2 * n2
    sub_bytes = plan.subtile_m * plan.subtile_n * bpe

    if spec.kind == "GELU":
        # Elementwise: the subtile splits evenly across the core's lanes.
        per_lane = math.ceil(plan.subtile_n / core.lane_count)
        comp = _chunk_cycles(core, spec, per_lane, sweep)
    else:
        # Row-wise: rows go round-robin to lanes; a lane sweeps its row chunk.
        rows_per_lane = math.ceil(plan.subtile_m / core.lane_count)
        comp = rows_per_lane * _chunk_cycles(core, spec, plan.subtile_n, sweep)
        if last_col and sweep in ("stats", "fused"):
            comp += rows_per_lane * _row_end_cycles(core, spec)

    waves_full, wave_rem = divmod(pool, device.core_count)
    runs = []
    write_cycles = 0.0
    io_acc = 0.0
    comp_acc = 0.0
    bytes_acc = 0
    if waves_full:
        io = _gb_cycles(device, device.core_count * sub_bytes)
        runs.append((io, comp, waves_full))
        io_acc += waves_full * io
        comp_acc += waves_full * comp
        bytes_acc += waves_full * device.core_count * sub_bytes
        if writes:
            write_cycles += waves_full * io
            bytes_acc += waves_full * device.core_count * sub_bytes
    if wave_rem:
        io = _gb_cycles(device, wave_rem * sub_bytes)
        runs.append((io, comp, 1))
        io_acc += io
        comp_acc += comp
        bytes_acc += wave_rem * sub_bytes
        if writes:
            write_cycles += io
            bytes_acc += wave_rem * sub_bytes
    cycles = _compose_steps(runs, plan.double_buffer_local) + write_cycles
    return _CoreStep(cycles, io_acc + write_cycles, comp_acc, bytes_acc)


def _vector_sweep(device: DeviceDescriptor, spec: OperatorSpec, plan: MappingPlan,
                  sweep: str, reads: bool, writes: bool, acc: dict) -> float:
    """One full pass over the operand grid; returns seconds, fills `acc`."""
    freq = device.frequency
    bpe = spec.bytes_per_element
    rows, cols = _vector_shape(spec)
    mt = math.ceil(rows / plan.tile_m)
    nt = math.ceil(cols / plan.tile_n)

    plain = _vector_core_step(device, spec, plan, sweep, writes, last_col=False)
    last = _vector_core_step(device, spec, plan, sweep, writes, last_col=True)
    plain_s, last_s = plain.cycles / freq, last.cycles / freq

    tile_bytes = plan.tile_m * plan.tile_n * bpe
    if device.has_main_memory:
        if device.memory_bandwidth <= 0:
            raise InfeasibleError("zero memory bandwidth with nonzero traffic")
        read_s = tile_bytes / device.memory_bandwidth if reads else 0.0
        write_s = tile_bytes / device.memory_bandwidth if writes else 0.0
    else:
        read_s = write_s = 0.0

    plain_count = mt * (nt - 1)
    last_count = mt
    # Writes are serialized into the io term of the following step; the last
    # step's write drains at the end.
    if plain_count:
        runs = [(read_s, plain_s, 1), (read_s + write_s, plain_s, plain_count - 1),
                (read_s + write_s, last_s, last_count)]
    else:
        runs = [(read_s, last_s, 1), (read_s + write_s, last_s, last_count - 1)]
    total = _compose_steps(runs, plan.double_buffer_global) + write_s

    steps = plain_count + last_count
    acc["io_main_seconds"] += steps * (read_s + write_s)
    acc["io_global_seconds"] += (plain_count * plain.io_cycles + last_count * last.io_cycles) / freq
    acc["compute_seconds"] += (plain_count * plain.compute_cycles
                               + last_count * last.compute_cycles) / freq
    if device.has_main_memory:
        acc["bytes_main"] += rows * cols * bpe * ((1 if reads else 0) + (1 if writes else 0))
    acc["bytes_global"] += plain_count * plain.io_bytes + last_count * last.io_bytes
    return total


def layernorm_rows_fit_local(device: DeviceDescriptor, spec: OperatorSpec,
                             plan: MappingPlan) -> bool:
    """Can each active lane keep a whole row (in + out) resident locally?"""
    concurrent_rows = min(device.core.lane_count, plan.subtile_m)
    usable = device.core.local_buffer_capacity
    if plan.double_buffer_local:
        usable //= 2
    return concurrent_rows * 2 * spec.n * spec.bytes_per_element <= usable


def simulate_vector_op(device: DeviceDescriptor, spec: OperatorSpec, plan: MappingPlan,
                       memo: CycleMemoTable | None = None) -> LatencyReport:
    """Simulate a Softmax, LayerNorm, or GELU under a mapping plan."""
    if spec.kind not in ("Softmax", "LayerNorm", "GELU"):
        raise ConfigError(f"simulate_vector_op got operator kind {spec.kind!r}")
    fit = buffer_fit(device, spec, plan)
    if not fit.ok:
        raise InfeasibleError("plan does not fit buffers: " + "; ".join(fit.failures()))

    launch = device.kernel_launch_overhead
    if spec.kind == "GELU" and spec.elements == 0:
        return LatencyReport.empty(launch)

    acc = {"io_main_seconds": 0.0, "io_global_seconds": 0.0, "compute_seconds": 0.0,
           "bytes_main": 0, "bytes_global": 0}

    if spec.kind == "LayerNorm" and not layernorm_rows_fit_local(device, spec, plan):
        # Rows spill the local buffer: a statistics sweep must finish before
        # the normalize sweep can revisit the data (one extra read pass).
        total = _vector_sweep(device, spec, plan, "stats", reads=True, writes=False, acc=acc)
        total += _vector_sweep(device, spec, plan, "normalize", reads=True, writes=True, acc=acc)
    else:
        total = _vector_sweep(device, spec, plan, "fused", reads=True, writes=True, acc=acc)

    total += launch
    flops = op_flops(spec)
    return LatencyReport(
        total_seconds=total,
        compute_seconds=acc["compute_seconds"],
        launch_overhead_seconds=launch,
        io_seconds={"main_global": acc["io_main_seconds"],
                    "global_local": acc["io_global_seconds"], "local_lane": 0.0},
        bytes_moved={"main_global": acc["bytes_main"], "global_local": acc["bytes_global"],
                     "local_lane": 0},
        flops_executed=flops,
        utilization=flops / (total * peak_compute_throughput(device)) if total > 0 else 0.0,
    )


def simulate_operator(device: DeviceDescriptor, spec: OperatorSpec, plan: MappingPlan,
                      memo: CycleMemoTable | None = None,
                      merge_reads: bool = True) -> LatencyReport:
    """Dispatch to the matmul or vector simulator by operator kind."""
    if spec.kind == "Matmul":
        return simulate_matmul(device, spec, plan, memo=memo, merge_reads=merge_reads)
    return simulate_vector_op(device, spec, plan, memo=memo)
