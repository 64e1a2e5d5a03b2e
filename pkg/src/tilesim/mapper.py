"""Mapping search: enumerate candidate plans, pick the latency-optimal one.

The candidate grid discretizes tile sizes to powers of two (which subsume
multiples of the shipped systolic dimensions) at every memory level, crossed
with both schedule schemes and all double-buffering flag combinations, and
filtered by `buffer_fit`. The search simulates up to a budgeted number of
candidates in a seed-keyed deterministic order and returns the argmin; ties
break on enumeration order. A fixed heuristic plan (largest tiles that fit,
scheme 1, double buffering on) is part of every enumeration and is always
simulated first, so the search result can never be worse than it.
"""

from __future__ import annotations

import json
import math
import random
import threading
from dataclasses import dataclass
from pathlib import Path

from .errors import InfeasibleError
from .hardware import DeviceDescriptor, device_fingerprint
from .opsim import (
    SCHEME_COLUMN_PARTITION,
    SCHEME_COOPERATIVE_REDUCTION,
    LatencyReport,
    MappingPlan,
    buffer_fit,
    simulate_operator,
)
from .systolic import CycleMemoTable
from .workload import OperatorSpec

_PLAN_CACHE_VERSION = 1

# Grid-density caps; the resulting candidate-count bound is documented in
# docs/report_formats.md.
_GLOBAL_VALUES_PER_DIM = 4
_CORE_VALUES_PER_DIM = 3
_LANE_K_VALUES = 2


@dataclass(frozen=True)
class SearchBudget:
    """Bound on simulated candidates plus the subsampling-order seed."""

    max_candidates: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.max_candidates < 1:
            raise ValueError(f"max_candidates >= 1 required, got {self.max_candidates}")


def _pow2_at_most(x: int) -> int:
    return 1 << (max(1, x).bit_length() - 1)


def _pow2_at_least(x: int) -> int:
    return 1 << (max(1, x) - 1).bit_length()


def _dim_values(dim: int, cap_edge: int, count: int, slack: int = 4) -> list[int]:
    """Power-of-two tile sizes for one dim, walking down from the capacity
    sweet spot times `slack` (anisotropic tiles trade one dim against
    another; the fit filter prunes oversized combinations)."""
    top = min(_pow2_at_least(dim), max(1, _pow2_at_most(cap_edge) * slack))
    values = []
    v = top
    while v >= 1 and len(values) < count:
        values.append(v)
        v //= 2
    return values


def _edge_for_footprint(capacity_bytes: int, operands: int, bytes_per_element: int) -> int:
    """Largest square-tile edge whose `operands`-matrix footprint (doubled
    for double buffering) stays within the capacity."""
    budget = capacity_bytes // (2 * operands * bytes_per_element)
    return max(1, math.isqrt(max(1, budget)))


def _divisor_values(tile: int, count: int, start: int | None = None) -> list[int]:
    """Power-of-two divisors of a power-of-two tile, largest first."""
    values = []
    v = tile if start is None else min(tile, _pow2_at_most(start))
    while v >= 1 and len(values) < count:
        if tile % v == 0:
            values.append(v)
        v //= 2
    return values


def _lane_k_options(device: DeviceDescriptor, spec: OperatorSpec, subtile_k: int,
                    lane_m: int, lane_n: int) -> list[int]:
    """Largest register-fitting power-of-two K chunks (deep chunks amortize
    the systolic fill/drain)."""
    bpe = spec.bytes_per_element
    cap_elems = device.core.register_file_bytes_per_lane // bpe
    options = []
    v = _pow2_at_most(subtile_k)
    while v >= 1 and len(options) < _LANE_K_VALUES:
        if lane_m * v + v * lane_n + lane_m * lane_n <= cap_elems:
            options.append(v)
            v //= 4
        else:
            v //= 2
    return options or []


def heuristic_plan(device: DeviceDescriptor, spec: OperatorSpec) -> MappingPlan | None:
    """Largest tiles that fit, scheme 1, double buffering on.

    Falls back to double buffering off when even unit tiles cannot fit the
    doubled footprint. Returns None when nothing fits at all.
    """
    for dbuf in (True, False):
        plan = _largest_fitting_plan(device, spec, dbuf)
        if plan is not None:
            return plan
    return None


def _largest_fitting_plan(device: DeviceDescriptor, spec: OperatorSpec,
                          dbuf: bool) -> MappingPlan | None:
    core = device.core
    if spec.kind == "Matmul":
        dims = {"m": _pow2_at_least(spec.m), "k": _pow2_at_least(spec.k),
                "n": _pow2_at_least(spec.n)}
    else:
        from .opsim import _vector_shape

        rows, cols = _vector_shape(spec)
        dims = {"m": _pow2_at_least(rows), "k": 1, "n": _pow2_at_least(cols)}

    def build(tile, sub, lane_k) -> MappingPlan:
        if spec.kind == "Matmul":
            lane_m = min(core.systolic_rows, sub["m"])
            lane_n = min(core.systolic_cols, sub["n"])
            return MappingPlan(tile["m"], tile["k"], tile["n"], sub["m"], sub["k"], sub["n"],
                               lane_m, lane_k, lane_n, scheme=SCHEME_COLUMN_PARTITION,
                               double_buffer_global=dbuf, double_buffer_local=dbuf)
        return MappingPlan(tile["m"], 1, tile["n"], sub["m"], 1, sub["n"],
                           scheme=SCHEME_COLUMN_PARTITION,
                           double_buffer_global=dbuf, double_buffer_local=dbuf)

    # Shrink the largest dim first until the footprint fits at each level.
    tile = dict(dims)
    while True:
        sub = dict(tile)
        while True:
            lane_ks = (_lane_k_options(device, spec, sub["k"],
                                       min(core.systolic_rows, sub["m"]),
                                       min(core.systolic_cols, sub["n"]))
                       if spec.kind == "Matmul" else [1])
            if lane_ks:
                plan = build(tile, sub, lane_ks[0])
                if buffer_fit(device, spec, plan).ok:
                    return plan
            if max(sub.values()) == 1:
                break
            shrink = max(sub, key=lambda d: sub[d])
            sub[shrink] //= 2
        if max(tile.values()) == 1:
            return None
        shrink = max(tile, key=lambda d: tile[d])
        tile[shrink] //= 2


def enumerate_candidate_plans(device: DeviceDescriptor,
                              spec: OperatorSpec) -> list[MappingPlan]:
    """Deterministic, deduplicated list of buffer-fitting candidate plans.

    The fixed heuristic plan, when one exists, is always element 0.
    """
    core = device.core
    plans: dict[MappingPlan, None] = {}
    heuristic = heuristic_plan(device, spec)
    if heuristic is not None:
        plans[heuristic] = None

    bpe = spec.bytes_per_element
    if spec.kind == "Matmul":
        g_edge = _edge_for_footprint(device.global_buffer_capacity, 3, bpe)
        l_edge = _edge_for_footprint(core.local_buffer_capacity, 3, bpe)
        g_cap_elems = device.global_buffer_capacity // bpe
        l_cap_elems = core.local_buffer_capacity // bpe
        for tm in _dim_values(spec.m, g_edge, _GLOBAL_VALUES_PER_DIM):
            for tk in _dim_values(spec.k, g_edge, _GLOBAL_VALUES_PER_DIM):
                for tn in _dim_values(spec.n, g_edge, _GLOBAL_VALUES_PER_DIM):
                    if device.has_main_memory and \
                            tm * tk + tk * tn + tm * tn > g_cap_elems:
                        continue
                    for sm in _divisor_values(tm, _CORE_VALUES_PER_DIM, start=2 * l_edge):
                        for sk in _divisor_values(tk, _CORE_VALUES_PER_DIM, start=2 * l_edge):
                            for sn in _divisor_values(tn, _CORE_VALUES_PER_DIM,
                                                      start=2 * l_edge):
                                if sm * sk + sk * sn + sm * sn > l_cap_elems:
                                    continue
                                lane_m = min(core.systolic_rows, sm)
                                lane_n = min(core.systolic_cols, sn)
                                for lk in _lane_k_options(device, spec, sk, lane_m, lane_n):
                                    for scheme in (SCHEME_COLUMN_PARTITION,
                                                   SCHEME_COOPERATIVE_REDUCTION):
                                        for dbg in (True, False):
                                            for dbl in (True, False):
                                                plan = MappingPlan(
                                                    tm, tk, tn, sm, sk, sn,
                                                    lane_m, lk, lane_n,
                                                    scheme=scheme,
                                                    double_buffer_global=dbg,
                                                    double_buffer_local=dbl,
                                                )
                                                if buffer_fit(device, spec, plan).ok:
                                                    plans[plan] = None
    elif spec.kind in ("Softmax", "LayerNorm", "GELU"):
        from .opsim import _vector_shape

        rows, cols = _vector_shape(spec)
        g_cap_elems = device.global_buffer_capacity // (2 * bpe)
        l_cap_elems = core.local_buffer_capacity // (2 * bpe)
        for tn in _dim_values(cols, _pow2_at_least(cols), _GLOBAL_VALUES_PER_DIM, slack=1):
            # Pair row counts with the row length so (1 x full-row) tiles stay
            # available for long reductions.
            tm_cap = max(1, g_cap_elems // tn)
            for tm in _dim_values(rows, tm_cap, _GLOBAL_VALUES_PER_DIM - 1, slack=1):
                if device.has_main_memory and tm * tn > g_cap_elems:
                    continue
                for sn in _divisor_values(tn, _CORE_VALUES_PER_DIM, start=l_cap_elems):
                    for sm in _divisor_values(tm, _CORE_VALUES_PER_DIM,
                                              start=max(1, l_cap_elems // sn)):
                        if sm * sn > l_cap_elems:
                            continue
                        for dbg in (True, False):
                            for dbl in (True, False):
                                plan = MappingPlan(tm, 1, tn, sm, 1, sn,
                                                   scheme=SCHEME_COLUMN_PARTITION,
                                                   double_buffer_global=dbg,
                                                   double_buffer_local=dbl)
                                if buffer_fit(device, spec, plan).ok:
                                    plans[plan] = None
    else:
        raise InfeasibleError(f"no mapping space for operator kind {spec.kind!r}")

    return list(plans)


class MappingSearcher:
    """Budgeted mapping search with per-(device, spec, budget) memoization.

    Shares one systolic cycle table across searches; safe for concurrent use.
    """

    def __init__(self, systolic_table: CycleMemoTable | None = None):
        self.systolic_table = systolic_table or CycleMemoTable()
        self._results: dict = {}
        self._lock = threading.Lock()

    def find(self, device: DeviceDescriptor, spec: OperatorSpec,
             budget: SearchBudget = SearchBudget()) -> tuple[MappingPlan, LatencyReport]:
        key = (device_fingerprint(device), spec, budget)
        with self._lock:
            cached = self._results.get(key)
        if cached is not None:
            return cached
        result = self._search(device, spec, budget)
        with self._lock:
            self._results.setdefault(key, result)
        return result

    def _search(self, device: DeviceDescriptor, spec: OperatorSpec,
                budget: SearchBudget) -> tuple[MappingPlan, LatencyReport]:
        candidates = enumerate_candidate_plans(device, spec)
        if not candidates:
            raise InfeasibleError(
                f"no mapping plan fits the device for {spec.kind} "
                f"(m={spec.m}, k={spec.k}, n={spec.n}, elements={spec.elements})"
            )
        # Seed-keyed deterministic order; index 0 (the heuristic plan) stays
        # first so every budget prefix contains it.
        order = list(range(1, len(candidates)))
        random.Random(budget.seed).shuffle(order)
        order = [0] + order
        best: tuple[float, int] | None = None
        best_result: tuple[MappingPlan, LatencyReport] | None = None
        for idx in order[: budget.max_candidates]:
            plan = candidates[idx]
            report = simulate_operator(device, spec, plan, memo=self.systolic_table)
            rank = (report.total_seconds, idx)
            if best is None or rank < best:
                best = rank
                best_result = (plan, report)
        assert best_result is not None
        return best_result

    # -- optional plan-cache persistence ------------------------------------

    def save_plan_cache(self, path: str | Path) -> None:
        entries = []
        with self._lock:
            for (fp, spec, budget), (plan, _report) in sorted(
                self._results.items(), key=lambda kv: repr(kv[0])
            ):
                entries.append({
                    "device": fp,
                    "spec": vars(spec) | {},
                    "budget": [budget.max_candidates, budget.seed],
                    "plan": vars(plan) | {},
                })
        Path(path).write_text(json.dumps({"version": _PLAN_CACHE_VERSION,
                                          "entries": entries}, sort_keys=True))

    def load_plan_cache(self, path: str | Path,
                        device: DeviceDescriptor) -> int:
        """Adopt cached plans for this device; missing file is not an error."""
        p = Path(path)
        if not p.exists():
            return 0
        payload = json.loads(p.read_text())
        if payload.get("version") != _PLAN_CACHE_VERSION:
            return 0
        fp = device_fingerprint(device)
        loaded = 0
        for entry in payload["entries"]:
            if entry["device"] != fp:
                continue
            spec = OperatorSpec(**entry["spec"])
            budget = SearchBudget(*entry["budget"])
            plan = MappingPlan(**entry["plan"])
            report = simulate_operator(device, spec, plan, memo=self.systolic_table)
            with self._lock:
                self._results.setdefault((fp, spec, budget), (plan, report))
            loaded += 1
        return loaded


_default_searcher = MappingSearcher()


def find_optimal_mapping(device: DeviceDescriptor, spec: OperatorSpec,
                         budget: SearchBudget = SearchBudget(),
                         searcher: MappingSearcher | None = None,
                         ) -> tuple[MappingPlan, LatencyReport]:
    """Search the candidate grid and return the lowest-latency plan found."""
    return (searcher or _default_searcher).find(device, spec, budget)
