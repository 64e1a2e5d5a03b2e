"""Cycle model of an output-stationary systolic array running a matmul tile.

The tile is computed in serialized passes. Each pass maps an R x C block of
outputs onto the array; operands stream in skewed along rows and columns, so
the pair (A[r, k], B[k, c]) meets processing element (r, c) at cycle
k + r + c. A pass over a K-deep reduction therefore spans cycles 0 through
K + R + C - 3 inclusive: K + R + C - 2 cycles of pipeline fill, accumulation,
and drain. Tiles narrower than the array are padded to full-array timing.

A cycle-stepped brute-force simulator of the same dataflow lives in the test
tree and must agree with this closed form exactly.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass
from pathlib import Path

from .errors import InvariantError

_CACHE_FORMAT_VERSION = 1

DATAFLOWS = ("output-stationary",)


@dataclass(frozen=True)
class SystolicQuery:
    rows: int
    cols: int
    tile_m: int
    tile_k: int
    tile_n: int
    dataflow: str = "output-stationary"

    def __post_init__(self):
        for name in ("rows", "cols", "tile_m", "tile_k", "tile_n"):
            value = getattr(self, name)
            if value < 1:
                raise InvariantError(f"{name} >= 1", f"got {value}")
        if self.dataflow not in DATAFLOWS:
            raise InvariantError("dataflow is supported", f"got {self.dataflow!r}")


def systolic_tile_cycles(q: SystolicQuery) -> int:
    """Cycles to run one tile: ceil(M/R) * ceil(N/C) passes of K + R + C - 2."""
    passes = math.ceil(q.tile_m / q.rows) * math.ceil(q.tile_n / q.cols)
    cycles_per_pass = q.tile_k + q.rows + q.cols - 2
    return passes * cycles_per_pass


class CycleMemoTable:
    """Memoized tile cycles, safe for concurrent readers and writers.

    Duplicate concurrent computation is allowed; since the model is
    deterministic, late insertions are idempotent. `compute_count` exposes
    how many queries missed the table, for tests.
    """

    def __init__(self):
        self._entries: dict[SystolicQuery, int] = {}
        self._lock = threading.Lock()
        self.compute_count = 0

    def __len__(self) -> int:
        return len(self._entries)

    def lookup_or_compute(self, q: SystolicQuery) -> int:
        cached = self._entries.get(q)
        if cached is not None:
            return cached
        cycles = systolic_tile_cycles(q)
        with self._lock:
            self.compute_count += 1
            self._entries.setdefault(q, cycles)
        return cycles

    # -- optional persistence ------------------------------------------------

    def save(self, path: str | Path) -> None:
        payload = {
            "version": _CACHE_FORMAT_VERSION,
            "entries": [
                [q.rows, q.cols, q.tile_m, q.tile_k, q.tile_n, q.dataflow, cycles]
                for q, cycles in sorted(
                    self._entries.items(),
                    key=lambda item: (item[0].rows, item[0].cols, item[0].tile_m,
                                      item[0].tile_k, item[0].tile_n),
                )
            ],
        }
        Path(path).write_text(json.dumps(payload))

    def load(self, path: str | Path) -> int:
        """Merge entries from a cache file. A missing file is not an error."""
        p = Path(path)
        if not p.exists():
            return 0
        payload = json.loads(p.read_text())
        if payload.get("version") != _CACHE_FORMAT_VERSION:
            return 0  # stale format: ignore, the table will be recomputed
        loaded = 0
        with self._lock:
            for rows, cols, m, k, n, dataflow, cycles in payload["entries"]:
                q = SystolicQuery(rows, cols, m, k, n, dataflow)
                self._entries.setdefault(q, cycles)
                loaded += 1
        return loaded
