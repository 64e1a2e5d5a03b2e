"""Brute-force cycle-stepped simulator of an output-stationary systolic array.

This is the timing oracle for the closed-form tile model: it steps an R x C
grid of processing elements cycle by cycle. A operands enter at the left
edge (row r skewed by r cycles), B operands at the top edge (column c skewed
by c cycles), and both shift one hop per cycle; a PE multiplies and
accumulates whenever a valid A meets a valid B. A tile larger than the array
is computed in serialized passes over R x C output blocks, zero-padded at
the edges; a pass ends when every PE has consumed all K operand pairs.

Passes over zero-padded blocks are identical in timing by construction, so
`tile_cycles` steps each distinct (rows, cols, k) pass shape once and reuses
the count across passes; `run_pass` itself is pure element-wise stepping.
Value mode carries real operand values so the stitched output can be checked
against an independent matrix product.
"""

from __future__ import annotations

import math


class SteppedArray:
    """One R x C output-stationary pass, stepped element by element."""

    def __init__(self, rows: int, cols: int):
        self.rows = rows
        self.cols = cols

    def run_pass(self, a_block, b_block):
        """Step one pass. a_block is rows x K, b_block is K x cols (already
        padded). Returns (cycles, accumulator grid)."""
        R, C = self.rows, self.cols
        depth = len(b_block)
        assert all(len(row) == depth for row in a_block)

        # Per-PE registers: (value, valid) for the A and B operands in flight.
        a_reg = [[(0, False)] * C for _ in range(R)]
        b_reg = [[(0, False)] * C for _ in range(R)]
        acc = [[0] * C for _ in range(R)]
        macs_done = 0
        macs_needed = R * C * depth
        cycle = 0
        max_cycles = depth + R + C + 4  # safety net; the pass must finish by here

        while macs_done < macs_needed:
            assert cycle < max_cycles, "stepped pass failed to drain"
            new_a = [[(0, False)] * C for _ in range(R)]
            new_b = [[(0, False)] * C for _ in range(R)]
            for r in range(R):
                for c in range(C):
                    if c == 0:
                        k = cycle - r  # row r's feed is skewed by r cycles
                        a_in = (a_block[r][k], True) if 0 <= k < depth else (0, False)
                    else:
                        a_in = a_reg[r][c - 1]
                    if r == 0:
                        k = cycle - c  # column c's feed is skewed by c cycles
                        b_in = (b_block[k][c], True) if 0 <= k < depth else (0, False)
                    else:
                        b_in = b_reg[r - 1][c]
                    new_a[r][c] = a_in
                    new_b[r][c] = b_in
                    if a_in[1] and b_in[1]:
                        acc[r][c] += a_in[0] * b_in[0]
                        macs_done += 1
            a_reg, b_reg = new_a, new_b
            cycle += 1
        return cycle, acc


def pass_cycles(rows: int, cols: int, depth: int, _cache: dict = {}) -> int:
    """Cycles of one zero-padded pass, obtained by stepping (memoized on the
    pass shape; padded passes are identical in timing by construction)."""
    key = (rows, cols, depth)
    if key not in _cache:
        a = [[1] * depth for _ in range(rows)]
        b = [[1] * cols for _ in range(depth)]
        cycles, _acc = SteppedArray(rows, cols).run_pass(a, b)
        _cache[key] = cycles
    return _cache[key]


def tile_cycles(rows: int, cols: int, m: int, k: int, n: int) -> int:
    """Total cycles for an m x k x n tile: serialized zero-padded passes."""
    passes = math.ceil(m / rows) * math.ceil(n / cols)
    return passes * pass_cycles(rows, cols, k)


def tile_cycles_with_values(rows: int, cols: int, a, b) -> tuple[int, list]:
    """Full value-carrying run: every pass stepped with real operands.

    a is m x k, b is k x n (plain lists). Returns (cycles, m x n product).
    """
    m, k = len(a), len(a[0])
    n = len(b[0])
    assert len(b) == k
    array = SteppedArray(rows, cols)
    out = [[0] * n for _ in range(m)]
    total_cycles = 0
    for mi in range(math.ceil(m / rows)):
        for ni in range(math.ceil(n / cols)):
            a_block = [
                [a[mi * rows + r][kk] if mi * rows + r < m else 0 for kk in range(k)]
                for r in range(rows)
            ]
            b_block = [
                [b[kk][ni * cols + c] if ni * cols + c < n else 0 for c in range(cols)]
                for kk in range(k)
            ]
            cycles, acc = array.run_pass(a_block, b_block)
            total_cycles += cycles
            for r in range(rows):
                for c in range(cols):
                    mm, nn = mi * rows + r, ni * cols + c
                    if mm < m and nn < n:
                        out[mm][nn] = acc[r][c]
    return total_cycles, out
