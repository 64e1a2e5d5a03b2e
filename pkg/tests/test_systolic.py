import concurrent.futures
import random

import pytest

from systolic_oracle import tile_cycles, tile_cycles_with_values
from tilesim.errors import InvariantError
from tilesim.systolic import CycleMemoTable, SystolicQuery, systolic_tile_cycles


def test_trivial_examples():
    # one MAC per cycle on a 1x1 array
    assert systolic_tile_cycles(SystolicQuery(1, 1, 1, 4, 1)) == 4
    # one pass, K-deep accumulation plus fill and drain
    assert systolic_tile_cycles(SystolicQuery(4, 4, 4, 8, 4)) == 14
    # four serialized passes
    assert systolic_tile_cycles(SystolicQuery(4, 4, 8, 8, 8)) == 56


def test_query_validation():
    with pytest.raises(InvariantError):
        SystolicQuery(0, 1, 1, 1, 1)
    with pytest.raises(InvariantError):
        SystolicQuery(1, 1, 1, 1, 1, dataflow="weight-stationary")


def test_matches_stepped_oracle_sampled():
    # the full exhaustive sweep runs in the acceptance suite
    rng = random.Random(11)
    for _ in range(300):
        r, c = rng.choice([1, 2, 4, 8]), rng.choice([1, 2, 4, 8])
        m, k, n = rng.randint(1, 16), rng.randint(1, 16), rng.randint(1, 16)
        assert systolic_tile_cycles(SystolicQuery(r, c, m, k, n)) == \
            tile_cycles(r, c, m, k, n), (r, c, m, k, n)


def test_oracle_value_mode_and_cycles():
    # the stepped array must compute the actual matrix product while its
    # cycle count reproduces the closed form
    rng = random.Random(5)
    for _ in range(25):
        r, c = rng.choice([1, 2, 4]), rng.choice([1, 2, 4])
        m, k, n = rng.randint(1, 9), rng.randint(1, 9), rng.randint(1, 9)
        a = [[rng.randrange(-4, 5) for _ in range(k)] for _ in range(m)]
        b = [[rng.randrange(-4, 5) for _ in range(n)] for _ in range(k)]
        cycles, out = tile_cycles_with_values(r, c, a, b)
        ref = [[sum(a[i][t] * b[t][j] for t in range(k)) for j in range(n)]
               for i in range(m)]
        assert out == ref
        assert cycles == systolic_tile_cycles(SystolicQuery(r, c, m, k, n))


def test_monotone_in_each_dim():
    rng = random.Random(3)
    for _ in range(200):
        r, c = rng.choice([1, 2, 4, 8, 16]), rng.choice([1, 2, 4, 8, 16])
        m, k, n = rng.randint(1, 64), rng.randint(1, 64), rng.randint(1, 64)
        base = systolic_tile_cycles(SystolicQuery(r, c, m, k, n))
        assert systolic_tile_cycles(SystolicQuery(r, c, m + 1, k, n)) >= base
        assert systolic_tile_cycles(SystolicQuery(r, c, m, k + 1, n)) >= base
        assert systolic_tile_cycles(SystolicQuery(r, c, m, k, n + 1)) >= base


def test_utilization_bound():
    rng = random.Random(4)
    for _ in range(300):
        r, c = rng.choice([1, 2, 4, 8, 16]), rng.choice([1, 2, 4, 8, 16])
        m, k, n = rng.randint(1, 64), rng.randint(1, 64), rng.randint(1, 64)
        cycles = systolic_tile_cycles(SystolicQuery(r, c, m, k, n))
        assert 2 * m * k * n / (cycles * r * c * 2) <= 1.0


def test_memo_hit_avoids_recompute():
    table = CycleMemoTable()
    q = SystolicQuery(4, 4, 8, 8, 8)
    first = table.lookup_or_compute(q)
    assert table.compute_count == 1
    second = table.lookup_or_compute(q)
    assert second == first == 56
    assert table.compute_count == 1  # cache hit

    other = SystolicQuery(4, 4, 8, 9, 8)
    assert table.lookup_or_compute(other) == systolic_tile_cycles(other)
    assert table.compute_count == 2
    assert len(table) == 2


def test_memo_concurrent_duplicates_consistent():
    table = CycleMemoTable()
    queries = [SystolicQuery(4, 4, m, 8, 8) for m in range(1, 9)] * 8
    with concurrent.futures.ThreadPoolExecutor(max_workers=8) as pool:
        results = list(pool.map(table.lookup_or_compute, queries))
    for q, cycles in zip(queries, results):
        assert cycles == systolic_tile_cycles(q)
    assert len(table) == 8  # one entry per distinct query, races collapsed


def test_memo_persistence_round_trip(tmp_path):
    table = CycleMemoTable()
    queries = [SystolicQuery(2, 2, m, 4, 4) for m in (1, 2, 3)]
    for q in queries:
        table.lookup_or_compute(q)
    path = tmp_path / "cycles.json"
    table.save(path)

    fresh = CycleMemoTable()
    assert fresh.load(path) == 3
    for q in queries:
        assert fresh.lookup_or_compute(q) == systolic_tile_cycles(q)
    assert fresh.compute_count == 0  # all served from the loaded table


def test_memo_missing_cache_file_is_fine(tmp_path):
    table = CycleMemoTable()
    assert table.load(tmp_path / "absent.json") == 0
