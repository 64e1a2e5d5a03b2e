import math
import random

import pytest

from tilesim.errors import InvariantError
from tilesim.hardware import LinkParameters
from tilesim.netsim import (
    CollectiveSpec,
    link_transfer_latency,
    p2p_latency,
    packet_padded_bytes,
    ring_allreduce_latency,
)

# Hand-computed transfer cases: (n, max_payload, flit, bandwidth, L, O, expected
# seconds). Each line was evaluated by hand from
#   n_hat = ceil(n / max_payload) * flit + n;  T = L + O + n_hat / B
# with values chosen so the division is exact in binary floating point.
HAND_CASES = [
    (0, 256, 16, 100.0, 1e-6, 2e-6, 3e-6),          # zero payload: L + O
    (256, 256, 16, 272.0, 0.0, 0.0, 1.0),           # n_hat = 16 + 256 = 272
    (257, 256, 16, 289.0, 0.0, 0.0, 1.0),           # n_hat = 2*16 + 257 = 289
    (255, 256, 16, 271.0, 0.0, 0.0, 1.0),           # n_hat = 16 + 255
    (1, 256, 16, 17.0, 0.0, 0.0, 1.0),              # n_hat = 16 + 1
    (512, 256, 16, 544.0, 0.0, 0.0, 1.0),           # n_hat = 2*16 + 512
    (512, 256, 16, 272.0, 0.0, 0.0, 2.0),
    (1024, 256, 0, 1024.0, 0.0, 0.0, 1.0),          # flit 0: n_hat = n
    (100, 256, 16, 58.0, 0.0, 0.0, 2.0),            # n_hat = 116
    (256, 128, 16, 288.0, 0.0, 0.0, 1.0),           # two packets of 128
    (4096, 256, 16, 2176.0, 0.0, 0.0, 2.0),         # n_hat = 16*16 + 4096 = 4352
    (8, 8, 4, 12.0, 0.0, 0.0, 1.0),                 # n_hat = 4 + 8
    (9, 8, 4, 1.0, 0.0, 0.0, 17.0),                 # n_hat = 2*4 + 9 = 17
    (16, 8, 4, 24.0, 1.0, 0.0, 2.0),                # 1 + 24/24
    (16, 8, 4, 24.0, 0.5, 0.5, 2.0),
    (1000, 250, 10, 520.0, 0.0, 0.0, 2.0),          # n_hat = 4*10 + 1000 = 1040
    (1, 1, 1, 2.0, 0.0, 0.0, 1.0),                  # n_hat = 1 + 1
    (3, 2, 1, 5.0, 0.0, 0.0, 1.0),                  # n_hat = 2*1 + 3
    (6, 4, 2, 10.0, 0.0, 0.0, 1.0),                 # n_hat = 2*2 + 6
    (0, 1, 1, 5.0, 0.5, 0.25, 0.75),                # zero payload again
    (1024, 512, 32, 1088.0, 0.0, 0.0, 1.0),         # n_hat = 2*32 + 1024
    (65536, 256, 16, 8192.0, 0.0, 0.0, 8.5),        # n_hat = 256*16 + 65536 = 69632
]


@pytest.mark.parametrize("n,payload,flit,bw,lat,ov,expected", HAND_CASES)
def test_link_transfer_hand_cases(n, payload, flit, bw, lat, ov, expected):
    link = LinkParameters(bandwidth=bw, latency_s=lat, overhead_s=ov,
                          max_payload=payload, flit_size=flit)
    assert link_transfer_latency(n, link) == expected
    assert p2p_latency(n, link) == expected  # alias contract


def test_packet_padding_cases():
    link = LinkParameters(bandwidth=1.0, max_payload=256, flit_size=16)
    assert packet_padded_bytes(0, link) == 0
    assert packet_padded_bytes(256, link) == 272
    assert packet_padded_bytes(257, link) == 289


def test_padding_is_flit_multiple():
    rng = random.Random(7)
    for _ in range(200):
        flit = rng.choice([0, 1, 4, 16, 64])
        payload = rng.choice([1, 16, 128, 256, 1000])
        link = LinkParameters(bandwidth=1e9, max_payload=payload, flit_size=flit)
        n = rng.randrange(0, 10_000)
        padded = packet_padded_bytes(n, link)
        assert padded >= n
        if flit:
            assert (padded - n) % flit == 0
            assert (padded - n) // flit == math.ceil(n / payload)


def test_ring_allreduce_single_participant_is_free():
    link = LinkParameters(bandwidth=1e9, latency_s=1e-6, overhead_s=1e-6)
    assert ring_allreduce_latency(CollectiveSpec(123456, 1), link) == 0.0


def test_ring_allreduce_closed_form_no_overheads():
    # p = 2, payload 2n, ideal link: two steps of n bytes
    link = LinkParameters(bandwidth=1e9, flit_size=0)
    n = 1 << 20
    assert ring_allreduce_latency(CollectiveSpec(2 * n, 2), link) == 2 * (n / 1e9)
    for p in (2, 4, 8):
        payload = 9_999_999
        expected = 2 * (p - 1) * (math.ceil(payload / p) / 1e9)
        assert ring_allreduce_latency(CollectiveSpec(payload, p), link) == expected


def test_ring_allreduce_zero_payload_counts_step_overheads():
    link = LinkParameters(bandwidth=1e9, latency_s=3e-6, overhead_s=2e-6)
    for p in (2, 4, 8):
        assert ring_allreduce_latency(CollectiveSpec(0, p), link) == \
            pytest.approx(2 * (p - 1) * 5e-6, rel=0, abs=0)


def test_ring_allreduce_monotone_in_payload():
    link = LinkParameters(bandwidth=1e9, latency_s=1e-6, overhead_s=1e-6)
    prev = -1.0
    for payload in (0, 10, 1000, 100_000, 10_000_000):
        t = ring_allreduce_latency(CollectiveSpec(payload, 4), link)
        assert t >= prev
        prev = t


def test_collective_spec_validation():
    with pytest.raises(InvariantError):
        CollectiveSpec(10, 0)
    with pytest.raises(InvariantError):
        CollectiveSpec(-1, 2)
