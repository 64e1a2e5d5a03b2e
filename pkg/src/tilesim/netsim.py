"""Latency model for device-device links and the ring all-reduce collective.

A transfer of n bytes over a link costs

    T = L + O + n_hat / B,      n_hat = ceil(n / MaxPayload) * Flit_size + n

where L is link latency, O per-transfer overhead, and B bandwidth; n_hat adds
one header flit per packet. The all-reduce is the bandwidth-optimal ring:
a reduce-scatter followed by an all-gather, 2(p-1) serialized steps each
moving one payload/p chunk, with L and O charged on every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvariantError
from .hardware import LinkParameters


@dataclass(frozen=True)
class CollectiveSpec:
    payload_bytes: int  # per participant
    participants: int

    def __post_init__(self):
        if self.participants < 1:
            raise InvariantError("p >= 1", f"got {self.participants}")
        if self.payload_bytes < 0:
            raise InvariantError("payload_bytes >= 0", f"got {self.payload_bytes}")


def packet_padded_bytes(n: int, link: LinkParameters) -> int:
    """n_hat: payload plus one flit of header per max_payload-sized packet."""
    if n < 0:
        raise InvariantError("n >= 0", f"got {n}")
    return math.ceil(n / link.max_payload) * link.flit_size + n


def link_transfer_latency(n: int, link: LinkParameters) -> float:
    """Seconds to move n bytes through the link; n = 0 costs L + O."""
    return link.latency_s + link.overhead_s + packet_padded_bytes(n, link) / link.bandwidth


def p2p_latency(n: int, link: LinkParameters) -> float:
    """Point-to-point transfer (pipeline-parallel activations); same model."""
    return link_transfer_latency(n, link)


def ring_allreduce_latency(c: CollectiveSpec, link: LinkParameters) -> float:
    """Ring all-reduce: 2(p-1) serialized steps of ceil(payload/p) bytes each."""
    if c.participants == 1:
        return 0.0
    chunk = math.ceil(c.payload_bytes / c.participants)
    steps = 2 * (c.participants - 1)
    return steps * link_transfer_latency(chunk, link)
