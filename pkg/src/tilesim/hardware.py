"""Hardware description template: system -> device -> core -> lane.

A *system* is a set of identical devices joined by a link. A *device* has
cores, a shared global buffer, and (usually) off-chip main memory. A *core*
groups lanes behind a shared local buffer. A *lane* is the smallest compute
unit: one systolic array plus one vector unit with a private register file.

Descriptors are frozen dataclasses: immutable after construction and safe to
share across concurrent simulations. Construction validates every invariant
and raises `InvariantError` naming the failed invariant.

Unit conventions (also documented in docs/hardware_schema.md):
    frequency          Hz
    capacities         bytes
    memory_bandwidth   bytes/second
    global_buffer_bandwidth  bytes/cycle (aggregate across all cores)
    link bandwidth     bytes/second
    latencies/overheads seconds
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field

import yaml

from .errors import InvariantError, SchemaError

KIB = 1024
MIB = 1024 * 1024

MEMORY_PROTOCOLS = ("HBM2e", "DDR", "none")
TOPOLOGIES = ("fully-connected", "ring")


def _require(cond: bool, invariant: str, message: str) -> None:
    if not cond:
        raise InvariantError(invariant, message)


@dataclass(frozen=True)
class LinkParameters:
    """Device-device link: latency, per-transfer overhead, bandwidth, packets.

    A transfer of n bytes costs `latency_s + overhead_s + n_hat / bandwidth`
    where `n_hat = ceil(n / max_payload) * flit_size + n` accounts for packet
    headers (one flit per max_payload-sized packet).
    """

    bandwidth: float  # bytes/s
    latency_s: float = 0.0
    overhead_s: float = 0.0
    max_payload: int = 256  # bytes per packet
    flit_size: int = 16  # header bytes per packet

    def __post_init__(self):
        _require(self.bandwidth > 0, "bandwidth_B > 0", f"got {self.bandwidth}")
        _require(self.max_payload > 0, "max_payload > 0", f"got {self.max_payload}")
        _require(self.flit_size >= 0, "flit_size >= 0", f"got {self.flit_size}")
        _require(self.latency_s >= 0, "latency_L >= 0", f"got {self.latency_s}")
        _require(self.overhead_s >= 0, "overhead_O >= 0", f"got {self.overhead_s}")


@dataclass(frozen=True)
class CoreDescriptor:
    """One core: `lane_count` identical lanes behind a shared local buffer."""

    lane_count: int
    vector_width: int  # fp16 lanes per vector unit
    systolic_rows: int
    systolic_cols: int
    local_buffer_capacity: int  # bytes, shared by all lanes of the core
    register_file_bytes_per_lane: int = 64 * KIB
    # Vector-unit issue costs, in cycles per vector-wide operation. The
    # hardware vendors do not publish these; both are calibration knobs.
    transcendental_cycles: int = 4
    divide_cycles: int = 4

    def __post_init__(self):
        _require(self.lane_count >= 1, "lane_count >= 1", f"got {self.lane_count}")
        _require(self.vector_width >= 1, "vector_width >= 1", f"got {self.vector_width}")
        _require(self.systolic_rows >= 1, "systolic_rows >= 1", f"got {self.systolic_rows}")
        _require(self.systolic_cols >= 1, "systolic_cols >= 1", f"got {self.systolic_cols}")
        _require(
            self.local_buffer_capacity > 0,
            "local_buffer_capacity > 0",
            f"got {self.local_buffer_capacity}",
        )
        _require(
            self.register_file_bytes_per_lane > 0,
            "register_file_bytes_per_lane > 0",
            f"got {self.register_file_bytes_per_lane}",
        )
        _require(
            self.transcendental_cycles >= 1,
            "transcendental_cycles >= 1",
            f"got {self.transcendental_cycles}",
        )
        _require(self.divide_cycles >= 1, "divide_cycles >= 1", f"got {self.divide_cycles}")


@dataclass(frozen=True)
class DeviceDescriptor:
    """One device: cores + global buffer + main memory."""

    frequency: float  # Hz
    core_count: int
    global_buffer_capacity: int  # bytes
    global_buffer_bandwidth: float  # bytes/cycle, aggregate
    memory_bandwidth: float  # bytes/s; 0 when memory_protocol == "none"
    memory_capacity: int  # bytes; 0 when memory_protocol == "none"
    core: CoreDescriptor
    memory_protocol: str = "HBM2e"
    kernel_launch_overhead: float = 0.0  # seconds charged once per operator

    def __post_init__(self):
        _require(self.frequency > 0, "frequency > 0", f"got {self.frequency}")
        _require(self.core_count >= 1, "core_count >= 1", f"got {self.core_count}")
        _require(
            self.global_buffer_capacity >= 0,
            "global_buffer_capacity >= 0",
            f"got {self.global_buffer_capacity}",
        )
        _require(
            self.global_buffer_bandwidth >= 0,
            "global_buffer_bandwidth >= 0",
            f"got {self.global_buffer_bandwidth}",
        )
        _require(
            self.memory_bandwidth >= 0,
            "memory_bandwidth >= 0",
            f"got {self.memory_bandwidth}",
        )
        _require(
            self.memory_capacity >= 0,
            "memory_capacity >= 0",
            f"got {self.memory_capacity}",
        )
        _require(
            self.kernel_launch_overhead >= 0,
            "kernel_launch_overhead >= 0",
            f"got {self.kernel_launch_overhead}",
        )
        if self.memory_protocol not in MEMORY_PROTOCOLS:
            raise SchemaError(
                "device.memory_protocol",
                f"must be one of {MEMORY_PROTOCOLS}, got {self.memory_protocol!r}",
            )
        if self.memory_protocol != "none":
            _require(
                self.memory_bandwidth > 0,
                "memory_bandwidth > 0 when memory is present",
                f"protocol {self.memory_protocol} with bandwidth {self.memory_bandwidth}",
            )

    @property
    def has_main_memory(self) -> bool:
        return self.memory_protocol != "none"

    def effective_memory_bandwidth(self) -> float:
        """Bandwidth of the level operands stream from, bytes/s.

        Devices without main memory (TPU-style) hold operands in the global
        buffer, so its bandwidth is the streaming bandwidth.
        """
        if self.has_main_memory:
            return self.memory_bandwidth
        return self.global_buffer_bandwidth * self.frequency

    def effective_memory_capacity(self) -> int:
        if self.has_main_memory:
            return self.memory_capacity
        return self.global_buffer_capacity


@dataclass(frozen=True)
class SystemDescriptor:
    """devices × DeviceDescriptor joined by `interconnect`."""

    device: DeviceDescriptor
    devices: int = 1
    topology: str = "fully-connected"
    interconnect: LinkParameters | None = None

    def __post_init__(self):
        _require(self.devices >= 1, "devices >= 1", f"got {self.devices}")
        if self.topology not in TOPOLOGIES:
            raise SchemaError(
                "system.topology",
                f"must be one of {TOPOLOGIES}, got {self.topology!r}",
            )
        if self.devices > 1:
            _require(
                self.interconnect is not None and self.interconnect.bandwidth > 0,
                "interconnect bandwidth > 0 when devices > 1",
                f"devices={self.devices}, interconnect={self.interconnect}",
            )


def peak_compute_throughput(device: DeviceDescriptor) -> float:
    """Peak systolic flops/s: every PE does one MAC (2 flops) per cycle."""
    core = device.core
    return (
        device.core_count
        * core.lane_count
        * core.systolic_rows
        * core.systolic_cols
        * 2
        * device.frequency
    )


# ---------------------------------------------------------------------------
# Parsing / rendering
# ---------------------------------------------------------------------------

# Section -> field -> (required, kind, default). Kinds: int, float, str.
_SCHEMA = {
    "system": {
        "devices": (False, int, 1),
        "topology": (False, str, "fully-connected"),
    },
    "interconnect": {
        "bandwidth": (True, float, None),
        "latency": (False, float, 0.0),
        "overhead": (False, float, 0.0),
        "max_payload": (False, int, 256),
        "flit_size": (False, int, 16),
    },
    "device": {
        "frequency": (True, float, None),
        "core_count": (True, int, None),
        "global_buffer_capacity": (True, int, None),
        "global_buffer_bandwidth": (True, float, None),
        "memory_bandwidth": (False, float, 0.0),
        "memory_capacity": (False, int, 0),
        "memory_protocol": (False, str, "HBM2e"),
        "kernel_launch_overhead": (False, float, 0.0),
    },
    "core": {
        "lane_count": (True, int, None),
        "local_buffer_capacity": (True, int, None),
    },
    "lane": {
        "vector_width": (True, int, None),
        "systolic_rows": (True, int, None),
        "systolic_cols": (True, int, None),
        "register_file_bytes": (False, int, 64 * KIB),
        "transcendental_cycles": (False, int, 4),
        "divide_cycles": (False, int, 4),
    },
}


def _load_section(doc: dict, section: str) -> dict:
    raw = doc.get(section, {})
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise SchemaError(section, f"expected a mapping, got {type(raw).__name__}")
    schema = _SCHEMA[section]
    for key in raw:
        if key not in schema:
            raise SchemaError(f"{section}.{key}", "unknown field")
    out = {}
    for key, (required, kind, default) in schema.items():
        if key in raw:
            value = raw[key]
            if kind is int:
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise SchemaError(f"{section}.{key}", f"expected an integer, got {value!r}")
                if isinstance(value, float):
                    if value != int(value):
                        raise SchemaError(
                            f"{section}.{key}", f"expected an integer, got {value!r}"
                        )
                    value = int(value)
            elif kind is float:
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise SchemaError(f"{section}.{key}", f"expected a number, got {value!r}")
                value = float(value)
            elif kind is str:
                if not isinstance(value, str):
                    raise SchemaError(f"{section}.{key}", f"expected a string, got {value!r}")
            out[key] = value
        elif required:
            raise SchemaError(f"{section}.{key}", "required field is missing")
        else:
            out[key] = default
    return out


def parse_system_descriptor(text: str) -> SystemDescriptor:
    """Parse a hardware description document (YAML key/value tree).

    Top-level sections: system, device, core, lane, interconnect. Omitted
    optional fields take their documented defaults. Raises `SchemaError`
    naming the offending field or `InvariantError` naming the violated
    invariant.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SchemaError("<document>", f"not valid YAML: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise SchemaError("<document>", "top level must be a mapping of sections")
    for section in doc:
        if section not in _SCHEMA:
            raise SchemaError(section, "unknown section")
    for section in ("device", "core", "lane"):
        if section not in doc:
            raise SchemaError(section, "required section is missing")

    system = _load_section(doc, "system")
    device = _load_section(doc, "device")
    core = _load_section(doc, "core")
    lane = _load_section(doc, "lane")

    interconnect = None
    if "interconnect" in doc:
        link = _load_section(doc, "interconnect")
        interconnect = LinkParameters(
            bandwidth=link["bandwidth"],
            latency_s=link["latency"],
            overhead_s=link["overhead"],
            max_payload=link["max_payload"],
            flit_size=link["flit_size"],
        )

    core_desc = CoreDescriptor(
        lane_count=core["lane_count"],
        vector_width=lane["vector_width"],
        systolic_rows=lane["systolic_rows"],
        systolic_cols=lane["systolic_cols"],
        local_buffer_capacity=core["local_buffer_capacity"],
        register_file_bytes_per_lane=lane["register_file_bytes"],
        transcendental_cycles=lane["transcendental_cycles"],
        divide_cycles=lane["divide_cycles"],
    )
    device_desc = DeviceDescriptor(
        frequency=device["frequency"],
        core_count=device["core_count"],
        global_buffer_capacity=device["global_buffer_capacity"],
        global_buffer_bandwidth=device["global_buffer_bandwidth"],
        memory_bandwidth=device["memory_bandwidth"],
        memory_capacity=device["memory_capacity"],
        memory_protocol=device["memory_protocol"],
        kernel_launch_overhead=device["kernel_launch_overhead"],
        core=core_desc,
    )
    return SystemDescriptor(
        device=device_desc,
        devices=system["devices"],
        topology=system["topology"],
        interconnect=interconnect,
    )


def render_system_descriptor(desc: SystemDescriptor) -> str:
    """Serialize a descriptor to the document format parse accepts.

    `parse_system_descriptor(render_system_descriptor(d)) == d` for every
    valid descriptor.
    """
    dev = desc.device
    core = dev.core
    doc: dict = {
        "system": {"devices": desc.devices, "topology": desc.topology},
        "device": {
            "frequency": dev.frequency,
            "core_count": dev.core_count,
            "global_buffer_capacity": dev.global_buffer_capacity,
            "global_buffer_bandwidth": dev.global_buffer_bandwidth,
            "memory_bandwidth": dev.memory_bandwidth,
            "memory_capacity": dev.memory_capacity,
            "memory_protocol": dev.memory_protocol,
            "kernel_launch_overhead": dev.kernel_launch_overhead,
        },
        "core": {
            "lane_count": core.lane_count,
            "local_buffer_capacity": core.local_buffer_capacity,
        },
        "lane": {
            "vector_width": core.vector_width,
            "systolic_rows": core.systolic_rows,
            "systolic_cols": core.systolic_cols,
            "register_file_bytes": core.register_file_bytes_per_lane,
            "transcendental_cycles": core.transcendental_cycles,
            "divide_cycles": core.divide_cycles,
        },
    }
    if desc.interconnect is not None:
        link = desc.interconnect
        doc["interconnect"] = {
            "bandwidth": link.bandwidth,
            "latency": link.latency_s,
            "overhead": link.overhead_s,
            "max_payload": link.max_payload,
            "flit_size": link.flit_size,
        }
    return yaml.safe_dump(doc, sort_keys=True)


def apply_override(desc: SystemDescriptor, path: str, raw_value) -> SystemDescriptor:
    """Return a copy of `desc` with one schema field replaced.

    `path` is `section.field` using the document schema names, e.g.
    `device.memory_bandwidth` or `lane.systolic_rows`. Used by sweeps.
    """
    if "." not in path:
        raise SchemaError(path, "expected section.field")
    section, key = path.split(".", 1)
    if section not in _SCHEMA or key not in _SCHEMA[section]:
        raise SchemaError(path, "unknown field")
    kind = _SCHEMA[section][key][1]
    if kind is int:
        value = int(float(raw_value))
    elif kind is float:
        value = float(raw_value)
    else:
        value = str(raw_value)

    doc = yaml.safe_load(render_system_descriptor(desc))
    if section == "interconnect" and "interconnect" not in doc:
        raise SchemaError(path, "descriptor has no interconnect section")
    doc.setdefault(section, {})[key] = value
    return parse_system_descriptor(yaml.safe_dump(doc))


def device_fingerprint(device: DeviceDescriptor) -> str:
    """Stable short hash of a device description, used as a cache key."""
    blob = repr(dataclasses.astuple(device)).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

# Published key specifications for three platform classes. Register file
# sizes, link latencies/overheads, and kernel launch overheads are not
# published for these parts; the values below are documented estimates and
# belong to the calibration data (see configs/ and docs/hardware_schema.md).
_PRESETS = {
    "a100": SystemDescriptor(
        devices=1,
        topology="fully-connected",
        interconnect=LinkParameters(
            bandwidth=600e9, latency_s=1e-6, overhead_s=1e-6, max_payload=256, flit_size=16
        ),
        device=DeviceDescriptor(
            frequency=1410e6,
            core_count=108,
            global_buffer_capacity=40 * MIB,
            global_buffer_bandwidth=5120,
            memory_bandwidth=2e12,
            memory_capacity=80 * 10**9,
            memory_protocol="HBM2e",
            kernel_launch_overhead=1e-5,  # estimate: CUDA + framework launch
            core=CoreDescriptor(
                lane_count=4,
                vector_width=32,
                systolic_rows=16,
                systolic_cols=16,
                local_buffer_capacity=192 * KIB,
                register_file_bytes_per_lane=64 * KIB,  # 256 KiB per core
            ),
        ),
    ),
    "mi210": SystemDescriptor(
        devices=1,
        topology="fully-connected",
        interconnect=LinkParameters(
            bandwidth=300e9, latency_s=1e-6, overhead_s=1e-6, max_payload=256, flit_size=16
        ),
        device=DeviceDescriptor(
            frequency=1700e6,
            core_count=104,
            global_buffer_capacity=8 * MIB,
            global_buffer_bandwidth=4096,
            memory_bandwidth=1.6e12,
            memory_capacity=64 * 10**9,
            memory_protocol="HBM2e",
            kernel_launch_overhead=1e-5,  # estimate
            core=CoreDescriptor(
                lane_count=4,
                vector_width=16,
                systolic_rows=16,
                systolic_cols=16,
                local_buffer_capacity=80 * KIB,
                register_file_bytes_per_lane=128 * KIB,  # estimate: 512 KiB VGPR per core
            ),
        ),
    ),
    # One TPUv3 core; its two matrix pipelines map onto two template cores.
    # The HBM slice attached to the core acts as the global buffer and there
    # is no separate main-memory level.
    "tpuv3-core": SystemDescriptor(
        devices=1,
        topology="ring",
        interconnect=LinkParameters(
            bandwidth=162.5e9, latency_s=1e-6, overhead_s=1e-6, max_payload=256, flit_size=16
        ),
        device=DeviceDescriptor(
            frequency=940e6,
            core_count=2,
            global_buffer_capacity=16384 * MIB,
            global_buffer_bandwidth=490,
            memory_bandwidth=0.0,
            memory_capacity=0,
            memory_protocol="none",
            kernel_launch_overhead=1e-5,  # estimate: XLA dispatch
            core=CoreDescriptor(
                lane_count=1,
                vector_width=512,  # 4 x 128
                systolic_rows=128,
                systolic_cols=128,
                local_buffer_capacity=8192 * KIB,
                register_file_bytes_per_lane=256 * KIB,  # estimate
            ),
        ),
    ),
}

PRESET_NAMES = tuple(sorted(_PRESETS))


def preset(name: str) -> SystemDescriptor:
    """Return the descriptor for one of the shipped platform presets."""
    try:
        return _PRESETS[name]
    except KeyError:
        raise SchemaError("preset", f"unknown preset {name!r}; known: {PRESET_NAMES}") from None
