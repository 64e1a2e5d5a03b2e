"""Die-area estimation, overhead calibration, and die/memory cost model.

Component areas come from a user-editable calibration table (`AreaParams`):
per-PE systolic area, per-width vector-unit area, an empirical register-file
model (k * bits^b * ports^a), an SRAM mm2-per-KB table interpolated between
capacity classes, and per-channel PHY/controller areas for memory and the
device interconnect. Logic and SRAM scale with the process node; PHYs do not
(their analog circuits do not shrink), so only controller area is scaled.

Residual area that the component model cannot see (control, crossbars) is
calibrated against reference dies: the gap to a known total splits into a
per-lane overhead (divided per lane, per scheduler-width unit) and a
per-core overhead; calibrating against several references averages the
overheads. The shipped defaults in configs/area_cost.yaml are provisional
estimates, not vendor data.

Cost: dies per wafer account for edge loss, yield follows the negative
binomial model, and per-die cost excludes IP, masks, and packaging by
contract (the report schema has no such fields). Memory cost is capacity
times a per-GB price keyed by protocol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import yaml

from .errors import ConfigError, SchemaError
from .hardware import CoreDescriptor, DeviceDescriptor

AREA_COMPONENTS = (
    "systolic",
    "vector",
    "register_file",
    "local_buffer",
    "global_buffer",
    "memory_phy",
    "memory_controller",
    "interconnect_phy",
    "interconnect_controller",
    "lane_overhead",
    "core_overhead",
)


@dataclass(frozen=True)
class AreaParams:
    """Calibration table for the area model. All areas in mm2 at the
    reference process node unless noted."""

    systolic_mm2_per_pe: float
    vector_mm2_per_lane_width: float
    # Register file empirical model: area = k * bits^bits_exp * ports^ports_exp.
    regfile_k: float
    regfile_bits_exponent: float
    regfile_ports_exponent: float
    regfile_ports: float
    # (capacity_kb, mm2_per_kb) rows, ascending capacity; linear interpolation.
    sram_mm2_per_kb: tuple
    memory_phy_mm2_per_channel: float
    memory_controller_mm2_per_channel: float
    memory_channel_bandwidth: float  # bytes/s served by one channel
    interconnect_phy_mm2_per_channel: float
    interconnect_controller_mm2_per_channel: float
    interconnect_channel_bandwidth: float  # bytes/s per link channel
    node_scale_factor: float = 1.0  # target-node area / reference-node area
    scheduler_width: int = 32
    per_lane_overhead_mm2: float = 0.0  # per lane, per scheduler-width unit
    per_core_overhead_mm2: float = 0.0
    lane_overhead_fraction: float = 0.5  # calibration split knob

    def __post_init__(self):
        numeric = [
            self.systolic_mm2_per_pe, self.vector_mm2_per_lane_width, self.regfile_k,
            self.regfile_bits_exponent, self.regfile_ports_exponent, self.regfile_ports,
            self.memory_phy_mm2_per_channel, self.memory_controller_mm2_per_channel,
            self.memory_channel_bandwidth, self.interconnect_phy_mm2_per_channel,
            self.interconnect_controller_mm2_per_channel,
            self.interconnect_channel_bandwidth, self.per_lane_overhead_mm2,
            self.per_core_overhead_mm2,
        ]
        if any(v < 0 for v in numeric):
            raise ConfigError("area parameters must be >= 0")
        if self.node_scale_factor <= 0:
            raise ConfigError(f"node_scale_factor > 0 required, got {self.node_scale_factor}")
        if not (0.0 <= self.lane_overhead_fraction <= 1.0):
            raise ConfigError("lane_overhead_fraction must be within [0, 1]")
        if not self.sram_mm2_per_kb:
            raise ConfigError("sram_mm2_per_kb table must not be empty")

    def sram_mm2(self, capacity_bytes: int) -> float:
        """SRAM area via linear interpolation between capacity classes."""
        kb = capacity_bytes / 1024.0
        table = self.sram_mm2_per_kb
        if kb <= table[0][0]:
            rate = table[0][1]
        elif kb >= table[-1][0]:
            rate = table[-1][1]
        else:
            rate = table[-1][1]
            for (c0, r0), (c1, r1) in zip(table, table[1:]):
                if c0 <= kb <= c1:
                    rate = r0 + (r1 - r0) * (kb - c0) / (c1 - c0)
                    break
        return kb * rate


@dataclass(frozen=True)
class WaferParams:
    wafer_cost_usd: float
    wafer_diameter_mm: float = 300.0
    defect_density_per_mm2: float = 0.001
    yield_alpha: float = 3.0  # defect clustering parameter

    def __post_init__(self):
        if self.wafer_diameter_mm <= 0:
            raise ConfigError(f"wafer diameter > 0 required, got {self.wafer_diameter_mm}")
        if self.wafer_cost_usd < 0:
            raise ConfigError(f"wafer cost >= 0 required, got {self.wafer_cost_usd}")
        if self.defect_density_per_mm2 < 0:
            raise ConfigError("defect density >= 0 required")
        if self.yield_alpha <= 0:
            raise ConfigError("yield alpha > 0 required")


@dataclass
class AreaCostReport:
    """Per-component die area plus die/memory cost. Deliberately carries no
    IP, mask, or packaging fields."""

    components_mm2: dict
    total_mm2: float
    die_cost_usd: float = 0.0
    memory_cost_usd: float = 0.0
    total_cost_usd: float = 0.0


def core_area(core: CoreDescriptor, p: AreaParams) -> dict:
    """Area breakdown of one core, node-scaled except calibrated overheads."""
    s = p.node_scale_factor
    lanes = core.lane_count
    systolic = lanes * core.systolic_rows * core.systolic_cols * p.systolic_mm2_per_pe * s
    vector = lanes * core.vector_width * p.vector_mm2_per_lane_width * s
    bits = core.register_file_bytes_per_lane * 8
    regfile = lanes * (p.regfile_k
                       * bits ** p.regfile_bits_exponent
                       * p.regfile_ports ** p.regfile_ports_exponent) * s
    local = p.sram_mm2(core.local_buffer_capacity) * s
    lane_overhead = lanes * p.scheduler_width * p.per_lane_overhead_mm2
    return {
        "systolic": systolic,
        "vector": vector,
        "register_file": regfile,
        "local_buffer": local,
        "lane_overhead": lane_overhead,
        "core_overhead": p.per_core_overhead_mm2,
    }


def die_area(device: DeviceDescriptor, p: AreaParams,
             interconnect_bandwidth: float = 0.0) -> AreaCostReport:
    """Whole-die area: cores, global buffer, memory and interconnect frontends.

    Controller area scales with the process node; PHY area does not.
    `interconnect_bandwidth` sizes the device-device link frontend (the link
    belongs to the system descriptor, so it is passed in here).
    """
    s = p.node_scale_factor
    per_core = core_area(device.core, p)
    components = {name: 0.0 for name in AREA_COMPONENTS}
    for name, mm2 in per_core.items():
        components[name] = mm2 * device.core_count
    components["global_buffer"] = p.sram_mm2(device.global_buffer_capacity) * s

    if device.has_main_memory and p.memory_channel_bandwidth > 0:
        channels = math.ceil(device.memory_bandwidth / p.memory_channel_bandwidth)
    else:
        channels = 0
    components["memory_phy"] = channels * p.memory_phy_mm2_per_channel
    components["memory_controller"] = channels * p.memory_controller_mm2_per_channel * s

    if interconnect_bandwidth > 0 and p.interconnect_channel_bandwidth > 0:
        ic_channels = math.ceil(interconnect_bandwidth / p.interconnect_channel_bandwidth)
    else:
        ic_channels = 0
    components["interconnect_phy"] = ic_channels * p.interconnect_phy_mm2_per_channel
    components["interconnect_controller"] = (
        ic_channels * p.interconnect_controller_mm2_per_channel * s
    )

    return AreaCostReport(components_mm2=components, total_mm2=sum(components.values()))


@dataclass(frozen=True)
class CalibrationResult:
    per_lane_overhead_mm2: float
    per_core_overhead_mm2: float
    residual_mm2: float
    clamped: bool  # model exceeded the reference; overheads were clamped to 0


def calibrate_overheads(device: DeviceDescriptor, p: AreaParams,
                        reference_total_mm2: float, scheduler_width: int,
                        interconnect_bandwidth: float = 0.0) -> CalibrationResult:
    """Fit per-lane and per-core overheads against a known die total.

    The residual splits by `p.lane_overhead_fraction`: the lane share divides
    per lane per scheduler-width unit, the rest divides per core. A negative
    residual clamps both overheads to zero and flags the result.
    """
    base = replace(p, per_lane_overhead_mm2=0.0, per_core_overhead_mm2=0.0,
                   scheduler_width=scheduler_width)
    modeled = die_area(device, base, interconnect_bandwidth).total_mm2
    residual = reference_total_mm2 - modeled
    if residual < 0:
        return CalibrationResult(0.0, 0.0, residual, clamped=True)
    lane_share = p.lane_overhead_fraction * residual
    core_share = residual - lane_share
    per_lane = lane_share / (device.core_count * device.core.lane_count * scheduler_width)
    per_core = core_share / device.core_count
    return CalibrationResult(per_lane, per_core, residual, clamped=False)


def average_calibrations(results: list[CalibrationResult]) -> tuple[float, float]:
    """Mean overheads across reference dies (e.g. one per vendor)."""
    if not results:
        raise ConfigError("no calibration results to average")
    per_lane = sum(r.per_lane_overhead_mm2 for r in results) / len(results)
    per_core = sum(r.per_core_overhead_mm2 for r in results) / len(results)
    return per_lane, per_core


def dies_per_wafer(area_mm2: float, w: WaferParams) -> int:
    """Gross dies on a circular wafer with the standard edge-loss correction."""
    if area_mm2 <= 0:
        raise ConfigError(f"die area > 0 required, got {area_mm2}")
    d = w.wafer_diameter_mm
    count = math.pi * (d / 2) ** 2 / area_mm2 - math.pi * d / math.sqrt(2 * area_mm2)
    if count < 1:
        raise ConfigError(
            f"die of {area_mm2} mm2 does not fit a {d} mm wafer")
    return math.floor(count)


def die_yield(area_mm2: float, w: WaferParams) -> float:
    """Negative-binomial yield: (1 + A*D0/alpha)^-alpha."""
    return (1.0 + area_mm2 * w.defect_density_per_mm2 / w.yield_alpha) ** (-w.yield_alpha)


def die_cost(area_mm2: float, w: WaferParams) -> float:
    """Per-good-die cost: wafer cost / (dies per wafer * yield)."""
    dies = dies_per_wafer(area_mm2, w)
    return w.wafer_cost_usd / (dies * die_yield(area_mm2, w))


# Derived per-GB prices that reproduce the reference cost rows exactly:
# 80 GB of HBM2e at 560 USD and 512 GB of DDR at 154 USD.
DEFAULT_MEMORY_PRICE_PER_GB = {
    "HBM2e": 560.0 / 80.0,
    "DDR": 154.0 / 512.0,
}


def memory_cost(capacity_gb: float, protocol: str,
                price_table: dict | None = None) -> float:
    """capacity x per-GB price for the protocol; unpriced protocols error."""
    table = DEFAULT_MEMORY_PRICE_PER_GB if price_table is None else price_table
    if protocol not in table:
        raise ConfigError(f"no price for memory protocol {protocol!r}; "
                          f"priced: {sorted(table)}")
    if capacity_gb < 0:
        raise ConfigError(f"capacity >= 0 required, got {capacity_gb}")
    return capacity_gb * table[protocol]


def full_cost_report(device: DeviceDescriptor, p: AreaParams, w: WaferParams,
                     interconnect_bandwidth: float = 0.0,
                     price_table: dict | None = None) -> AreaCostReport:
    """Area plus die, memory, and total cost for one device."""
    report = die_area(device, p, interconnect_bandwidth)
    report.die_cost_usd = die_cost(report.total_mm2, w) if report.total_mm2 > 0 else 0.0
    if device.has_main_memory:
        report.memory_cost_usd = memory_cost(device.memory_capacity / 1e9,
                                             device.memory_protocol, price_table)
    report.total_cost_usd = report.die_cost_usd + report.memory_cost_usd
    return report


# ---------------------------------------------------------------------------
# Calibration file
# ---------------------------------------------------------------------------

# Provisional defaults for a 7nm-class process. The SRAM rates follow the
# usual density falloff toward small arrays; PHY/controller areas are rough
# reads of annotated die photos; the rest are order-of-magnitude estimates
# meant to be replaced by the user's own calibration.
DEFAULT_AREA_PARAMS = AreaParams(
    systolic_mm2_per_pe=6e-4,
    vector_mm2_per_lane_width=1.2e-3,
    regfile_k=5e-7,
    regfile_bits_exponent=0.9,
    regfile_ports_exponent=1.3,
    regfile_ports=2.0,
    sram_mm2_per_kb=(
        (64.0, 1.5e-3),
        (256.0, 1.2e-3),
        (1024.0, 1.0e-3),
        (16384.0, 8.0e-4),
        (65536.0, 7.3e-4),
    ),
    memory_phy_mm2_per_channel=6.0,
    memory_controller_mm2_per_channel=2.0,
    memory_channel_bandwidth=4e11,  # one HBM2e-class stack
    interconnect_phy_mm2_per_channel=1.5,
    interconnect_controller_mm2_per_channel=0.5,
    interconnect_channel_bandwidth=5e10,  # one high-speed link
    node_scale_factor=1.0,
    scheduler_width=32,
    per_lane_overhead_mm2=0.0,
    per_core_overhead_mm2=0.0,
    lane_overhead_fraction=0.5,
)

DEFAULT_WAFER_PARAMS = WaferParams(
    wafer_cost_usd=9346.0,  # public 7nm wafer-cost estimate
    wafer_diameter_mm=300.0,
    defect_density_per_mm2=0.001,
    yield_alpha=3.0,
)


@dataclass(frozen=True)
class CostCalibration:
    area: AreaParams
    wafer: WaferParams
    memory_price_per_gb: dict


def default_cost_calibration() -> CostCalibration:
    return CostCalibration(DEFAULT_AREA_PARAMS, DEFAULT_WAFER_PARAMS,
                           dict(DEFAULT_MEMORY_PRICE_PER_GB))


def parse_cost_calibration(text: str) -> CostCalibration:
    """Load a calibration document; omitted fields keep the shipped defaults."""
    try:
        doc = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise SchemaError("<calibration>", f"not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("<calibration>", "top level must be a mapping")
    for section in doc:
        if section not in ("area", "wafer", "memory_price_per_gb"):
            raise SchemaError(section, "unknown calibration section")

    area_doc = doc.get("area", {}) or {}
    area_fields = set(AreaParams.__dataclass_fields__)
    kwargs = {}
    for key, value in area_doc.items():
        if key not in area_fields:
            raise SchemaError(f"area.{key}", "unknown field")
        if key == "sram_mm2_per_kb":
            value = tuple((float(c), float(r)) for c, r in value)
        kwargs[key] = value
    area = replace(DEFAULT_AREA_PARAMS, **kwargs)

    wafer_doc = doc.get("wafer", {}) or {}
    wafer_fields = set(WaferParams.__dataclass_fields__)
    for key in wafer_doc:
        if key not in wafer_fields:
            raise SchemaError(f"wafer.{key}", "unknown field")
    wafer = replace(DEFAULT_WAFER_PARAMS, **wafer_doc)

    prices = dict(DEFAULT_MEMORY_PRICE_PER_GB)
    prices.update(doc.get("memory_price_per_gb", {}) or {})
    return CostCalibration(area, wafer, prices)


def render_cost_calibration(cal: CostCalibration) -> str:
    doc = {
        "area": {key: (list(map(list, getattr(cal.area, key)))
                       if key == "sram_mm2_per_kb" else getattr(cal.area, key))
                 for key in AreaParams.__dataclass_fields__},
        "wafer": {key: getattr(cal.wafer, key) for key in WaferParams.__dataclass_fields__},
        "memory_price_per_gb": dict(cal.memory_price_per_gb),
    }
    return yaml.safe_dump(doc, sort_keys=True)
