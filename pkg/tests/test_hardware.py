import dataclasses
import math
from pathlib import Path

import pytest

from tilesim.errors import InvariantError, SchemaError
from tilesim.hardware import (
    CoreDescriptor,
    DeviceDescriptor,
    LinkParameters,
    SystemDescriptor,
    apply_override,
    parse_system_descriptor,
    peak_compute_throughput,
    preset,
    render_system_descriptor,
)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def test_preset_a100_key_specs():
    sys = preset("a100")
    dev = sys.device
    assert dev.frequency == 1410e6
    assert dev.core_count == 108
    assert dev.core.lane_count == 4
    assert dev.core.vector_width == 32
    assert (dev.core.systolic_rows, dev.core.systolic_cols) == (16, 16)
    assert dev.core.local_buffer_capacity == 192 * 1024
    assert dev.global_buffer_capacity == 40 * 1024 * 1024
    assert dev.global_buffer_bandwidth == 5120
    assert dev.memory_bandwidth == 2e12
    assert dev.memory_capacity == 80e9
    assert sys.interconnect.bandwidth == 600e9


def test_preset_mi210_key_specs():
    sys = preset("mi210")
    dev = sys.device
    assert dev.frequency == 1700e6
    assert dev.core_count == 104
    assert dev.core.vector_width == 16
    assert dev.core.local_buffer_capacity == 80 * 1024
    assert dev.global_buffer_capacity == 8 * 1024 * 1024
    assert dev.global_buffer_bandwidth == 4096
    assert dev.memory_bandwidth == 1.6e12
    assert sys.interconnect.bandwidth == 300e9


def test_preset_tpuv3_key_specs():
    sys = preset("tpuv3-core")
    dev = sys.device
    assert dev.frequency == 940e6
    assert dev.core_count == 2
    assert dev.core.lane_count == 1
    assert dev.core.vector_width == 512
    assert (dev.core.systolic_rows, dev.core.systolic_cols) == (128, 128)
    assert dev.global_buffer_bandwidth == 490
    assert dev.memory_protocol == "none"
    assert not dev.has_main_memory
    # the HBM slice acts as the streaming level
    assert dev.effective_memory_bandwidth() == 490 * 940e6
    assert sys.interconnect.bandwidth == 162.5e9


def test_unknown_preset():
    with pytest.raises(SchemaError):
        preset("h100")


def test_presets_pass_validation_and_round_trip():
    for name in ("a100", "mi210", "tpuv3-core"):
        desc = preset(name)  # construction validates
        assert parse_system_descriptor(render_system_descriptor(desc)) == desc


def test_config_files_match_presets():
    for name in ("a100", "mi210", "tpuv3-core"):
        text = (CONFIG_DIR / f"{name}.yaml").read_text()
        assert parse_system_descriptor(text) == preset(name)


def test_peak_compute_a100():
    # 108 cores x 4 lanes x 16x16 MACs x 2 flops x 1.41 GHz
    peak = peak_compute_throughput(preset("a100").device)
    assert peak == 108 * 4 * 256 * 2 * 1.41e9
    assert abs(peak - 3.119e14) / 3.119e14 < 0.01


def test_peak_compute_trivial_and_linear():
    core = CoreDescriptor(lane_count=1, vector_width=1, systolic_rows=1, systolic_cols=1,
                          local_buffer_capacity=64)
    dev = DeviceDescriptor(frequency=1.0, core_count=1, global_buffer_capacity=64,
                           global_buffer_bandwidth=1, memory_bandwidth=1.0,
                           memory_capacity=64, core=core)
    assert peak_compute_throughput(dev) == 2.0

    base = preset("a100").device
    doubled = dataclasses.replace(base, frequency=2 * base.frequency)
    assert peak_compute_throughput(doubled) == 2 * peak_compute_throughput(base)
    more_cores = dataclasses.replace(base, core_count=3 * base.core_count)
    assert peak_compute_throughput(more_cores) == 3 * peak_compute_throughput(base)
    wider = dataclasses.replace(
        base, core=dataclasses.replace(base.core, systolic_cols=2 * base.core.systolic_cols))
    assert peak_compute_throughput(wider) == 2 * peak_compute_throughput(base)


def test_parse_missing_required_field_names_it():
    text = render_system_descriptor(preset("a100"))
    import yaml

    doc = yaml.safe_load(text)
    del doc["device"]["frequency"]
    with pytest.raises(SchemaError) as err:
        parse_system_descriptor(yaml.safe_dump(doc))
    assert "frequency" in str(err.value)


def test_parse_invariant_violation_names_it():
    import yaml

    doc = yaml.safe_load(render_system_descriptor(preset("a100")))
    doc["device"]["core_count"] = 0
    with pytest.raises(InvariantError) as err:
        parse_system_descriptor(yaml.safe_dump(doc))
    assert "core_count" in str(err.value)


def test_parse_unknown_field_and_section():
    import yaml

    doc = yaml.safe_load(render_system_descriptor(preset("a100")))
    doc["device"]["turbo"] = 1
    with pytest.raises(SchemaError) as err:
        parse_system_descriptor(yaml.safe_dump(doc))
    assert "device.turbo" in str(err.value)

    doc = yaml.safe_load(render_system_descriptor(preset("a100")))
    doc["chassis"] = {}
    with pytest.raises(SchemaError):
        parse_system_descriptor(yaml.safe_dump(doc))


def test_parse_rejects_non_yaml_and_bad_types():
    with pytest.raises(SchemaError):
        parse_system_descriptor("device: [unclosed")
    with pytest.raises(SchemaError):
        parse_system_descriptor("just a string")
    import yaml

    doc = yaml.safe_load(render_system_descriptor(preset("a100")))
    doc["device"]["core_count"] = "many"
    with pytest.raises(SchemaError):
        parse_system_descriptor(yaml.safe_dump(doc))


def test_defaults_applied_for_omitted_optional_fields():
    text = """
device:
  frequency: 1.0e9
  core_count: 2
  global_buffer_capacity: 1048576
  global_buffer_bandwidth: 64
  memory_bandwidth: 1.0e11
  memory_capacity: 1000000000
core:
  lane_count: 1
  local_buffer_capacity: 65536
lane:
  vector_width: 8
  systolic_rows: 4
  systolic_cols: 4
"""
    desc = parse_system_descriptor(text)
    assert desc.devices == 1
    assert desc.topology == "fully-connected"
    assert desc.interconnect is None
    assert desc.device.memory_protocol == "HBM2e"
    assert desc.device.kernel_launch_overhead == 0.0
    assert desc.device.core.register_file_bytes_per_lane == 64 * 1024
    assert desc.device.core.transcendental_cycles == 4


def test_multi_device_requires_interconnect():
    with pytest.raises(InvariantError):
        SystemDescriptor(device=preset("a100").device, devices=2, interconnect=None)


def test_link_invariants():
    with pytest.raises(InvariantError):
        LinkParameters(bandwidth=0.0)
    with pytest.raises(InvariantError):
        LinkParameters(bandwidth=1.0, max_payload=0)
    with pytest.raises(InvariantError):
        LinkParameters(bandwidth=1.0, flit_size=-1)


def test_memory_protocol_rules():
    base = preset("a100").device
    with pytest.raises(SchemaError):
        dataclasses.replace(base, memory_protocol="GDDR7")
    with pytest.raises(InvariantError):
        dataclasses.replace(base, memory_bandwidth=0.0)  # HBM2e needs bandwidth
    none_dev = dataclasses.replace(base, memory_protocol="none", memory_bandwidth=0.0,
                                   memory_capacity=0)
    assert none_dev.effective_memory_capacity() == base.global_buffer_capacity


def test_apply_override():
    sys = preset("a100")
    swept = apply_override(sys, "device.memory_bandwidth", "8e11")
    assert swept.device.memory_bandwidth == 8e11
    assert swept.device.core == sys.device.core
    swept = apply_override(sys, "lane.systolic_rows", 32)
    assert swept.device.core.systolic_rows == 32
    with pytest.raises(SchemaError):
        apply_override(sys, "device.nonsense", 1)
    with pytest.raises(SchemaError):
        apply_override(sys, "frequency", 1)
