"""Configuration parsing and validation."""

import uuid

import pytest

from teefab.config import SimConfig, load_config
from teefab.protocol import SHM_WINDOW_SIZE, TCM_SIZE


def write_config(tmp_path, text):
    path = tmp_path / "sim.conf"
    path.write_text(text)
    return path


def test_defaults_validate():
    config = SimConfig().validate()
    assert config.enclave_count == 4
    assert config.device_profile == "zu3eg"
    assert config.tcm_size == TCM_SIZE
    assert config.shm_size == SHM_WINDOW_SIZE
    assert not config.trace_io and not config.quarantine_on_fault


def test_load_config_full_file(tmp_path):
    path = write_config(tmp_path, (
        "# simulator settings\n"
        "enclave_count = 2\n"
        "device = zu3eg\n"
        "storage_dir = /tmp/teefab-test-store\n"
        "rng_seed = 0x20\n"))
    config = load_config(path)
    assert config.enclave_count == 2
    assert config.rng_seed == 0x20
    assert config.storage_dir == "/tmp/teefab-test-store"


def test_load_config_bools_and_delays(tmp_path):
    path = write_config(tmp_path, (
        "trace_io = yes\n"
        "quarantine_on_fault = TRUE\n"
        "dma_ns_per_byte = 250\n"
        "dma_ns_per_op = 1000\n"))
    config = load_config(path)
    assert config.trace_io and config.quarantine_on_fault
    assert config.dma_ns_per_byte == 250
    assert config.dma_ns_per_op == 1000


def test_legacy_delay_spelling(tmp_path):
    per_byte = load_config(write_config(tmp_path, "dma_delay_model = per-byte:70\n"))
    assert per_byte.dma_ns_per_byte == 70
    none = load_config(write_config(tmp_path, "dma_delay_model = none\n"))
    assert none.dma_ns_per_byte == 0 and none.dma_ns_per_op == 0
    with pytest.raises(ValueError, match="bad dma_delay_model"):
        load_config(write_config(tmp_path, "dma_delay_model = quadratic\n"))


def test_fixed_sizes_cannot_be_overridden(tmp_path):
    with pytest.raises(ValueError, match="fixed by the design"):
        load_config(write_config(tmp_path, "tcm_size = 131072\n"))
    with pytest.raises(ValueError, match="fixed by the design"):
        load_config(write_config(tmp_path, "shm_size = 4096\n"))


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ValueError, match="unknown key"):
        load_config(write_config(tmp_path, "enclaves = 2\n"))


def test_malformed_lines_name_position(tmp_path):
    with pytest.raises(ValueError, match="sim.conf:2"):
        load_config(write_config(tmp_path, "enclave_count = 1\njust words\n"))


def test_bad_value_types(tmp_path):
    with pytest.raises(ValueError, match="must be an integer"):
        load_config(write_config(tmp_path, "enclave_count = lots\n"))
    with pytest.raises(ValueError, match="must be a boolean"):
        load_config(write_config(tmp_path, "trace_io = sometimes\n"))


def test_validate_enclave_count_bounds():
    with pytest.raises(ValueError, match="enclave_count must be >= 1"):
        SimConfig(enclave_count=0).validate()
    with pytest.raises(ValueError, match="exceeds what zu3eg can hold"):
        SimConfig(enclave_count=7).validate()
    assert SimConfig(enclave_count=6).validate().enclave_count == 6


def test_validate_huk_shape():
    SimConfig(huk="ab" * 32).validate()
    with pytest.raises(ValueError, match="64 hex characters"):
        SimConfig(huk="abc").validate()
    with pytest.raises(ValueError, match="64 hex characters"):
        SimConfig(huk="zz" * 32).validate()


def test_device_key_sources():
    explicit = SimConfig(huk="ab" * 32).validate().device_key()
    seeded = SimConfig(huk_seed="unit-test").validate().device_key()
    default = SimConfig().validate().device_key()
    assert explicit.sealing_key(uuid.UUID(int=1)) \
        != seeded.sealing_key(uuid.UUID(int=1))
    assert default.sealing_key(uuid.UUID(int=1)) \
        != seeded.sealing_key(uuid.UUID(int=1))
    again = SimConfig(huk_seed="unit-test").validate().device_key()
    assert again.sealing_key(uuid.UUID(int=2)) \
        == seeded.sealing_key(uuid.UUID(int=2))


def test_bad_delay_values_rejected():
    with pytest.raises(ValueError, match="dma_ns_per_byte"):
        SimConfig(dma_ns_per_byte=-1).validate()
    with pytest.raises(ValueError, match="rng_seed must be an integer"):
        SimConfig(rng_seed="seed").validate()


def test_tiny_device_warns_below_platform_floor(tmp_path):
    profile = tmp_path / "tiny.profile"
    profile.write_text(
        "name = tiny\nlut = 10000\nlutram = 900\nff = 12000\n"
        "bram = 40\ndsp = 4\nio = 4\nbufg = 4\n")
    with pytest.warns(UserWarning, match="platform floor is two"):
        SimConfig(enclave_count=1, device_profile=str(profile)).validate()
