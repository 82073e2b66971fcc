"""Simulator configuration: defaults, key=value file parsing, validation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path

from .protocol import TCM_SIZE, SHM_WINDOW_SIZE
from .resource_model import get_profile, max_enclaves

_FIXED_KEYS = {"tcm_size", "shm_size"}
_DEFAULT_HUK_SEED = "teefab-default-device"


@dataclass
class SimConfig:
    """Everything a fabric boot needs; sizes are fixed by the design."""

    enclave_count: int = 4
    device_profile: str = "zu3eg"
    storage_dir: str = "teefab-storage"
    uart_dir: str | None = None
    rng_seed: int | None = None
    huk: str | None = None       # 64 hex chars, the device secret itself
    huk_seed: str | None = None  # or any string stretched into one
    dma_ns_per_byte: int = 0
    dma_ns_per_op: int = 0
    quarantine_on_fault: bool = False
    trace_io: bool = False

    tcm_size: int = field(default=TCM_SIZE, init=False)
    shm_size: int = field(default=SHM_WINDOW_SIZE, init=False)

    def device(self):
        return get_profile(self.device_profile)

    def validate(self):
        """Raise ValueError with a precise message on any bad field."""
        if not isinstance(self.enclave_count, int) or self.enclave_count < 1:
            raise ValueError(
                f"enclave_count must be >= 1, got {self.enclave_count!r}")
        device = self.device()
        ceiling, binding = max_enclaves(device)
        if self.enclave_count > ceiling:
            raise ValueError(
                f"enclave_count {self.enclave_count} exceeds what {device.name} "
                f"can hold: {ceiling} enclave(s) before running out of "
                f"{binding} resources")
        if ceiling < 2:
            warnings.warn(
                f"device {device.name} fits only {ceiling} enclave(s); the "
                f"platform floor is two concurrently hosted TAs",
                stacklevel=2)
        if self.huk is not None:
            raw = self.huk.strip()
            if len(raw) != 64 or any(c not in "0123456789abcdefABCDEF" for c in raw):
                raise ValueError("huk must be exactly 64 hex characters")
        for name in ("dma_ns_per_byte", "dma_ns_per_op"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0:
                raise ValueError(f"{name} must be a non-negative integer")
        if self.rng_seed is not None and not isinstance(self.rng_seed, int):
            raise ValueError(f"rng_seed must be an integer, got {self.rng_seed!r}")
        return self

    def device_key(self):
        """The device secret this config denotes, already wrapped."""
        from .internal_api import DeviceKey
        if self.huk is not None:
            return DeviceKey(bytes.fromhex(self.huk.strip()))
        seed = self.huk_seed if self.huk_seed is not None else _DEFAULT_HUK_SEED
        return DeviceKey.from_seed(seed)


_BOOL_WORDS = {"1": True, "true": True, "yes": True, "on": True,
               "0": False, "false": False, "no": False, "off": False}


def _parse_bool(key, value):
    try:
        return _BOOL_WORDS[value.lower()]
    except KeyError:
        raise ValueError(f"{key} must be a boolean, got {value!r}") from None


def _parse_int(key, value):
    try:
        return int(value, 0)
    except ValueError:
        raise ValueError(f"{key} must be an integer, got {value!r}") from None


def load_config(path):
    """Parse a key=value config file into a validated SimConfig."""
    config = SimConfig()
    valid = {f.name for f in fields(SimConfig) if f.init}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _FIXED_KEYS:
            raise ValueError(
                f"{path}:{lineno}: {key} is fixed by the design and cannot "
                f"be overridden")
        if key == "device":
            key = "device_profile"
        if key == "dma_delay_model":
            # legacy spelling: "none" or "per-byte:<ns>"
            if value.lower() == "none":
                config.dma_ns_per_byte = 0
                config.dma_ns_per_op = 0
            elif value.lower().startswith("per-byte:"):
                config.dma_ns_per_byte = _parse_int(key, value.split(":", 1)[1])
            else:
                raise ValueError(f"{path}:{lineno}: bad dma_delay_model {value!r}")
            continue
        if key not in valid:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        if key in ("enclave_count", "rng_seed", "dma_ns_per_byte", "dma_ns_per_op"):
            setattr(config, key, _parse_int(key, value))
        elif key in ("quarantine_on_fault", "trace_io"):
            setattr(config, key, _parse_bool(key, value))
        else:
            setattr(config, key, value)
    return config.validate()
