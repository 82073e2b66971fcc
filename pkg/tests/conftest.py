"""Shared fixtures: disposable fabrics and deterministic TA images."""

import sys
import uuid as uuid_mod
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from teefab.config import SimConfig
from teefab.fabric import Fabric
from teefab.protocol import TAImage, encode_image


def make_image(ta_kind, tag=0, payload=b""):
    """Deterministic (uuid, image bytes) for a TA kind and tag."""
    ta_uuid = uuid_mod.UUID(int=(ta_kind << 64) | tag, version=4)
    return ta_uuid, encode_image(TAImage(ta_uuid, ta_kind, payload))


@pytest.fixture
def fabric_factory(tmp_path):
    built = []

    def build(**overrides):
        overrides.setdefault("enclave_count", 2)
        overrides.setdefault("storage_dir",
                             str(tmp_path / f"store{len(built)}"))
        overrides.setdefault("rng_seed", 1000 + len(built))
        fabric = Fabric(SimConfig(**overrides))
        built.append(fabric)
        return fabric

    yield build
    for fabric in built:
        fabric.shutdown()


@pytest.fixture
def fabric(fabric_factory):
    return fabric_factory()
