"""Latency bench: five fabric scenarios timed against deterministic cost floors."""

from __future__ import annotations

import statistics
import tempfile
import uuid as uuid_mod
from dataclasses import dataclass, field
from time import perf_counter_ns

from .client_api import Context, Direction, Operation, Value
from .config import SimConfig
from .enclave import TA_KIND_INCREMENT, TA_KIND_SHMEM16
from .fabric import Fabric
from .protocol import IMAGE_HEADER_SIZE, MAX_IMAGE_SIZE, TAImage, encode_image

DEFAULT_REPETITIONS = 100
DEFAULT_NS_PER_BYTE = 1000
DEFAULT_NS_PER_OP = 50000

COLD_OVER_WARM_FLOOR = 10.0
SHM_OVER_RAW_FLOOR = 1.0

_COLD_UUID = uuid_mod.UUID("beac0000-0000-4000-8000-000000000000")
_INC_UUID = uuid_mod.UUID("beac0000-0001-4000-8000-000000000001")
_SHM_UUID = uuid_mod.UUID("beac0000-0002-4000-8000-000000000002")


@dataclass
class ScenarioResult:
    """Raw samples for one scenario."""

    name: str
    samples_ns: list = field(default_factory=list)

    @property
    def count(self):
        return len(self.samples_ns)

    @property
    def mean_ns(self):
        return statistics.fmean(self.samples_ns)

    @property
    def min_ns(self):
        return min(self.samples_ns)

    @property
    def max_ns(self):
        return max(self.samples_ns)


@dataclass
class BenchReport:
    """All scenario results plus the two headline ratios."""

    results: dict
    repetitions: int

    @property
    def cold_over_warm(self):
        return (self.results["cold_open"].mean_ns
                / self.results["warm_open"].mean_ns)

    @property
    def shm_over_raw(self):
        return (self.results["invoke_shm"].mean_ns
                / self.results["invoke_raw"].mean_ns)

    def machine_lines(self):
        """Stable key=value lines for scripted consumption."""
        lines = []
        for result in self.results.values():
            lines.append(
                f"scenario={result.name} n={result.count} "
                f"mean_ns={result.mean_ns:.0f} min_ns={result.min_ns} "
                f"max_ns={result.max_ns}")
        lines.append(f"ratio=cold_over_warm value={self.cold_over_warm:.2f} "
                     f"floor={COLD_OVER_WARM_FLOOR}")
        lines.append(f"ratio=shm_over_raw value={self.shm_over_raw:.2f} "
                     f"floor={SHM_OVER_RAW_FLOOR}")
        return lines

    def render_text(self):
        """Human-readable table followed by the machine lines."""
        out = [f"latency bench, {self.repetitions} repetitions per scenario",
               "",
               f"{'scenario':<12} {'mean':>12} {'min':>12} {'max':>12}"]
        for result in self.results.values():
            out.append(f"{result.name:<12} {_fmt(result.mean_ns):>12} "
                       f"{_fmt(result.min_ns):>12} {_fmt(result.max_ns):>12}")
        out += ["",
                f"cold/warm open ratio: {self.cold_over_warm:.1f} "
                f"(floor {COLD_OVER_WARM_FLOOR:.0f})",
                f"shm/raw invoke ratio: {self.shm_over_raw:.2f} "
                f"(floor {SHM_OVER_RAW_FLOOR:.0f})",
                ""]
        out += self.machine_lines()
        return "\n".join(out)


def _fmt(ns):
    if ns >= 1_000_000:
        return f"{ns / 1_000_000:.2f} ms"
    return f"{ns / 1000:.1f} us"


def _timed(samples, call):
    start = perf_counter_ns()
    value = call()
    samples.append(perf_counter_ns() - start)
    return value


def run_bench(repetitions=DEFAULT_REPETITIONS,
              per_byte_ns=DEFAULT_NS_PER_BYTE,
              per_op_ns=DEFAULT_NS_PER_OP,
              seed=0,
              storage_dir=None):
    """Run all five scenarios on a private fabric; returns a BenchReport."""
    storage_dir = storage_dir or tempfile.mkdtemp(prefix="teefab-bench-")
    config = SimConfig(enclave_count=2, storage_dir=storage_dir, rng_seed=seed,
                       dma_ns_per_byte=per_byte_ns, dma_ns_per_op=per_op_ns)
    fabric = Fabric(config)
    # Full-size image so a cold load moves a realistic amount of data.
    cold_image = encode_image(TAImage(
        _COLD_UUID, TA_KIND_INCREMENT,
        bytes(MAX_IMAGE_SIZE - IMAGE_HEADER_SIZE)))
    inc_image = encode_image(TAImage(_INC_UUID, TA_KIND_INCREMENT))
    shm_image = encode_image(TAImage(_SHM_UUID, TA_KIND_SHMEM16))
    results = {}
    try:
        with Context(fabric) as context:
            results["cold_open"] = _bench_cold_open(
                fabric, context, cold_image, repetitions)
            results["warm_open"] = _bench_warm_open(
                fabric, context, cold_image, repetitions)
            results["invoke_raw"] = _bench_invoke_raw(
                fabric, context, inc_image, repetitions)
            results["invoke_shm"] = _bench_invoke_shm(
                fabric, context, shm_image, repetitions)
            results["close"] = _bench_close(
                fabric, context, cold_image, repetitions)
    finally:
        fabric.shutdown()
    return BenchReport(results=results, repetitions=repetitions)


def _bench_cold_open(fabric, context, image, repetitions):
    result = ScenarioResult("cold_open")
    for _ in range(repetitions):
        loads_before = fabric.load_count
        session = _timed(result.samples_ns,
                         lambda: context.open_session(_COLD_UUID, image))
        if fabric.load_count != loads_before + 1:
            raise AssertionError("cold open must run the loader exactly once")
        session.close()
        fabric.wait_idle()
    return result


def _bench_warm_open(fabric, context, image, repetitions):
    result = ScenarioResult("warm_open")
    with context.open_session(_COLD_UUID, image):
        loads_before = fabric.load_count
        for _ in range(repetitions):
            session = _timed(result.samples_ns,
                             lambda: context.open_session(_COLD_UUID, image))
            session.close()
        if fabric.load_count != loads_before:
            raise AssertionError("warm opens must never run the loader")
    fabric.wait_idle()
    return result


def _bench_invoke_raw(fabric, context, image, repetitions):
    result = ScenarioResult("invoke_raw")
    with context.open_session(_INC_UUID, image) as session:
        for value in range(repetitions):
            reply = _timed(
                result.samples_ns,
                lambda: session.invoke_command(
                    0, Operation(Value(Direction.INOUT, value))))
            if reply.value(0)[0] != value + 1:
                raise AssertionError("increment reply is wrong")
    fabric.wait_idle()
    return result


def _bench_invoke_shm(fabric, context, image, repetitions):
    result = ScenarioResult("invoke_shm")
    with context.open_session(_SHM_UUID, image) as session:
        block = session.allocate_shared_memory(16, Direction.OUT)
        for _ in range(repetitions):
            reply = _timed(result.samples_ns,
                           lambda: session.invoke_command(0, Operation(block)))
            if not reply.success or block.read() != bytes(range(16)):
                raise AssertionError("shared-memory reply is wrong")
    fabric.wait_idle()
    return result


def _bench_close(fabric, context, image, repetitions):
    result = ScenarioResult("close")
    with context.open_session(_COLD_UUID, image):
        for _ in range(repetitions):
            session = context.open_session(_COLD_UUID, image)
            _timed(result.samples_ns, session.close)
    fabric.wait_idle()
    return result
