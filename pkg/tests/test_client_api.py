"""Untrusted-side API: contexts, sessions, operations, shared memory."""

import pytest

from conftest import make_image
from teefab.client_api import (
    Context,
    Direction,
    Operation,
    SharedMemory,
    Value,
)
from teefab.enclave import TA_KIND_ECHO, TA_KIND_INCREMENT, TA_KIND_SHMEM16
from teefab.protocol import (
    SHM_WINDOW_SIZE,
    AccessDeniedError,
    BadParametersError,
    OutOfMemoryError,
    ReturnCode,
    ShortBufferError,
    TeeError,
)


@pytest.fixture
def context(fabric):
    with Context(fabric) as ctx:
        yield ctx


def open_ta(context, ta_kind, tag=0):
    ta_uuid, image = make_image(ta_kind, tag=tag)
    return context.open_session(ta_uuid, image)


def test_open_invoke_close(context):
    session = open_ta(context, TA_KIND_INCREMENT)
    assert session.is_open
    result = session.invoke_command(0, Operation(Value(Direction.INOUT, 41)))
    assert result.success and result.value(0) == (42, 0)
    session.close()
    assert not session.is_open


def test_value_out_ignores_ree_words(context):
    """OUT values travel to the TA as zeros regardless of REE contents."""
    session = open_ta(context, TA_KIND_ECHO)
    result = session.invoke_command(0, Operation(
        Value(Direction.IN, 123, 456),
        Value(Direction.OUT, 0xDEAD, 0xBEEF)))
    assert result.value(1) == (123, 456)
    session.close()


def test_value_direction_gates_result_reads(context):
    session = open_ta(context, TA_KIND_ECHO)
    result = session.invoke_command(0, Operation(
        Value(Direction.IN, 9, 9),
        Value(Direction.OUT, 0, 0)))
    with pytest.raises(BadParametersError):
        result.value(0)
    session.close()


def test_shared_memory_round_trip(context):
    session = open_ta(context, TA_KIND_SHMEM16)
    block = session.allocate_shared_memory(16, Direction.OUT)
    block.write(b"\xff" * 16)
    result = session.invoke_command(0, Operation(block))
    assert result.success
    assert block.read() == bytes(range(16))
    assert result.memref_length(0) == 16
    session.close()


def test_out_window_is_scrubbed_before_dispatch(fabric_factory):
    """REE garbage in an OUT block never reaches the enclave window."""
    fabric = fabric_factory(trace_io=True)
    with Context(fabric) as ctx:
        session = open_ta(ctx, TA_KIND_SHMEM16)
        block = session.allocate_shared_memory(16, Direction.OUT)
        block.write(b"\xa7" * 16)
        session.invoke_command(0, Operation(block))
        writes = [p["data"] for k, _, p in fabric.traces() if k == "shm_write"]
        assert all(b"\xa7" not in data for data in writes)
        session.close()


def test_short_buffer_reports_needed_length(context):
    session = open_ta(context, TA_KIND_SHMEM16)
    block = session.allocate_shared_memory(8, Direction.OUT)
    result = session.invoke_command(0, Operation(block))
    assert result.code is ReturnCode.ERROR_SHORT_BUFFER
    assert not result.success
    assert result.memref_length(0) == 16
    assert block.read() == bytes(8)
    with pytest.raises(ShortBufferError):
        result.raise_for_code()
    session.close()


def test_inout_block_copies_both_ways(context):
    session = open_ta(context, TA_KIND_ECHO)
    block = session.allocate_shared_memory(10, Direction.INOUT)
    block.write(b"0123456789")
    result = session.invoke_command(1, Operation(block))
    assert result.success
    assert block.read() == b"9876543210"
    session.close()


def test_window_allocator_exhaustion(context):
    session = open_ta(context, TA_KIND_ECHO)
    session.allocate_shared_memory(SHM_WINDOW_SIZE - 8, Direction.INOUT)
    session.allocate_shared_memory(8, Direction.INOUT)
    with pytest.raises(OutOfMemoryError):
        session.allocate_shared_memory(1, Direction.INOUT)
    session.close()


def test_zero_length_block_is_legal(context):
    session = open_ta(context, TA_KIND_ECHO)
    block = session.allocate_shared_memory(0, Direction.INOUT)
    result = session.invoke_command(1, Operation(block))
    assert result.success
    session.close()


def test_operation_rejects_too_many_params():
    with pytest.raises(BadParametersError):
        Operation(*(Value(Direction.IN, 0) for _ in range(5)))


def test_value_word_range_checked():
    with pytest.raises(BadParametersError):
        Value(Direction.IN, 1 << 32)


def test_closed_session_refuses_work(context):
    session = open_ta(context, TA_KIND_INCREMENT)
    session.close()
    session.close()  # double close is a no-op
    with pytest.raises(TeeError):
        session.invoke_command(0, Operation(Value(Direction.INOUT, 1)))
    with pytest.raises(TeeError):
        session.allocate_shared_memory(4, Direction.INOUT)


def test_open_failure_raises_mapped_error(context):
    ta_uuid, image = make_image(TA_KIND_INCREMENT, tag=7)
    bad = bytearray(image)
    bad[0] ^= 0xFF
    with pytest.raises(TeeError):
        context.open_session(ta_uuid, bytes(bad))


def test_open_rejects_uuid_mismatch(context):
    ta_uuid, _ = make_image(TA_KIND_INCREMENT, tag=8)
    _, image = make_image(TA_KIND_INCREMENT, tag=9)
    with pytest.raises(TeeError):
        context.open_session(ta_uuid, image)


def test_staging_cache_reuses_cm_offset(fabric):
    ta_uuid, image = make_image(TA_KIND_INCREMENT)
    with Context(fabric) as ctx:
        first = ctx.open_session(ta_uuid, image)
        second = ctx.open_session(ta_uuid, image)
        stage_events = [e for e in fabric.events() if e.startswith("event=stage")]
        assert len(stage_events) == 1
        first.close()
        second.close()


def test_sessions_share_one_warm_slot(fabric):
    ta_uuid, image = make_image(TA_KIND_INCREMENT)
    with Context(fabric) as ctx:
        first = ctx.open_session(ta_uuid, image)
        second = ctx.open_session(ta_uuid, image)
        assert fabric.load_count == 1
        assert first.session_id != second.session_id
        first.close()
        second.close()
    fabric.wait_idle()
    assert all(row["state"] == "FREE" for row in fabric.slot_snapshot())


def test_context_close_releases_resources(fabric):
    ta_uuid, image = make_image(TA_KIND_INCREMENT)
    ctx = Context(fabric)
    session = ctx.open_session(ta_uuid, image)
    session.close()
    ctx.close()
    fabric.wait_idle()
    release_events = [e for e in fabric.events()
                      if e.startswith("event=release")]
    assert release_events


def test_session_context_manager(context):
    with open_ta(context, TA_KIND_INCREMENT) as session:
        result = session.invoke_command(
            0, Operation(Value(Direction.INOUT, 1)))
        assert result.value(0) == (2, 0)
    assert not session.is_open


def test_memref_direction_in_skips_copy_back(context):
    session = open_ta(context, TA_KIND_ECHO)
    block = session.allocate_shared_memory(6, Direction.IN)
    block.write(b"abcdef")
    result = session.invoke_command(1, Operation(block))
    assert result.success
    # The TA reversed its window slice, but an IN block is never copied back.
    assert block.read() == b"abcdef"
    session.close()


def test_invoke_on_unknown_command_maps_error(context):
    session = open_ta(context, TA_KIND_INCREMENT)
    result = session.invoke_command(42, Operation(Value(Direction.INOUT, 1)))
    assert result.code is ReturnCode.ERROR_BAD_PARAMETERS
    with pytest.raises(BadParametersError):
        result.raise_for_code()
    session.close()
