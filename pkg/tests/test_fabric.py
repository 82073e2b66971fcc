"""Fabric agents: staging, loads, slot lifecycle, dispatch, observability."""

import threading
import time

import pytest

from conftest import make_image
from teefab.enclave import (
    TA_KIND_ECHO,
    TA_KIND_INCREMENT,
    TrustedApp,
    register_ta_kind,
)
from teefab.fabric import CmRegion, DelayModel
from teefab.protocol import (
    MAX_IMAGE_SIZE,
    AccessDeniedError,
    ImageFormatError,
    ImageSizeError,
    LoadStatus,
    MailboxFrame,
    OperationId,
    OutOfEnclavesError,
    OutOfMemoryError,
    ParamKind,
    ReturnCode,
)

TA_KIND_TRIPWIRE = 245


class TripwireTa(TrustedApp):
    """Faults on purpose so quarantine behaviour is testable."""

    def invoke_command(self, session, cmd_id, params):
        raise RuntimeError("tripwire")


register_ta_kind(TA_KIND_TRIPWIRE, TripwireTa)


def open_frame():
    return MailboxFrame.build(OperationId.OPEN, 0)


def close_frame(session_id):
    return MailboxFrame.build(OperationId.CLOSE, session_id)


def open_ta(fabric, ta_kind, tag=0, payload=b""):
    """Stage, load and OPEN one TA; returns (slot, session_id)."""
    ta_uuid, image = make_image(ta_kind, tag=tag, payload=payload)
    offset, size = fabric.cm_stage(image)
    slot, _fresh = fabric.manager_open(ta_uuid, offset, size)
    reply = fabric.comm_dispatch(slot, open_frame())
    assert reply.code is ReturnCode.SUCCESS
    fabric.cm_release(offset)
    return slot, reply.session_id


def test_cold_then_warm_open(fabric):
    ta_uuid, image = make_image(TA_KIND_INCREMENT)
    offset, size = fabric.cm_stage(image)
    slot, fresh = fabric.manager_open(ta_uuid, offset, size)
    assert fresh and fabric.load_count == 1
    again, fresh = fabric.manager_open(ta_uuid, offset, size)
    assert again == slot and not fresh
    assert fabric.load_count == 1
    assert fabric.registers.history[-2:] == [LoadStatus.LOADED, LoadStatus.IDLE]
    fabric.release_pending(slot)
    fabric.release_pending(slot)
    fabric.wait_idle()
    assert fabric.slot_snapshot()[slot]["state"] == "FREE"


def test_oversized_image_rejected(fabric):
    ta_uuid, _ = make_image(TA_KIND_INCREMENT)
    with pytest.raises(ImageSizeError):
        fabric.manager_open(ta_uuid, 0, MAX_IMAGE_SIZE + 1)
    assert LoadStatus.ERR_SIZE in fabric.registers.history
    assert fabric.registers.status is LoadStatus.IDLE


def test_malformed_image_rejected(fabric):
    ta_uuid, _ = make_image(TA_KIND_INCREMENT)
    offset, size = fabric.cm_stage(b"not an image at all" * 4)
    with pytest.raises(ImageFormatError):
        fabric.manager_open(ta_uuid, offset, size)
    assert LoadStatus.ERR_FORMAT in fabric.registers.history
    assert fabric.slot_snapshot()[0]["state"] == "FREE"


def test_image_uuid_must_match_request(fabric):
    _, image = make_image(TA_KIND_INCREMENT, tag=1)
    wrong_uuid, _ = make_image(TA_KIND_INCREMENT, tag=2)
    offset, size = fabric.cm_stage(image)
    with pytest.raises(ImageFormatError):
        fabric.manager_open(wrong_uuid, offset, size)


def test_unregistered_kind_frees_slot(fabric):
    ta_uuid, image = make_image(209)
    offset, size = fabric.cm_stage(image)
    with pytest.raises(ImageFormatError):
        fabric.manager_open(ta_uuid, offset, size)
    assert all(row["state"] == "FREE" for row in fabric.slot_snapshot())


def test_fabric_full(fabric):
    open_ta(fabric, TA_KIND_INCREMENT, tag=1)
    open_ta(fabric, TA_KIND_ECHO, tag=2)
    ta_uuid, image = make_image(TA_KIND_INCREMENT, tag=3)
    offset, size = fabric.cm_stage(image)
    with pytest.raises(OutOfEnclavesError):
        fabric.manager_open(ta_uuid, offset, size)


def test_close_frees_slot_async(fabric):
    slot, sid = open_ta(fabric, TA_KIND_INCREMENT)
    reply = fabric.comm_dispatch(slot, close_frame(sid))
    assert reply.code is ReturnCode.SUCCESS
    fabric.wait_idle()
    row = fabric.slot_snapshot()[slot]
    assert row["state"] == "FREE" and row["uuid"] is None
    assert not fabric.loaded_tas
    fabric.audit()


def test_release_pending_without_open(fabric):
    ta_uuid, image = make_image(TA_KIND_INCREMENT)
    offset, size = fabric.cm_stage(image)
    slot, _ = fabric.manager_open(ta_uuid, offset, size)
    fabric.release_pending(slot)
    fabric.wait_idle()
    assert fabric.slot_snapshot()[slot]["state"] == "FREE"


def test_dispatch_to_free_slot_denied(fabric):
    with pytest.raises(AccessDeniedError):
        fabric.comm_dispatch(0, open_frame())


def test_concurrent_same_uuid_single_load(fabric):
    ta_uuid, image = make_image(TA_KIND_INCREMENT)
    offset, size = fabric.cm_stage(image)
    results, errors = [], []

    def opener():
        try:
            results.append(fabric.manager_open(ta_uuid, offset, size))
        except Exception as exc:
            errors.append(exc)

    threads = [threading.Thread(target=opener) for _ in range(6)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    assert not errors
    assert fabric.load_count == 1
    slots = {slot for slot, _ in results}
    assert len(slots) == 1
    assert sum(1 for _, fresh in results if fresh) == 1
    fabric.audit()


def test_quarantine_after_fault(fabric_factory):
    fabric = fabric_factory(quarantine_on_fault=True)
    slot, sid = open_ta(fabric, TA_KIND_TRIPWIRE)
    reply = fabric.comm_dispatch(slot, MailboxFrame.build(
        OperationId.INVOKE, sid, [], cmd_id=0))
    assert reply.code is ReturnCode.ERROR_GENERIC
    with pytest.raises(AccessDeniedError):
        fabric.comm_dispatch(slot, close_frame(sid))
    fabric.manager_close(slot)
    assert fabric.slot_snapshot()[slot]["state"] == "FREE"


def test_fault_not_quarantined_by_default(fabric):
    slot, sid = open_ta(fabric, TA_KIND_TRIPWIRE)
    reply = fabric.comm_dispatch(slot, MailboxFrame.build(
        OperationId.INVOKE, sid, [], cmd_id=0))
    assert reply.code is ReturnCode.ERROR_GENERIC
    assert fabric.comm_dispatch(slot, close_frame(sid)).code \
        is ReturnCode.SUCCESS


def test_shm_round_trip_and_gating(fabric):
    slot, _sid = open_ta(fabric, TA_KIND_ECHO)
    fabric.shm_write(slot, 64, b"through the window")
    assert fabric.shm_read(slot, 64, 18) == b"through the window"
    other = 1 - slot
    with pytest.raises(AccessDeniedError):
        fabric.shm_write(other, 0, b"x")


def test_events_record_lifecycle(fabric):
    slot, sid = open_ta(fabric, TA_KIND_INCREMENT)
    fabric.comm_dispatch(slot, close_frame(sid))
    fabric.wait_idle()
    text = "\n".join(fabric.events())
    for expected in ("event=boot", "event=stage", "event=load",
                     "event=open", "event=dispatch", "event=close"):
        assert expected in text


def test_traces_off_by_default(fabric):
    slot, _sid = open_ta(fabric, TA_KIND_INCREMENT)
    fabric.shm_write(slot, 0, b"quiet")
    assert fabric.traces() == ()


def test_traces_capture_io(fabric_factory):
    fabric = fabric_factory(trace_io=True)
    slot, sid = open_ta(fabric, TA_KIND_INCREMENT)
    fabric.shm_write(slot, 8, b"loud")
    fabric.shm_read(slot, 8, 4)
    fabric.comm_dispatch(slot, MailboxFrame.build(
        OperationId.INVOKE, sid, [(ParamKind.VALUE_INOUT, 1, 0)], cmd_id=0))
    kinds = [kind for kind, _, _ in fabric.traces()]
    assert "shm_write" in kinds and "shm_read" in kinds
    assert kinds.count("dispatch") >= 2
    write = next(p for k, s, p in fabric.traces() if k == "shm_write")
    assert write["offset"] == 8 and write["data"] == b"loud"


def test_uart_files_written(fabric_factory, tmp_path):
    uart_dir = tmp_path / "uart"
    fabric = fabric_factory(uart_dir=str(uart_dir))
    slot, _sid = open_ta(fabric, TA_KIND_INCREMENT)
    log = uart_dir / f"enclave{slot}.log"
    assert log.exists() and "boot: ta" in log.read_text()


def test_cm_region_alloc_cycle():
    cm = CmRegion(capacity=4096)
    a = cm.alloc(100)
    b = cm.alloc(200)
    assert a != b
    cm.write(a, b"A" * 100)
    cm.write(b, b"B" * 200)
    assert cm.read(a, 100) == b"A" * 100
    cm.free(a)
    c = cm.alloc(50)
    cm.write(c, b"C" * 50)
    assert cm.read(b, 200) == b"B" * 200
    with pytest.raises(OutOfMemoryError):
        cm.alloc(4096)
    with pytest.raises(OutOfMemoryError):
        cm.read(4090, 100)
    with pytest.raises(OutOfMemoryError):
        CmRegion(capacity=64).alloc(65)


def test_cm_free_unknown_offset():
    cm = CmRegion(capacity=1024)
    with pytest.raises(OutOfMemoryError):
        cm.free(512)


def test_delay_model_busy_wait():
    model = DelayModel(per_byte_ns=100, per_op_ns=300_000)
    start = time.perf_counter_ns()
    model.charge(1000)
    elapsed = time.perf_counter_ns() - start
    assert elapsed >= 400_000
    noop = DelayModel()
    start = time.perf_counter_ns()
    noop.charge(10_000_000)
    assert time.perf_counter_ns() - start < 50_000_000


def test_mailbox_transfers_are_costed(fabric_factory):
    fabric = fabric_factory(dma_ns_per_op=2_000_000)
    slot, sid = open_ta(fabric, TA_KIND_INCREMENT)
    start = time.perf_counter_ns()
    fabric.comm_dispatch(slot, MailboxFrame.build(
        OperationId.INVOKE, sid, [(ParamKind.VALUE_INOUT, 1, 0)], cmd_id=0))
    elapsed = time.perf_counter_ns() - start
    # One request and one reply mailbox copy, 2ms per transfer.
    assert elapsed >= 4_000_000