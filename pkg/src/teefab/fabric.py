"""Emulated fabric: the manager, loader and communication agent blocks."""

from __future__ import annotations

import queue
import threading
import time
import uuid as uuid_mod
from enum import IntEnum
from pathlib import Path

from .config import SimConfig
from .enclave import EnclaveRuntime, EnclaveResetError
from .internal_api import Csprng, MonotonicCounter, SealedStorage, TeeServices
from .protocol import (
    CM_ALIGNMENT,
    CM_REGION_SIZE,
    MAILBOX_WORDS,
    MAX_IMAGE_SIZE,
    AccessDeniedError,
    ImageFormatError,
    ImageSizeError,
    LoadStatus,
    ManagerRegisters,
    OperationId,
    OutOfEnclavesError,
    OutOfMemoryError,
    ReturnCode,
    decode_frame,
    decode_image,
    decode_reply,
    encode_frame,
)

_MAILBOX_BYTES = MAILBOX_WORDS * 4


class SlotState(IntEnum):
    FREE = 0
    LOADING = 1
    TAKEN = 2
    CLEANING = 3


class DelayModel:
    """Transfer-cost model: a busy-wait per fabric copy operation."""

    def __init__(self, per_byte_ns=0, per_op_ns=0):
        self.per_byte_ns = int(per_byte_ns)
        self.per_op_ns = int(per_op_ns)

    def charge(self, nbytes):
        cost = self.per_op_ns + nbytes * self.per_byte_ns
        if cost <= 0:
            return
        deadline = time.perf_counter_ns() + cost
        while time.perf_counter_ns() < deadline:
            pass


class CmRegion:
    """Flat staging region with a 64-byte-aligned first-fit allocator."""

    def __init__(self, capacity=CM_REGION_SIZE):
        self._buf = bytearray(capacity)
        self._allocs = {}
        self._lock = threading.Lock()

    def alloc(self, size):
        if size < 0:
            raise OutOfMemoryError(f"negative staging size {size}")
        span = max(size, 1)  # zero-size stakes out one aligned slot
        with self._lock:
            cursor = 0
            for offset in sorted(self._allocs):
                if offset - cursor >= span:
                    break
                cursor = _align(offset + self._allocs[offset])
            if cursor + span > len(self._buf):
                raise OutOfMemoryError("staging region exhausted")
            self._allocs[cursor] = span
            return cursor

    def free(self, offset):
        with self._lock:
            if self._allocs.pop(offset, None) is None:
                raise OutOfMemoryError(f"no staging block at offset {offset}")

    def write(self, offset, data):
        data = bytes(data)
        self._check(offset, len(data))
        self._buf[offset:offset + len(data)] = data

    def read(self, offset, length):
        self._check(offset, length)
        return bytes(self._buf[offset:offset + length])

    def _check(self, offset, length):
        if offset < 0 or length < 0 or offset + length > len(self._buf):
            raise OutOfMemoryError(
                f"staging access [{offset}, +{length}) out of range")


def _align(offset):
    return (offset + CM_ALIGNMENT - 1) & ~(CM_ALIGNMENT - 1)


class EnclaveSlot:
    """Bookkeeping for one enclave: state, occupancy, dispatch queueing."""

    def __init__(self, index, runtime):
        self.index = index
        self.runtime = runtime
        self.tcm_base = f"tcm{index}"
        self.state = SlotState.FREE
        self.uuid = None
        self.sessions = 0
        self.pending = 0
        self.lock = threading.RLock()


class Fabric:
    """The three agent blocks plus slot bookkeeping and the event log."""

    def __init__(self, config=None):
        self.config = (config or SimConfig()).validate()
        storage_root = Path(self.config.storage_dir)
        self.services = TeeServices(
            rng=Csprng(seed=self.config.rng_seed),
            storage=SealedStorage(storage_root, self.config.device_key()),
            counter=MonotonicCounter())
        self.delay = DelayModel(self.config.dma_ns_per_byte,
                                self.config.dma_ns_per_op)
        self.registers = ManagerRegisters()
        self.cm = CmRegion()
        uart_dir = self.config.uart_dir
        if uart_dir is not None:
            Path(uart_dir).mkdir(parents=True, exist_ok=True)
        self._slots = []
        for index in range(self.config.enclave_count):
            runtime = EnclaveRuntime(index, self.services)
            if uart_dir is not None:
                runtime.uart.attach_file(Path(uart_dir) / f"enclave{index}.log")
            self._slots.append(EnclaveSlot(index, runtime))
        self.loaded_tas = {}
        self._loading = set()
        self._manager = threading.Condition()
        self._load_count = 0
        self._events = []
        self._traces = []
        self._log_lock = threading.Lock()
        self._cleanup_queue = queue.Queue()
        self._cleaner = threading.Thread(
            target=self._cleanup_worker, name="fabric-cleaner", daemon=True)
        self._cleaner.start()
        self._log("boot", slots=len(self._slots),
                  device=self.config.device_profile)

    # ---- staging (CM region) ----

    def cm_stage(self, image_bytes):
        """Stage a TA binary; returns (offset, size) inside the CM region."""
        data = bytes(image_bytes)
        offset = self.cm.alloc(len(data))
        self.cm.write(offset, data)
        self._log("stage", offset=offset, size=len(data))
        return offset, len(data)

    def cm_release(self, offset):
        self.cm.free(offset)
        self._log("release", offset=offset)

    # ---- manager agent ----

    def manager_open(self, ta_uuid, cm_addr, size):
        """Find or create the slot hosting ta_uuid; retains the slot for one
        follow-up OPEN dispatch. Returns (slot_index, fresh_load)."""
        with self._manager:
            while True:
                slot = self.loaded_tas.get(ta_uuid)
                if slot is not None:
                    self._slots[slot].pending += 1
                    self._log("open", slot=slot, uuid=ta_uuid, warm=1)
                    return slot, False
                if ta_uuid not in self._loading:
                    break
                # Another caller is loading this TA; join its outcome.
                self._manager.wait()
            self.registers.uuid = ta_uuid
            self.registers.addr = cm_addr
            self.registers.size = size
            if size > MAX_IMAGE_SIZE:
                self.registers.set_status(LoadStatus.ERR_SIZE)
                self.registers.set_status(LoadStatus.IDLE)
                raise ImageSizeError(
                    f"image of {size} bytes exceeds the {MAX_IMAGE_SIZE}-byte "
                    f"private memory")
            try:
                image = decode_image(self.cm.read(cm_addr, size))
            except (ImageFormatError, ImageSizeError):
                self.registers.set_status(LoadStatus.ERR_FORMAT)
                self.registers.set_status(LoadStatus.IDLE)
                raise
            if image.uuid != ta_uuid:
                self.registers.set_status(LoadStatus.ERR_FORMAT)
                self.registers.set_status(LoadStatus.IDLE)
                raise ImageFormatError(
                    f"image uuid {image.uuid} does not match requested "
                    f"{ta_uuid}")
            slot = self._acquire_free_slot()
            self._loading.add(ta_uuid)
            self.registers.set_status(LoadStatus.LOADING)
        record = self._slots[slot]
        try:
            self._loader_copy(record, cm_addr, size)
            record.runtime.deassert_reset()
            if record.runtime.snapshot()["ta_kind"] is None:
                raise ImageFormatError(
                    f"no trusted application registered for the image in "
                    f"slot {slot}")
        except Exception:
            record.runtime.assert_reset()
            with self._manager:
                record.state = SlotState.FREE
                self._loading.discard(ta_uuid)
                self.registers.set_status(LoadStatus.ERR_FORMAT)
                self.registers.set_status(LoadStatus.IDLE)
                self._manager.notify_all()
            raise
        with self._manager:
            record.state = SlotState.TAKEN
            record.uuid = ta_uuid
            record.pending = 1
            self.loaded_tas[ta_uuid] = slot
            self._loading.discard(ta_uuid)
            self.registers.set_status(LoadStatus.LOADED)
            self.registers.set_status(LoadStatus.IDLE)
            self._manager.notify_all()
        self._log("open", slot=slot, uuid=ta_uuid, warm=0)
        return slot, True

    def _acquire_free_slot(self):
        """Lowest-index free slot; waits out in-flight cleanups before
        declaring the fabric full. Caller holds the manager lock."""
        while True:
            for record in self._slots:
                if record.state is SlotState.FREE:
                    record.state = SlotState.LOADING
                    return record.index
            if not any(r.state is SlotState.CLEANING for r in self._slots):
                raise OutOfEnclavesError("no free enclave slot")
            self._manager.wait()

    def _loader_copy(self, record, cm_addr, size):
        """Loader agent DMA: CM bytes land at TCM offset 0."""
        data = self.cm.read(cm_addr, size)
        start = time.perf_counter_ns()
        self.delay.charge(len(data))
        record.runtime.load_image(data)
        with self._manager:
            self._load_count += 1
        self._log("load", slot=record.index, size=size,
                  dur_ns=time.perf_counter_ns() - start)

    def manager_close(self, slot_index):
        """Tear one slot down: reset, zeroize, mark free. Idempotent."""
        record = self._slots[slot_index]
        with self._manager:
            if record.state is SlotState.FREE:
                return
            if record.uuid is not None:
                self.loaded_tas.pop(record.uuid, None)
            record.state = SlotState.CLEANING
        record.runtime.assert_reset()
        with self._manager:
            record.state = SlotState.FREE
            record.uuid = None
            record.sessions = 0
            record.pending = 0
            self._manager.notify_all()
        self._log("close", slot=slot_index)

    def release_pending(self, slot_index):
        """Drop one open-retain; may trigger cleanup of an unused slot."""
        record = self._slots[slot_index]
        with self._manager:
            record.pending = max(0, record.pending - 1)
        self._maybe_cleanup(record)

    def _maybe_cleanup(self, record):
        with self._manager:
            if (record.state is SlotState.TAKEN
                    and record.sessions == 0 and record.pending == 0):
                if record.uuid is not None:
                    self.loaded_tas.pop(record.uuid, None)
                record.state = SlotState.CLEANING
                self._cleanup_queue.put(record.index)

    def _cleanup_worker(self):
        while True:
            slot_index = self._cleanup_queue.get()
            try:
                if slot_index is None:
                    return
                record = self._slots[slot_index]
                record.runtime.assert_reset()
                with self._manager:
                    record.state = SlotState.FREE
                    record.uuid = None
                    record.sessions = 0
                    record.pending = 0
                    self._manager.notify_all()
                self._log("close", slot=slot_index)
            finally:
                self._cleanup_queue.task_done()

    # ---- communication agent ----

    def comm_dispatch(self, slot_index, frame):
        """Copy a frame to the slot mailbox, ring INT, return the reply."""
        record = self._slots[slot_index]
        with record.lock:
            if record.state is not SlotState.TAKEN:
                raise AccessDeniedError(f"slot {slot_index} is not taken")
            if (self.config.quarantine_on_fault
                    and record.runtime.faulted):
                raise AccessDeniedError(
                    f"slot {slot_index} is quarantined after a fault")
            words = encode_frame(frame)
            start = time.perf_counter_ns()
            self.delay.charge(_MAILBOX_BYTES)
            try:
                reply_words = record.runtime.deliver(words)
            except EnclaveResetError:
                raise AccessDeniedError(
                    f"slot {slot_index} was reset mid-request") from None
            self.delay.charge(_MAILBOX_BYTES)
            reply = decode_reply(reply_words)
            if self.config.trace_io:
                self._trace("dispatch", slot_index,
                            request=words, reply=reply_words)
            self._log("dispatch", slot=slot_index, op=frame.operation.name,
                      cmd=frame.cmd_id, code=reply.code.name,
                      dur_ns=time.perf_counter_ns() - start)
        if reply.code is ReturnCode.SUCCESS:
            if frame.operation is OperationId.OPEN:
                with self._manager:
                    record.pending = max(0, record.pending - 1)
                    record.sessions += 1
            elif frame.operation is OperationId.CLOSE:
                with self._manager:
                    record.sessions = max(0, record.sessions - 1)
                self._maybe_cleanup(record)
        return reply

    def exchange(self, slot_index):
        """Context manager serializing a multi-step request on one slot."""
        return self._slots[slot_index].lock

    def shm_write(self, slot_index, offset, data):
        """REE copy into the slot's shared window (costed transfer)."""
        record = self._slots[slot_index]
        with record.lock:
            if record.state is not SlotState.TAKEN:
                raise AccessDeniedError(f"slot {slot_index} is not taken")
            data = bytes(data)
            self.delay.charge(len(data))
            record.runtime.window.write(offset, data)
            if self.config.trace_io:
                self._trace("shm_write", slot_index, offset=offset, data=data)

    def shm_read(self, slot_index, offset, length):
        """REE copy out of the slot's shared window (costed transfer)."""
        record = self._slots[slot_index]
        with record.lock:
            if record.state is not SlotState.TAKEN:
                raise AccessDeniedError(f"slot {slot_index} is not taken")
            self.delay.charge(length)
            data = record.runtime.window.read(offset, length)
            if self.config.trace_io:
                self._trace("shm_read", slot_index, offset=offset, data=data)
            return data

    # ---- observability ----

    def _log(self, event, **fields):
        parts = [f"event={event}"]
        for key, value in fields.items():
            parts.append(f"{key}={value}")
        with self._log_lock:
            self._events.append(" ".join(parts))

    def _trace(self, kind, slot_index, **payload):
        with self._log_lock:
            self._traces.append((kind, slot_index, payload))

    def events(self):
        with self._log_lock:
            return tuple(self._events)

    def traces(self):
        with self._log_lock:
            return tuple(self._traces)

    @property
    def load_count(self):
        with self._manager:
            return self._load_count

    def slot_snapshot(self):
        with self._manager:
            return [{
                "slot": r.index,
                "tcm_base": r.tcm_base,
                "state": r.state.name,
                "uuid": None if r.uuid is None else str(r.uuid),
                "sessions": r.sessions,
                "pending": r.pending,
            } for r in self._slots]

    def slot_runtime(self, slot_index):
        return self._slots[slot_index].runtime

    def audit(self):
        """Check slot-allocation soundness; raises AssertionError on drift."""
        with self._manager:
            mapped = {}
            for ta_uuid, slot in self.loaded_tas.items():
                if slot in mapped.values():
                    raise AssertionError(f"slot {slot} mapped twice")
                mapped[ta_uuid] = slot
            for record in self._slots:
                taken = record.state is SlotState.TAKEN
                in_map = record.uuid is not None and \
                    self.loaded_tas.get(record.uuid) == record.index
                if taken != in_map:
                    raise AssertionError(
                        f"slot {record.index}: taken={taken} but mapping "
                        f"says {in_map}")
            return self.slot_snapshot()

    def wait_idle(self, timeout=30):
        """Block until background cleanups have drained."""
        deadline = time.monotonic() + timeout
        self._cleanup_queue.join()
        with self._manager:
            while any(r.state is SlotState.CLEANING for r in self._slots):
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TimeoutError("cleanup did not drain")
                self._manager.wait(remaining)

    def shutdown(self):
        """Stop the cleaner and all enclave worker threads."""
        self._cleanup_queue.put(None)
        self._cleaner.join(timeout=5)
        for record in self._slots:
            record.runtime.shutdown()
        self._log("shutdown")
