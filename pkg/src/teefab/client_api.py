"""REE-side client library: contexts, sessions, parameter marshalling."""

from __future__ import annotations

import threading
from enum import IntEnum
from pathlib import Path

from .protocol import (
    GP_WORDS,
    PARAM_SLOTS,
    SHM_WINDOW_SIZE,
    WORD_MASK,
    AccessDeniedError,
    BadParametersError,
    MailboxFrame,
    OperationId,
    OutOfMemoryError,
    ParamKind,
    ReturnCode,
    decode_image,
    error_for_code,
)

_OPEN_RETRIES = 5


class Direction(IntEnum):
    IN = 1
    OUT = 2
    INOUT = 3


_VALUE_KINDS = {
    Direction.IN: ParamKind.VALUE_IN,
    Direction.OUT: ParamKind.VALUE_OUT,
    Direction.INOUT: ParamKind.VALUE_INOUT,
}


class Value:
    """One (a, b) word-pair parameter."""

    def __init__(self, direction, a=0, b=0):
        self.direction = Direction(direction)
        for word in (a, b):
            if not isinstance(word, int) or not 0 <= word <= WORD_MASK:
                raise BadParametersError(f"value word {word!r} is not 32-bit")
        self.a = a
        self.b = b


class SharedMemory:
    """A reserved slice of one slot's shared window plus its REE buffer."""

    def __init__(self, offset, length, direction):
        self.offset = offset
        self.length = length
        self.direction = Direction(direction)
        self.buffer = bytearray(length)
        self.returned_length = None

    def write(self, data, at=0):
        data = bytes(data)
        if at < 0 or at + len(data) > self.length:
            raise BadParametersError(
                f"write [{at}, +{len(data)}) outside {self.length}-byte block")
        self.buffer[at:at + len(data)] = data

    def read(self, at=0, length=None):
        if length is None:
            length = self.length - at
        if at < 0 or length < 0 or at + length > self.length:
            raise BadParametersError(
                f"read [{at}, +{length}) outside {self.length}-byte block")
        return bytes(self.buffer[at:at + length])


class Operation:
    """Up to four logical parameters for one open/invoke exchange."""

    def __init__(self, *params):
        if len(params) > PARAM_SLOTS:
            raise BadParametersError(
                f"at most {PARAM_SLOTS} parameters, got {len(params)}")
        for param in params:
            if param is not None and not isinstance(param, (Value, SharedMemory)):
                raise BadParametersError(
                    f"parameter must be Value or SharedMemory, got {param!r}")
        self.params = list(params) + [None] * (PARAM_SLOTS - len(params))

    def _marshal(self):
        """(kinds, gp words); OUT value words travel as zeros."""
        kinds, words = [], []
        for param in self.params:
            if param is None:
                kinds.append(ParamKind.NONE)
                words += [0, 0]
            elif isinstance(param, Value):
                kinds.append(_VALUE_KINDS[param.direction])
                if param.direction is Direction.OUT:
                    words += [0, 0]
                else:
                    words += [param.a, param.b]
            else:
                kinds.append(ParamKind.MEMREF)
                words += [param.offset, param.length]
        return kinds, words


class InvokeResult:
    """Reply-side view of one exchange."""

    def __init__(self, reply):
        self.code = reply.code
        self._kinds = reply.kinds()
        self._words = reply.gp

    @property
    def success(self):
        return self.code is ReturnCode.SUCCESS

    def value(self, index):
        """(a, b) words of an output-capable value parameter."""
        if self._kinds[index] not in (ParamKind.VALUE_OUT,
                                      ParamKind.VALUE_INOUT):
            raise BadParametersError(
                f"parameter {index} is {self._kinds[index].name}, not an "
                f"output value")
        return self._words[2 * index], self._words[2 * index + 1]

    def memref_length(self, index):
        """The length word the TA left on a memref (short-buffer reporting)."""
        if self._kinds[index] is not ParamKind.MEMREF:
            raise BadParametersError(
                f"parameter {index} is {self._kinds[index].name}, not a memref")
        return self._words[2 * index + 1]

    def raise_for_code(self, context=""):
        if not self.success:
            raise error_for_code(self.code, context)
        return self


class Context:
    """One client connection to a running fabric; stages TA images."""

    def __init__(self, fabric):
        self.fabric = fabric
        self._staged = {}
        self._lock = threading.Lock()

    def _stage(self, ta_uuid, image):
        if isinstance(image, (str, Path)):
            image = Path(image).read_bytes()
        image = bytes(image)
        decoded = decode_image(image)
        if decoded.uuid != ta_uuid:
            raise BadParametersError(
                f"image uuid {decoded.uuid} does not match requested {ta_uuid}")
        with self._lock:
            if ta_uuid not in self._staged:
                self._staged[ta_uuid] = self.fabric.cm_stage(image)
            return self._staged[ta_uuid]

    def open_session(self, ta_uuid, image):
        """Stage (once), find-or-load the slot, dispatch OPEN."""
        cm_addr, size = self._stage(ta_uuid, image)
        last_error = None
        for _ in range(_OPEN_RETRIES):
            slot, _fresh = self.fabric.manager_open(ta_uuid, cm_addr, size)
            try:
                reply = self.fabric.comm_dispatch(
                    slot, MailboxFrame.build(OperationId.OPEN, 0))
            except AccessDeniedError as exc:
                # The slot was torn down between lookup and dispatch.
                self.fabric.release_pending(slot)
                last_error = exc
                continue
            if reply.code is not ReturnCode.SUCCESS:
                self.fabric.release_pending(slot)
                raise error_for_code(reply.code,
                                     f"TA {ta_uuid} rejected the session")
            return Session(self, ta_uuid, slot, reply.session_id)
        raise last_error

    def close(self):
        """Release every staged image."""
        with self._lock:
            for offset, _size in self._staged.values():
                self.fabric.cm_release(offset)
            self._staged.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()
        return False


class Session:
    """One open session; per-session window allocator for shared blocks."""

    def __init__(self, context, ta_uuid, slot_index, session_id):
        self.context = context
        self.uuid = ta_uuid
        self.slot_index = slot_index
        self.session_id = session_id
        self._shm_cursor = 0

    @property
    def is_open(self):
        return self.session_id != 0

    def allocate_shared_memory(self, length, direction=Direction.INOUT):
        """Reserve the next disjoint window slice for this session."""
        if not self.is_open:
            raise BadParametersError("session is closed")
        if not isinstance(length, int) or length < 0:
            raise BadParametersError(f"bad shared block length {length!r}")
        if self._shm_cursor + length > SHM_WINDOW_SIZE:
            raise OutOfMemoryError(
                f"shared window exhausted: {self._shm_cursor} used, "
                f"{length} requested of {SHM_WINDOW_SIZE}")
        block = SharedMemory(self._shm_cursor, length, direction)
        self._shm_cursor += length
        return block

    def invoke_command(self, cmd_id, operation=None):
        """Marshal, copy shared buffers in, dispatch, copy back out."""
        if not self.is_open:
            raise BadParametersError("session is closed")
        operation = operation or Operation()
        kinds, words = operation._marshal()
        frame = MailboxFrame.build(OperationId.INVOKE, self.session_id,
                                   kinds, gp=words, cmd_id=cmd_id)
        fabric = self.context.fabric
        with fabric.exchange(self.slot_index):
            for param in operation.params:
                if not isinstance(param, SharedMemory) or param.length == 0:
                    continue
                if param.direction in (Direction.IN, Direction.INOUT):
                    fabric.shm_write(self.slot_index, param.offset,
                                     param.buffer)
                else:
                    # OUT: REE contents must never reach the enclave.
                    fabric.shm_write(self.slot_index, param.offset,
                                     bytes(param.length))
            reply = fabric.comm_dispatch(self.slot_index, frame)
            for index, param in enumerate(operation.params):
                if not isinstance(param, SharedMemory):
                    continue
                returned = reply.param_words(index)[1]
                param.returned_length = returned
                if (reply.code is ReturnCode.SUCCESS
                        and param.direction in (Direction.OUT, Direction.INOUT)
                        and param.length):
                    data = fabric.shm_read(self.slot_index, param.offset,
                                           min(returned, param.length))
                    param.buffer[:len(data)] = data
        return InvokeResult(reply)

    def close(self):
        """Dispatch CLOSE; double close is a no-op."""
        if not self.is_open:
            return
        frame = MailboxFrame.build(OperationId.CLOSE, self.session_id)
        try:
            self.context.fabric.comm_dispatch(self.slot_index, frame)
        except AccessDeniedError:
            pass  # slot already torn down; the session is gone either way
        self.session_id = 0

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()
        return False
