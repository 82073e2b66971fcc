"""Emulated enclave core: private TCM, shared window, mailbox, RST/INT lines."""

from __future__ import annotations

import threading
import traceback
from enum import IntEnum

from .protocol import (
    WORD_MASK,
    MAILBOX_WORDS,
    TCM_SIZE,
    SHM_WINDOW_SIZE,
    OperationId,
    ParamKind,
    ReturnCode,
    TeeError,
    InvalidFrame,
    BadParametersError,
    AccessDeniedError,
    ShortBufferError,
    ImageFormatError,
    ImageSizeError,
    ReplyFrame,
    decode_frame,
    encode_reply,
    decode_image_prefix,
)

TA_KIND_INCREMENT = 1
TA_KIND_SHMEM16 = 2
TA_KIND_ECHO = 3
TA_KIND_PROBE = 4


class CoreState(IntEnum):
    RESET = 0
    WFI = 1
    ISR = 2


class AbortedError(Exception):
    """Raised inside a TA handler when RST is asserted mid-dispatch."""


class EnclaveResetError(RuntimeError):
    """A mailbox delivery was cut short by a reset."""


class Space:
    """Bounds-checked byte region; out-of-range access is a bus fault."""

    def __init__(self, size):
        self._buf = bytearray(size)

    def __len__(self):
        return len(self._buf)

    def _check(self, offset, length):
        if not isinstance(offset, int) or not isinstance(length, int):
            raise AccessDeniedError("region offsets must be integers")
        if offset < 0 or length < 0 or offset + length > len(self._buf):
            raise AccessDeniedError(
                f"access [{offset}, +{length}) outside {len(self._buf)}-byte region")

    def read(self, offset, length):
        self._check(offset, length)
        return bytes(self._buf[offset:offset + length])

    def write(self, offset, data):
        data = bytes(data)
        self._check(offset, len(data))
        self._buf[offset:offset + len(data)] = data

    def zeroize(self):
        self._buf[:] = bytes(len(self._buf))


class MemoryContext:
    """Per-dispatch access rights: all of TCM plus granted window slices."""

    def __init__(self, tcm, window, abort_check=None):
        self._tcm = tcm
        self._window = window
        self._grants = []
        self._abort_check = abort_check

    def grant(self, offset, length):
        """Admit one window slice for this dispatch."""
        if offset < 0 or length < 0 or offset + length > len(self._window):
            raise AccessDeniedError(
                f"grant [{offset}, +{length}) outside the shared window")
        if length:
            self._grants.append((offset, offset + length))
            self._grants.sort()

    def _covered(self, lo, hi):
        """True when [lo, hi) lies inside the union of grants."""
        cursor = lo
        for start, end in self._grants:
            if start > cursor:
                break
            cursor = max(cursor, end)
            if cursor >= hi:
                return True
        return cursor >= hi

    def _gate(self, offset, length):
        if self._abort_check is not None:
            self._abort_check()
        if not isinstance(offset, int) or not isinstance(length, int):
            raise AccessDeniedError("window offsets must be integers")
        if offset < 0 or length < 0 or offset + length > len(self._window):
            raise AccessDeniedError(
                f"access [{offset}, +{length}) outside the shared window")
        if length and not self._covered(offset, offset + length):
            raise AccessDeniedError(
                f"access [{offset}, +{length}) outside granted slices")

    def window_read(self, offset, length):
        self._gate(offset, length)
        return self._window.read(offset, length)

    def window_write(self, offset, data):
        data = bytes(data)
        self._gate(offset, len(data))
        self._window.write(offset, data)

    def tcm_read(self, offset, length):
        if self._abort_check is not None:
            self._abort_check()
        return self._tcm.read(offset, length)

    def tcm_write(self, offset, data):
        if self._abort_check is not None:
            self._abort_check()
        self._tcm.write(offset, data)


class MemRef:
    """A TA's handle on one granted window slice."""

    def __init__(self, mem, offset, length):
        self._mem = mem
        self._offset = offset
        self.length = length

    def read(self, at=0, length=None):
        if length is None:
            length = self.length - at
        if at < 0 or length < 0 or at + length > self.length:
            raise AccessDeniedError(
                f"read [{at}, +{length}) outside {self.length}-byte reference")
        return self._mem.window_read(self._offset + at, length)

    def write(self, data, at=0):
        data = bytes(data)
        if at < 0 or at + len(data) > self.length:
            raise AccessDeniedError(
                f"write [{at}, +{len(data)}) outside {self.length}-byte reference")
        self._mem.window_write(self._offset + at, data)


_WRITABLE = (ParamKind.VALUE_OUT, ParamKind.VALUE_INOUT)


class TaParams:
    """Handler view of the four frame parameters."""

    def __init__(self, frame, mem):
        self._kinds = frame.kinds()
        self._words = list(frame.gp)
        self._mem = mem

    def kind(self, index):
        return self._kinds[index]

    def value(self, index):
        """The (a, b) word pair of a value parameter."""
        kind = self._kinds[index]
        if kind not in (ParamKind.VALUE_IN, ParamKind.VALUE_OUT,
                        ParamKind.VALUE_INOUT):
            raise BadParametersError(f"parameter {index} is {kind.name}, not a value")
        return self._words[2 * index], self._words[2 * index + 1]

    def set_value(self, index, a=None, b=None):
        """Update the words of an output-capable value parameter."""
        if self._kinds[index] not in _WRITABLE:
            raise BadParametersError(
                f"parameter {index} is {self._kinds[index].name}, not writable")
        for slot, word in ((2 * index, a), (2 * index + 1, b)):
            if word is None:
                continue
            if not isinstance(word, int) or not 0 <= word <= WORD_MASK:
                raise BadParametersError(f"value word {word!r} is not 32-bit")
            self._words[slot] = word

    @property
    def memory(self):
        """The dispatch's MemoryContext (full TCM, granted window slices)."""
        return self._mem

    def memref(self, index):
        """The granted window slice behind a memory reference parameter."""
        if self._kinds[index] is not ParamKind.MEMREF:
            raise BadParametersError(
                f"parameter {index} is {self._kinds[index].name}, not a memref")
        offset, length = self._words[2 * index], self._words[2 * index + 1]
        return MemRef(self._mem, offset, length)

    def set_memref_length(self, index, length):
        """Report the size a memref actually needs (short-buffer replies)."""
        if self._kinds[index] is not ParamKind.MEMREF:
            raise BadParametersError(
                f"parameter {index} is {self._kinds[index].name}, not a memref")
        if not isinstance(length, int) or not 0 <= length <= WORD_MASK:
            raise BadParametersError(f"length {length!r} is not 32-bit")
        self._words[2 * index + 1] = length

    def words(self):
        return tuple(self._words)


class UartLog:
    """Append-only debug console for one enclave."""

    def __init__(self):
        self._lock = threading.Lock()
        self._lines = []
        self._path = None

    def attach_file(self, path):
        """Mirror every line into a plain-text log file."""
        with self._lock:
            self._path = path

    def log(self, line):
        line = str(line)
        with self._lock:
            self._lines.append(line)
            if self._path is not None:
                with open(self._path, "a") as sink:
                    sink.write(line + "\n")

    def lines(self):
        with self._lock:
            return tuple(self._lines)


class TaEnvironment:
    """Trusted-side services handed to a TA instance."""

    def __init__(self, ta_uuid, rng, storage, counter, uart, abort_event,
                 image_size=0):
        self.uuid = ta_uuid
        self.rng = rng
        self.storage = storage
        self.counter = counter
        self.uart = uart
        self.image_size = image_size
        self._abort_event = abort_event

    def check_abort(self):
        if self._abort_event.is_set():
            raise AbortedError("reset asserted")

    def sleep(self, seconds):
        """Abort-aware wait; a reset cuts it short."""
        if self._abort_event.wait(seconds):
            raise AbortedError("reset asserted")


class TrustedApp:
    """Base trusted application; subclasses override the lifecycle hooks."""

    def __init__(self, env):
        self.env = env

    def open_session(self, params):
        """Return a per-session context object (may be None)."""
        return None

    def invoke_command(self, session, cmd_id, params):
        raise BadParametersError(f"command {cmd_id} not implemented")

    def close_session(self, session):
        pass

    def destroy(self):
        pass


_TA_KINDS = {}


def register_ta_kind(kind, factory):
    """Map an image ta_kind to a TrustedApp factory(env)."""
    kind = int(kind)
    if kind in _TA_KINDS:
        raise ValueError(f"ta_kind {kind} already registered")
    _TA_KINDS[kind] = factory


def ta_factory(kind):
    return _TA_KINDS.get(int(kind))


class IncrementTa(TrustedApp):
    """cmd 0: add one to value parameter 0 (32-bit wraparound)."""

    def invoke_command(self, session, cmd_id, params):
        if cmd_id != 0:
            raise BadParametersError(f"unknown command {cmd_id}")
        if params.kind(0) is not ParamKind.VALUE_INOUT:
            raise BadParametersError("parameter 0 must be an in/out value")
        a, _ = params.value(0)
        params.set_value(0, a=(a + 1) & WORD_MASK)


class Shmem16Ta(TrustedApp):
    """cmd 0: write bytes 0x00..0x0f into memref 0 (16 bytes needed)."""

    PATTERN = bytes(range(16))

    def invoke_command(self, session, cmd_id, params):
        if cmd_id != 0:
            raise BadParametersError(f"unknown command {cmd_id}")
        ref = params.memref(0)
        params.set_memref_length(0, len(self.PATTERN))
        if ref.length < len(self.PATTERN):
            raise ShortBufferError(
                f"need {len(self.PATTERN)} bytes, granted {ref.length}")
        ref.write(self.PATTERN)


class EchoTa(TrustedApp):
    """cmd 0: copy value param 0 into value param 1; cmd 1: reverse memref 0."""

    def invoke_command(self, session, cmd_id, params):
        if cmd_id == 0:
            a, b = params.value(0)
            params.set_value(1, a=a, b=b)
        elif cmd_id == 1:
            ref = params.memref(0)
            ref.write(bytes(reversed(ref.read())))
        else:
            raise BadParametersError(f"unknown command {cmd_id}")


class ProbeTa(TrustedApp):
    """cmd 0: scan own TCM for residue; a=nonzero bytes past the image,
    b=count of 0xA5 sentinel bytes anywhere."""

    SENTINEL = 0xA5

    def invoke_command(self, session, cmd_id, params):
        if cmd_id != 0:
            raise BadParametersError(f"unknown command {cmd_id}")
        tcm = params.memory.tcm_read(0, TCM_SIZE)
        beyond = tcm[self.env.image_size:]
        nonzero = sum(1 for byte in beyond if byte)
        params.set_value(0, a=nonzero & WORD_MASK,
                         b=tcm.count(self.SENTINEL) & WORD_MASK)


register_ta_kind(TA_KIND_INCREMENT, IncrementTa)
register_ta_kind(TA_KIND_SHMEM16, Shmem16Ta)
register_ta_kind(TA_KIND_ECHO, EchoTa)
register_ta_kind(TA_KIND_PROBE, ProbeTa)


class EnclaveRuntime:
    """One emulated core: worker thread, mailbox doorbell, RST/INT lines.

    The fabric loads an image over DMA while RST is asserted, deasserts RST
    to boot, then exchanges 12-word frames: it raises INT, the core serves
    the request in its ISR and clears INT when the reply is in the mailbox.
    """

    def __init__(self, index, services):
        self.index = index
        self._services = services
        self.tcm = Space(TCM_SIZE)
        self.window = Space(SHM_WINDOW_SIZE)
        self.uart = UartLog()
        self._mailbox = [0] * MAILBOX_WORDS
        self._cond = threading.Condition()
        self._rst = True
        self._int = False
        self._isr_active = False
        self._reply_serial = 0
        self._state = CoreState.RESET
        self._shutdown = False
        self._abort = threading.Event()
        self._abort.set()
        self._faulted = False
        self._image = None
        self._image_size = 0
        self._ta = None
        self._sessions = {}
        self._last_sid = 0
        self._thread = threading.Thread(
            target=self._run, name=f"enclave-{index}", daemon=True)
        self._thread.start()

    # ---- lines the fabric drives ----

    def load_image(self, data):
        """Loader DMA into TCM; only legal while RST is asserted."""
        with self._cond:
            if not self._rst:
                raise RuntimeError("DMA into a running enclave")
            self.tcm.write(0, data)

    def assert_reset(self, wait=True):
        """Pull RST; aborts any in-flight handler, then zeroizes."""
        with self._cond:
            self._rst = True
            self._abort.set()
            self._cond.notify_all()
            while wait and not self._shutdown and self._state != CoreState.RESET:
                self._cond.wait()

    def deassert_reset(self, wait=True):
        """Release RST; the core boots from whatever TCM now holds."""
        with self._cond:
            if not self._rst:
                return
            self._abort.clear()
            self._rst = False
            self._cond.notify_all()
            while wait and not self._shutdown and self._state == CoreState.RESET:
                self._cond.wait()

    def deliver(self, words):
        """Place a request, ring INT, wait for the ISR to clear it."""
        words = list(words)
        if len(words) != MAILBOX_WORDS:
            raise InvalidFrame(f"mailbox holds {MAILBOX_WORDS} words")
        for word in words:
            if not isinstance(word, int) or not 0 <= word <= WORD_MASK:
                raise InvalidFrame(f"mailbox word {word!r} is not 32-bit")
        with self._cond:
            if self._rst:
                raise EnclaveResetError(f"enclave {self.index} is in reset")
            if self._int or self._isr_active:
                raise RuntimeError(f"enclave {self.index} mailbox is busy")
            serial = self._reply_serial
            self._mailbox[:] = words
            self._int = True
            self._cond.notify_all()
            while self._reply_serial == serial and not self._rst:
                self._cond.wait()
            # Only the exact next serial with the core out of reset is a
            # reply; anything else means the slot was torn down under us.
            if self._rst or self._reply_serial != serial + 1:
                raise EnclaveResetError(
                    f"enclave {self.index} reset while a request was in flight")
            return tuple(self._mailbox)

    def snapshot(self):
        """Register scan: control lines plus bookkeeping, for tests and CLI."""
        with self._cond:
            return {
                "index": self.index,
                "state": self._state,
                "rst": self._rst,
                "int": self._int,
                "sessions": len(self._sessions),
                "last_sid": self._last_sid,
                "ta_kind": None if self._image is None else self._image.ta_kind,
                "reply_serial": self._reply_serial,
            }

    def mailbox_words(self):
        with self._cond:
            return tuple(self._mailbox)

    @property
    def faulted(self):
        return self._faulted

    def shutdown(self):
        with self._cond:
            self._shutdown = True
            self._rst = True
            self._abort.set()
            self._cond.notify_all()
        self._thread.join(timeout=5)

    # ---- the core itself ----

    def _run(self):
        with self._cond:
            while True:
                self._state = CoreState.RESET
                self._cond.notify_all()
                while self._rst and not self._shutdown:
                    self._cond.wait()
                if self._shutdown:
                    return
                self._boot()
                self._state = CoreState.WFI
                self._cond.notify_all()
                while not self._rst and not self._shutdown:
                    if not self._int:
                        self._cond.wait()
                        continue
                    self._state = CoreState.ISR
                    request = tuple(self._mailbox)
                    self._isr_active = True
                    self._cond.release()
                    try:
                        reply = self._dispatch(request)
                    except AbortedError:
                        reply = None
                    finally:
                        self._cond.acquire()
                        self._isr_active = False
                    if reply is not None and not self._rst:
                        self._mailbox[:] = reply
                        self._int = False
                        self._reply_serial += 1
                    self._state = CoreState.WFI
                    self._cond.notify_all()
                self._zeroize()

    def _zeroize(self):
        """Reset entry: no secret survives in TCM, window, mailbox or state."""
        self.tcm.zeroize()
        self.window.zeroize()
        self._mailbox[:] = [0] * MAILBOX_WORDS
        self._int = False
        self._faulted = False
        self._image = None
        self._image_size = 0
        self._ta = None
        self._sessions.clear()
        self._last_sid = 0
        self._reply_serial = 0

    def _boot(self):
        """Parse the loaded image; a bad image leaves the core answering
        every request with a generic error and a note on the UART."""
        raw = self.tcm.read(0, len(self.tcm))
        try:
            image, consumed = decode_image_prefix(raw)
        except (ImageFormatError, ImageSizeError) as exc:
            self.uart.log(f"boot: image rejected: {exc}")
            return
        if ta_factory(image.ta_kind) is None:
            self.uart.log(f"boot: no handler for ta_kind {image.ta_kind}")
            return
        self._image = image
        self._image_size = consumed
        self.uart.log(f"boot: ta {image.uuid} kind {image.ta_kind}")

    def _ensure_ta(self):
        if self._ta is None:
            env = TaEnvironment(self._image.uuid,
                                *self._services.for_ta(self._image.uuid),
                                self.uart, self._abort,
                                image_size=self._image_size)
            self._ta = ta_factory(self._image.ta_kind)(env)
        return self._ta

    def _next_sid(self):
        self._last_sid = (self._last_sid + 1) & WORD_MASK or 1
        return self._last_sid

    def _check_abort(self):
        if self._abort.is_set():
            raise AbortedError("reset asserted")

    def _dispatch(self, words):
        """Serve one mailbox frame; returns the 12 reply words."""
        try:
            frame = decode_frame(words)
            frame.validate()
        except InvalidFrame as exc:
            self.uart.log(f"isr: bad frame: {exc}")
            return encode_reply(ReplyFrame(
                ReturnCode.ERROR_BAD_PARAMETERS, 0, 0, (0,) * 8, 0))
        if self._image is None:
            self.uart.log("isr: no valid image loaded")
            return encode_reply(ReplyFrame(
                ReturnCode.ERROR_GENERIC, frame.session_id, frame.param_type,
                frame.gp, frame.cmd_id))
        mem = MemoryContext(self.tcm, self.window, self._check_abort)
        for i, kind in enumerate(frame.kinds()):
            if kind is ParamKind.MEMREF:
                mem.grant(*frame.param_words(i))
        params = TaParams(frame, mem)
        code = ReturnCode.SUCCESS
        session_out = frame.session_id
        try:
            if frame.operation is OperationId.OPEN:
                ta = self._ensure_ta()
                context = ta.open_session(params)
                sid = self._next_sid()
                self._sessions[sid] = context
                session_out = sid
            elif frame.operation is OperationId.INVOKE:
                if frame.session_id not in self._sessions:
                    raise BadParametersError(f"no session {frame.session_id}")
                self._ensure_ta().invoke_command(
                    self._sessions[frame.session_id], frame.cmd_id, params)
            else:
                if frame.session_id not in self._sessions:
                    raise BadParametersError(f"no session {frame.session_id}")
                context = self._sessions.pop(frame.session_id)
                ta = self._ensure_ta()
                ta.close_session(context)
                if not self._sessions:
                    ta.destroy()
                    self._ta = None
        except AbortedError:
            raise
        except TeeError as exc:
            code = exc.code
            if frame.operation is OperationId.OPEN:
                session_out = 0
        except Exception:
            self.uart.log("isr: ta fault:\n" + traceback.format_exc().rstrip())
            self._faulted = True
            code = ReturnCode.ERROR_GENERIC
            if frame.operation is OperationId.OPEN:
                session_out = 0
        if (frame.operation is OperationId.OPEN and code is not ReturnCode.SUCCESS
                and not self._sessions and self._ta is not None):
            # Balance the instance created for a rejected first open.
            try:
                self._ta.destroy()
            finally:
                self._ta = None
        return encode_reply(ReplyFrame(
            code, session_out, frame.param_type, params.words(), frame.cmd_id))
