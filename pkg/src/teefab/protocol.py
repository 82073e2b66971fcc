"""Wire-level data model shared by the REE and the enclave fabric.

Everything that crosses the mailbox or the loader path is defined here:
the 12-word request/reply frame, the packed parameter-type field, return
codes, the loadable TA image container, and the manager's register block.
All multi-word values are little-endian when serialized to bytes.
"""

from __future__ import annotations

import struct
import uuid as uuid_mod
from dataclasses import dataclass, field
from enum import IntEnum

WORD_MASK = 0xFFFFFFFF
MAILBOX_WORDS = 12

TCM_SIZE = 64 * 1024          # private code+data memory per enclave
SHM_WINDOW_SIZE = 8 * 1024    # REE-visible shared window per enclave
CM_REGION_SIZE = 16 * 1024 * 1024   # staging region for TA images
CM_ALIGNMENT = 64

IMAGE_MAGIC = b"TEOD"
IMAGE_VERSION = 1
IMAGE_HEADER_SIZE = 32        # magic + version + uuid + kind + payload_len
MAX_IMAGE_SIZE = TCM_SIZE

GP_WORDS = 8                  # general-purpose payload words per frame
PARAM_SLOTS = 4               # logical parameters, two gp words each


class OperationId(IntEnum):
    """Word 0 of a request frame."""

    OPEN = 1
    INVOKE = 2
    CLOSE = 3


class ParamKind(IntEnum):
    """One 4-bit nibble of the packed param_type word."""

    NONE = 0
    VALUE_IN = 1
    VALUE_OUT = 2
    VALUE_INOUT = 3
    MEMREF = 5


class ReturnCode(IntEnum):
    """Word 0 of a reply frame (the reply reuses the request storage)."""

    SUCCESS = 0
    ERROR_GENERIC = 1
    ERROR_BAD_PARAMETERS = 2
    ERROR_ACCESS_DENIED = 3
    ERROR_OUT_OF_MEMORY = 4
    ERROR_ITEM_NOT_FOUND = 5
    ERROR_OUT_OF_ENCLAVES = 6
    ERROR_SHORT_BUFFER = 7


class LoadStatus(IntEnum):
    """Manager status register values during a load handshake."""

    IDLE = 0
    LOADING = 1
    LOADED = 2
    ERR_FULL = 3
    ERR_SIZE = 4
    ERR_FORMAT = 5


class TeeError(Exception):
    """Base for all errors that map onto a protocol return code."""

    code = ReturnCode.ERROR_GENERIC

    def __init__(self, message=""):
        super().__init__(message or self.__class__.__name__)


class InvalidFrame(TeeError):
    code = ReturnCode.ERROR_BAD_PARAMETERS


class BadParametersError(TeeError):
    code = ReturnCode.ERROR_BAD_PARAMETERS


class AccessDeniedError(TeeError):
    code = ReturnCode.ERROR_ACCESS_DENIED


class OutOfMemoryError(TeeError):
    code = ReturnCode.ERROR_OUT_OF_MEMORY


class ItemNotFoundError(TeeError):
    code = ReturnCode.ERROR_ITEM_NOT_FOUND


class OutOfEnclavesError(TeeError):
    code = ReturnCode.ERROR_OUT_OF_ENCLAVES


class ShortBufferError(TeeError):
    code = ReturnCode.ERROR_SHORT_BUFFER


class ImageSizeError(TeeError):
    """TA image does not fit the private memory (manager ERR_SIZE)."""

    code = ReturnCode.ERROR_OUT_OF_MEMORY


class ImageFormatError(TeeError):
    """TA image failed magic/version/length/uuid checks (manager ERR_FORMAT)."""

    code = ReturnCode.ERROR_GENERIC


_VALID_NIBBLES = frozenset(int(k) for k in ParamKind)


def pack_param_types(kinds):
    """Pack up to four ParamKind nibbles into the param_type word."""
    kinds = list(kinds)
    if len(kinds) > PARAM_SLOTS:
        raise InvalidFrame(f"at most {PARAM_SLOTS} parameters, got {len(kinds)}")
    kinds += [ParamKind.NONE] * (PARAM_SLOTS - len(kinds))
    packed = 0
    for i, kind in enumerate(kinds):
        if int(kind) not in _VALID_NIBBLES:
            raise InvalidFrame(f"parameter {i} has invalid kind {kind:#x}")
        packed |= (int(kind) & 0xF) << (4 * i)
    return packed


def unpack_param_types(packed):
    """Unpack the param_type word into four ParamKind nibbles."""
    if packed & ~0xFFFF:
        raise InvalidFrame(f"param_type upper bits set: {packed:#010x}")
    kinds = []
    for i in range(PARAM_SLOTS):
        nibble = (packed >> (4 * i)) & 0xF
        if nibble not in _VALID_NIBBLES:
            raise InvalidFrame(f"parameter {i} has invalid kind {nibble:#x}")
        kinds.append(ParamKind(nibble))
    return tuple(kinds)


def _check_word(value, name):
    if not isinstance(value, int) or not 0 <= value <= WORD_MASK:
        raise InvalidFrame(f"{name} is not a 32-bit word: {value!r}")


@dataclass(frozen=True)
class MailboxFrame:
    """One 12-word request as placed in an enclave mailbox.

    Word layout: [operation, session_id, param_type, gp0..gp7, cmd_id].
    Logical parameter i owns gp words 2i and 2i+1: (a, b) for values,
    (offset, length) for shared-memory references.
    """

    operation: OperationId
    session_id: int
    param_type: int
    gp: tuple
    cmd_id: int = 0

    @classmethod
    def build(cls, operation, session_id, params=(), gp=(), cmd_id=0):
        """Construct from a kind list or from (kind, a, b) triples."""
        params = list(params)
        if params and isinstance(params[0], (tuple, list)):
            if gp:
                raise InvalidFrame("gp words are implied by (kind, a, b) triples")
            kinds, words = [], []
            for entry in params:
                kind, word_a, word_b = entry
                kinds.append(kind)
                words += [word_a, word_b]
        else:
            kinds = params
            words = list(gp)
        if len(words) > GP_WORDS:
            raise InvalidFrame(f"at most {GP_WORDS} gp words, got {len(words)}")
        words += [0] * (GP_WORDS - len(words))
        frame = cls(OperationId(operation), session_id,
                    pack_param_types(kinds), tuple(words), cmd_id)
        frame.validate()
        return frame

    def kinds(self):
        return unpack_param_types(self.param_type)

    def param_words(self, index):
        """The (2i, 2i+1) gp word pair of logical parameter index."""
        return self.gp[2 * index], self.gp[2 * index + 1]

    def validate(self):
        if int(self.operation) not in (1, 2, 3):
            raise InvalidFrame(f"operation word {self.operation!r} not in 1..3")
        _check_word(self.session_id, "session_id")
        _check_word(self.cmd_id, "cmd_id")
        if len(self.gp) != GP_WORDS:
            raise InvalidFrame(f"expected {GP_WORDS} gp words, got {len(self.gp)}")
        for i, word in enumerate(self.gp):
            _check_word(word, f"gp{i}")
        for i, kind in enumerate(self.kinds()):
            if kind is ParamKind.MEMREF:
                offset, length = self.param_words(i)
                # Plain integer sum: a 32-bit wraparound cannot sneak past.
                if offset + length > SHM_WINDOW_SIZE:
                    raise InvalidFrame(
                        f"memref {i} [{offset}, +{length}) outside the "
                        f"{SHM_WINDOW_SIZE}-byte window")


@dataclass(frozen=True)
class ReplyFrame:
    """The 12 words an enclave leaves in the mailbox when INT clears.

    Identical layout to the request except word 0 carries the return code.
    """

    code: ReturnCode
    session_id: int
    param_type: int
    gp: tuple
    cmd_id: int = 0

    def kinds(self):
        return unpack_param_types(self.param_type)

    def param_words(self, index):
        return self.gp[2 * index], self.gp[2 * index + 1]


def encode_frame(frame):
    """MailboxFrame -> 12 words."""
    frame.validate()
    return (int(frame.operation), frame.session_id, frame.param_type,
            *frame.gp, frame.cmd_id)


def decode_frame(words):
    """12 words -> MailboxFrame, rejecting anything malformed."""
    words = tuple(words)
    if len(words) != MAILBOX_WORDS:
        raise InvalidFrame(f"expected {MAILBOX_WORDS} words, got {len(words)}")
    for i, word in enumerate(words):
        _check_word(word, f"word{i}")
    if words[0] not in (1, 2, 3):
        raise InvalidFrame(f"operation word {words[0]} not in 1..3")
    frame = MailboxFrame(OperationId(words[0]), words[1], words[2],
                         words[3:11], words[11])
    frame.validate()
    return frame


def encode_reply(reply):
    """ReplyFrame -> 12 words (return code in the operation slot)."""
    return (int(reply.code), reply.session_id, reply.param_type,
            *reply.gp, reply.cmd_id)


def decode_reply(words):
    """12 words -> ReplyFrame."""
    words = tuple(words)
    if len(words) != MAILBOX_WORDS:
        raise InvalidFrame(f"expected {MAILBOX_WORDS} words, got {len(words)}")
    for i, word in enumerate(words):
        _check_word(word, f"word{i}")
    try:
        code = ReturnCode(words[0])
    except ValueError as exc:
        raise InvalidFrame(f"unknown return code {words[0]}") from exc
    return ReplyFrame(code, words[1], words[2], words[3:11], words[11])


def words_to_bytes(words):
    """Serialize mailbox words little-endian for bit-exact comparison."""
    return struct.pack(f"<{len(words)}I", *words)


def bytes_to_words(data):
    if len(data) % 4:
        raise InvalidFrame(f"byte length {len(data)} not word aligned")
    return struct.unpack(f"<{len(data) // 4}I", data)


@dataclass(frozen=True)
class TAImage:
    """Loadable trusted-application container.

    Header (32 bytes): magic "TEOD", version, uuid, ta_kind, payload_len,
    all words little-endian.  ta_kind selects the TA behaviour from the
    registry the enclave runtime consults; payload is free-form data the
    TA receives at instantiation.  Total size never exceeds the private
    memory (64 KiB).
    """

    uuid: uuid_mod.UUID
    ta_kind: int
    payload: bytes = b""

    @property
    def size(self):
        return IMAGE_HEADER_SIZE + len(self.payload)


def encode_image(image):
    """TAImage -> bytes, enforcing the size cap."""
    _check_word(image.ta_kind, "ta_kind")
    total = IMAGE_HEADER_SIZE + len(image.payload)
    if total > MAX_IMAGE_SIZE:
        raise ImageSizeError(
            f"image is {total} bytes, cap is {MAX_IMAGE_SIZE}")
    return b"".join((
        IMAGE_MAGIC,
        struct.pack("<I", IMAGE_VERSION),
        image.uuid.bytes,
        struct.pack("<I", image.ta_kind),
        struct.pack("<I", len(image.payload)),
        image.payload,
    ))


def decode_image_prefix(buf):
    """Parse a TAImage from the front of a larger buffer.

    Returns (image, consumed_bytes).  Used by the enclave runtime, whose
    private memory holds the image followed by zero fill.
    """
    if len(buf) < IMAGE_HEADER_SIZE:
        raise ImageFormatError(
            f"truncated header: {len(buf)} < {IMAGE_HEADER_SIZE} bytes")
    if bytes(buf[:4]) != IMAGE_MAGIC:
        raise ImageFormatError(f"bad magic {bytes(buf[:4])!r}")
    version, = struct.unpack_from("<I", buf, 4)
    if version != IMAGE_VERSION:
        raise ImageFormatError(f"unsupported version {version}")
    ta_uuid = uuid_mod.UUID(bytes=bytes(buf[8:24]))
    ta_kind, payload_len = struct.unpack_from("<II", buf, 24)
    total = IMAGE_HEADER_SIZE + payload_len
    if total > MAX_IMAGE_SIZE:
        raise ImageSizeError(f"image is {total} bytes, cap is {MAX_IMAGE_SIZE}")
    if total > len(buf):
        raise ImageFormatError(
            f"payload_len {payload_len} runs past the {len(buf)}-byte buffer")
    return TAImage(ta_uuid, ta_kind, bytes(buf[IMAGE_HEADER_SIZE:total])), total


def decode_image(buf):
    """bytes -> TAImage; never reads past the provided buffer."""
    buf = bytes(buf)
    if len(buf) > MAX_IMAGE_SIZE:
        raise ImageSizeError(f"image is {len(buf)} bytes, cap is {MAX_IMAGE_SIZE}")
    image, consumed = decode_image_prefix(buf)
    if consumed != len(buf):
        raise ImageFormatError(
            f"payload_len {len(image.payload)} inconsistent with "
            f"{len(buf) - IMAGE_HEADER_SIZE} payload bytes")
    return image


_CODE_ERRORS = {
    ReturnCode.ERROR_GENERIC: TeeError,
    ReturnCode.ERROR_BAD_PARAMETERS: BadParametersError,
    ReturnCode.ERROR_ACCESS_DENIED: AccessDeniedError,
    ReturnCode.ERROR_OUT_OF_MEMORY: OutOfMemoryError,
    ReturnCode.ERROR_ITEM_NOT_FOUND: ItemNotFoundError,
    ReturnCode.ERROR_OUT_OF_ENCLAVES: OutOfEnclavesError,
    ReturnCode.ERROR_SHORT_BUFFER: ShortBufferError,
}


def error_for_code(code, message=""):
    """Build the TeeError subclass matching a non-success return code."""
    exc_class = _CODE_ERRORS.get(ReturnCode(code), TeeError)
    exc = exc_class(message or f"operation failed with {ReturnCode(code).name}")
    return exc


@dataclass
class ManagerRegisters:
    """REE-facing register block of the fabric manager."""

    uuid: uuid_mod.UUID = uuid_mod.UUID(int=0)
    addr: int = 0
    size: int = 0
    status: LoadStatus = LoadStatus.IDLE
    history: list = field(default_factory=list)

    def set_status(self, status):
        self.status = status
        self.history.append(status)
