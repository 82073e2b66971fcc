"""Hierarchical deterministic keys, addresses, and the digests they need."""

from __future__ import annotations

import hashlib
import struct

from ..internal_api.crypto import ORDER_N, derive_public_key, hmac_digest

HARDENED_BIT = 0x80000000

_B58_ALPHABET = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"
_B58_INDEX = {char: value for value, char in enumerate(_B58_ALPHABET)}


class DerivationError(ValueError):
    """Seed or index produced an unusable key."""


# --- RIPEMD-160 (no longer in hashlib) --------------------------------------
# Round-wise formulation: five 16-step rounds per line, each round with its
# own boolean function, added constant, message permutation, and rotations.

def _f1(x, y, z):
    return x ^ y ^ z


def _f2(x, y, z):
    return (x & y) | (~x & z)


def _f3(x, y, z):
    return (x | ~y) ^ z


def _f4(x, y, z):
    return (x & z) | (y & ~z)


def _f5(x, y, z):
    return x ^ (y | ~z)


_LEFT_ROUNDS = (
    (_f1, 0x00000000,
     (0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15),
     (11, 14, 15, 12, 5, 8, 7, 9, 11, 13, 14, 15, 6, 7, 9, 8)),
    (_f2, 0x5A827999,
     (7, 4, 13, 1, 10, 6, 15, 3, 12, 0, 9, 5, 2, 14, 11, 8),
     (7, 6, 8, 13, 11, 9, 7, 15, 7, 12, 15, 9, 11, 7, 13, 12)),
    (_f3, 0x6ED9EBA1,
     (3, 10, 14, 4, 9, 15, 8, 1, 2, 7, 0, 6, 13, 11, 5, 12),
     (11, 13, 6, 7, 14, 9, 13, 15, 14, 8, 13, 6, 5, 12, 7, 5)),
    (_f4, 0x8F1BBCDC,
     (1, 9, 11, 10, 0, 8, 12, 4, 13, 3, 7, 15, 14, 5, 6, 2),
     (11, 12, 14, 15, 14, 15, 9, 8, 9, 14, 5, 6, 8, 6, 5, 12)),
    (_f5, 0xA953FD4E,
     (4, 0, 5, 9, 7, 12, 2, 10, 14, 1, 3, 8, 11, 6, 15, 13),
     (9, 15, 5, 11, 6, 8, 13, 12, 5, 12, 13, 14, 11, 8, 5, 6)),
)

_RIGHT_ROUNDS = (
    (_f5, 0x50A28BE6,
     (5, 14, 7, 0, 9, 2, 11, 4, 13, 6, 15, 8, 1, 10, 3, 12),
     (8, 9, 9, 11, 13, 15, 15, 5, 7, 7, 8, 11, 14, 14, 12, 6)),
    (_f4, 0x5C4DD124,
     (6, 11, 3, 7, 0, 13, 5, 10, 14, 15, 8, 12, 4, 9, 1, 2),
     (9, 13, 15, 7, 12, 8, 9, 11, 7, 7, 12, 7, 6, 15, 13, 11)),
    (_f3, 0x6D703EF3,
     (15, 5, 1, 3, 7, 14, 6, 9, 11, 8, 12, 2, 10, 0, 4, 13),
     (9, 7, 15, 11, 8, 6, 6, 14, 12, 13, 5, 14, 13, 13, 7, 5)),
    (_f2, 0x7A6D76E9,
     (8, 6, 4, 1, 3, 11, 15, 0, 5, 12, 2, 13, 9, 7, 10, 14),
     (15, 5, 8, 11, 14, 14, 6, 14, 6, 9, 12, 9, 12, 5, 15, 8)),
    (_f1, 0x00000000,
     (12, 15, 10, 4, 1, 5, 8, 7, 6, 2, 13, 14, 0, 3, 9, 11),
     (8, 5, 12, 9, 12, 5, 14, 6, 8, 13, 6, 5, 15, 13, 11, 11)),
)

_RMD_INIT = (0x67452301, 0xEFCDAB89, 0x98BADCFE, 0x10325476, 0xC3D2E1F0)


def _rotl32(value, amount):
    value &= 0xFFFFFFFF
    return ((value << amount) | (value >> (32 - amount))) & 0xFFFFFFFF


def _rmd_line(state, block_words, rounds):
    a, b, c, d, e = state
    for func, constant, order, shifts in rounds:
        for step in range(16):
            t = _rotl32(a + func(b, c, d) + block_words[order[step]]
                        + constant, shifts[step]) + e
            a, e, d, c, b = e, d, _rotl32(c, 10), b, t & 0xFFFFFFFF
    return a, b, c, d, e


def ripemd160(message):
    """RIPEMD-160 digest of message bytes."""
    message = bytes(message)
    padded = message + b"\x80"
    padded += b"\x00" * (-(len(padded) + 8) % 64)
    padded += struct.pack("<Q", len(message) * 8)
    state = _RMD_INIT
    for start in range(0, len(padded), 64):
        words = struct.unpack("<16I", padded[start:start + 64])
        la, lb, lc, ld, le = _rmd_line(state, words, _LEFT_ROUNDS)
        ra, rb, rc, rd, re = _rmd_line(state, words, _RIGHT_ROUNDS)
        h0, h1, h2, h3, h4 = state
        state = ((h1 + lc + rd) & 0xFFFFFFFF,
                 (h2 + ld + re) & 0xFFFFFFFF,
                 (h3 + le + ra) & 0xFFFFFFFF,
                 (h4 + la + rb) & 0xFFFFFFFF,
                 (h0 + lb + rc) & 0xFFFFFFFF)
    return struct.pack("<5I", *state)


# --- digest helpers ----------------------------------------------------------

def sha256d(data):
    """Double SHA-256."""
    return hashlib.sha256(hashlib.sha256(bytes(data)).digest()).digest()


def hash160(data):
    """RIPEMD-160 of SHA-256, the address digest."""
    return ripemd160(hashlib.sha256(bytes(data)).digest())


# --- base58 with checksum ----------------------------------------------------

def base58check_encode(payload):
    """Payload bytes -> base58 string with 4-byte double-SHA checksum."""
    raw = bytes(payload) + sha256d(payload)[:4]
    value = int.from_bytes(raw, "big")
    encoded = ""
    while value:
        value, digit = divmod(value, 58)
        encoded = _B58_ALPHABET[digit] + encoded
    pad = len(raw) - len(raw.lstrip(b"\x00"))
    return "1" * pad + encoded


def base58check_decode(encoded):
    """Base58 string -> payload bytes; raises ValueError on a bad checksum."""
    value = 0
    for char in encoded:
        if char not in _B58_INDEX:
            raise ValueError(f"invalid base58 character {char!r}")
        value = value * 58 + _B58_INDEX[char]
    raw = value.to_bytes((value.bit_length() + 7) // 8, "big")
    pad = len(encoded) - len(encoded.lstrip("1"))
    raw = b"\x00" * pad + raw
    if len(raw) < 4:
        raise ValueError("base58 string too short for a checksum")
    payload, checksum = raw[:-4], raw[-4:]
    if sha256d(payload)[:4] != checksum:
        raise ValueError("base58 checksum mismatch")
    return payload


# --- key derivation ----------------------------------------------------------

def master_from_seed(seed):
    """64-byte seed -> (master secret key, master chain code)."""
    seed = bytes(seed)
    digest = hmac_digest("sha512", b"Bitcoin seed", seed)
    secret, chain_code = digest[:32], digest[32:]
    scalar = int.from_bytes(secret, "big")
    if scalar == 0 or scalar >= ORDER_N:
        raise DerivationError("seed maps outside the key space")
    return secret, chain_code


def derive_hardened(parent_sk, parent_cc, index):
    """Hardened child at `index`: (child secret key, child chain code)."""
    if not 0 <= index < HARDENED_BIT:
        raise DerivationError(f"child index {index} out of range")
    data = b"\x00" + bytes(parent_sk) + struct.pack(
        ">I", index | HARDENED_BIT)
    digest = hmac_digest("sha512", bytes(parent_cc), data)
    offset = int.from_bytes(digest[:32], "big")
    if offset >= ORDER_N:
        raise DerivationError(f"child index {index} is unusable")
    child = (offset + int.from_bytes(bytes(parent_sk), "big")) % ORDER_N
    if child == 0:
        raise DerivationError(f"child index {index} is unusable")
    return child.to_bytes(32, "big"), digest[32:]


def p2pkh_address(public_key):
    """Compressed public key -> pay-to-pubkey-hash address string."""
    return base58check_encode(b"\x00" + hash160(public_key))


def address_for_key(secret_key):
    """Secret key -> its compressed-key P2PKH address."""
    return p2pkh_address(derive_public_key(secret_key))
