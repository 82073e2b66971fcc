"""Bitcoin wallet trusted application: keys live and die inside the enclave."""

from __future__ import annotations

import hashlib
from hmac import compare_digest

from ..enclave import TrustedApp, register_ta_kind
from ..internal_api.crypto import derive_public_key, ecdsa_sign
from ..protocol import (
    AccessDeniedError,
    BadParametersError,
    ItemNotFoundError,
    ParamKind,
    ShortBufferError,
)
from .hd import derive_hardened, master_from_seed, p2pkh_address, sha256d
from .mnemonic import (
    MnemonicError,
    entropy_to_mnemonic,
    mnemonic_to_entropy,
    mnemonic_to_seed,
    normalize_mnemonic,
)

TA_KIND_WALLET = 16

CMD_CHECK_EXISTS = 1
CMD_GENERATE = 2
CMD_RESTORE = 3
CMD_DELETE = 4
CMD_SIGN = 5
CMD_GET_ADDRESS = 6

RECORD_ID = b"master"
_ENTROPY_BYTES = 16
_SALT_BYTES = 16
_RECORD_BYTES = 32 + 32 + _SALT_BYTES + 32
_SIGHASH_ALL = b"\x01"
PIN_MAX = 9999


def _pin_digest(pin, salt):
    return hashlib.sha256(b"%04d" % pin + salt).digest()


class WalletTa(TrustedApp):
    """Single-session wallet: master key sealed, children derived per call."""

    def __init__(self, env):
        super().__init__(env)
        self._session_open = False

    # --- session policy ------------------------------------------------------

    def open_session(self, params):
        if self._session_open:
            raise AccessDeniedError("wallet is busy with another session")
        self._session_open = True
        return super().open_session(params)

    def close_session(self, session):
        self._session_open = False

    def destroy(self):
        self.env.uart.log("wallet: destroy")

    # --- sealed record -------------------------------------------------------

    def _load_record(self):
        """(master_sk, chain_code, salt, pin_digest) or None when absent."""
        if not self.env.storage.exists(RECORD_ID):
            return None
        record = self.env.storage.get(RECORD_ID)
        if len(record) != _RECORD_BYTES:
            raise AccessDeniedError("wallet record is malformed")
        return record[:32], record[32:64], record[64:80], record[80:112]

    def _store_record(self, master_sk, chain_code, pin):
        salt = self.env.rng.random_bytes(_SALT_BYTES)
        self.env.storage.put(
            RECORD_ID, master_sk + chain_code + salt + _pin_digest(pin, salt))

    def _require_pin(self, record, pin):
        _sk, _cc, salt, stored = record
        if not compare_digest(_pin_digest(pin, salt), stored):
            raise AccessDeniedError("wrong pin")

    # --- parameter plumbing --------------------------------------------------

    @staticmethod
    def _credentials(params):
        """p0 carries (pin, child index) on every command."""
        if params.kind(0) is not ParamKind.VALUE_IN:
            raise BadParametersError("parameter 0 must be an input value")
        pin, index = params.value(0)
        if pin > PIN_MAX:
            raise BadParametersError(f"pin must be 0..{PIN_MAX}")
        return pin, index

    @staticmethod
    def _memref_in(params, index):
        if params.kind(index) is not ParamKind.MEMREF:
            raise BadParametersError(f"parameter {index} must be a memref")
        return params.memref(index).read()

    @staticmethod
    def _memref_out(params, index, data):
        """Report the full length, then write what fits or fail short."""
        if params.kind(index) is not ParamKind.MEMREF:
            raise BadParametersError(f"parameter {index} must be a memref")
        block = params.memref(index)
        params.set_memref_length(index, len(data))
        if block.length < len(data):
            raise ShortBufferError(
                f"need {len(data)} bytes, caller granted {block.length}")
        block.write(data)

    def _child_key(self, record, pin, index):
        self._require_pin(record, pin)
        master_sk, chain_code = record[0], record[1]
        child_sk, _child_cc = derive_hardened(master_sk, chain_code, index)
        return child_sk

    # --- commands ------------------------------------------------------------

    def invoke_command(self, session, cmd_id, params):
        handler = {
            CMD_CHECK_EXISTS: self._cmd_check_exists,
            CMD_GENERATE: self._cmd_generate,
            CMD_RESTORE: self._cmd_restore,
            CMD_DELETE: self._cmd_delete,
            CMD_SIGN: self._cmd_sign,
            CMD_GET_ADDRESS: self._cmd_get_address,
        }.get(cmd_id)
        if handler is None:
            raise BadParametersError(f"unknown wallet command {cmd_id}")
        handler(params)

    def _cmd_check_exists(self, params):
        self._credentials(params)
        if params.kind(1) is not ParamKind.VALUE_OUT:
            raise BadParametersError("parameter 1 must be an output value")
        params.set_value(1, a=int(self.env.storage.exists(RECORD_ID)))

    def _cmd_generate(self, params):
        pin, _index = self._credentials(params)
        if self.env.storage.exists(RECORD_ID):
            raise BadParametersError("wallet already exists")
        entropy = self.env.rng.random_bytes(_ENTROPY_BYTES)
        phrase = entropy_to_mnemonic(entropy)
        master_sk, chain_code = master_from_seed(mnemonic_to_seed(phrase))
        self._store_record(master_sk, chain_code, pin)
        self._memref_out(params, 1, phrase.encode())
        self.env.uart.log("wallet: generated new master record")

    def _cmd_restore(self, params):
        pin, _index = self._credentials(params)
        record = self._load_record()
        if record is not None:
            self._require_pin(record, pin)
        phrase = normalize_mnemonic(self._memref_in(params, 1))
        try:
            mnemonic_to_entropy(phrase)
        except MnemonicError as exc:
            raise BadParametersError(f"invalid mnemonic: {exc}") from exc
        master_sk, chain_code = master_from_seed(mnemonic_to_seed(phrase))
        self._store_record(master_sk, chain_code, pin)
        self.env.uart.log("wallet: restored master record from phrase")

    def _cmd_delete(self, params):
        pin, _index = self._credentials(params)
        record = self._load_record()
        if record is None:
            raise ItemNotFoundError("no wallet to delete")
        self._require_pin(record, pin)
        self.env.storage.delete(RECORD_ID)
        self.env.uart.log("wallet: deleted master record")

    def _cmd_sign(self, params):
        pin, index = self._credentials(params)
        record = self._load_record()
        if record is None:
            raise ItemNotFoundError("no wallet key to sign with")
        raw_tx = self._memref_in(params, 1)
        if not raw_tx:
            raise BadParametersError("empty transaction")
        child_sk = self._child_key(record, pin, index)
        signature = ecdsa_sign(child_sk, sha256d(raw_tx))
        self._memref_out(params, 2, (signature + _SIGHASH_ALL).hex().encode())

    def _cmd_get_address(self, params):
        pin, index = self._credentials(params)
        record = self._load_record()
        if record is None:
            raise ItemNotFoundError("no wallet key to address")
        child_sk = self._child_key(record, pin, index)
        address = p2pkh_address(derive_public_key(child_sk))
        self._memref_out(params, 1, address.encode())


register_ta_kind(TA_KIND_WALLET, WalletTa)
