"""Bitcoin wallet workload: trusted application, REE client, key tooling."""

from .client import WALLET_UUID, WalletClient, WalletError, build_wallet_image
from .ta import (
    CMD_CHECK_EXISTS,
    CMD_DELETE,
    CMD_GENERATE,
    CMD_GET_ADDRESS,
    CMD_RESTORE,
    CMD_SIGN,
    TA_KIND_WALLET,
    WalletTa,
)

__all__ = [
    "CMD_CHECK_EXISTS",
    "CMD_DELETE",
    "CMD_GENERATE",
    "CMD_GET_ADDRESS",
    "CMD_RESTORE",
    "CMD_SIGN",
    "TA_KIND_WALLET",
    "WALLET_UUID",
    "WalletClient",
    "WalletError",
    "WalletTa",
    "build_wallet_image",
]
