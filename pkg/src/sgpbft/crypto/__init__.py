"""Crypto."""

# local
from .authenticator import KeyTable, sign, verify
from .curve import SystemParams, schnorr_sign, schnorr_verify, sp_init

__all__ = (
    "KeyTable",
    "SystemParams",
    "schnorr_sign",
    "schnorr_verify",
    "sign",
    "sp_init",
    "verify",
)
