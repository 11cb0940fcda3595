"""Vehicle identity protocol: wire codecs, ledgers and the protocol engine."""

from .ledger import Ledger, LedgerBlock, LedgerVerdict, verify_file
from .messages import (
    AUTH_EXCHANGE_BYTES,
    MUTUAL_AUTH_TOTAL_BYTES,
    DecodeError,
    ReqCon,
    ReqLogout,
    ReqRegFV,
    ReqRegOV,
    decode_reqreg,
)
from .protocol import (
    AuthResult,
    ErrorKind,
    ESIANetwork,
    OpCounters,
    ProtocolError,
    Status,
    TrustedAuthority,
    VehicleRecord,
    ethernet_address,
    initialize,
)

__all__ = [
    "AUTH_EXCHANGE_BYTES", "MUTUAL_AUTH_TOTAL_BYTES", "AuthResult", "DecodeError", "ErrorKind",
    "ESIANetwork", "Ledger", "LedgerBlock", "LedgerVerdict", "OpCounters", "ProtocolError",
    "ReqCon", "ReqLogout", "ReqRegFV", "ReqRegOV", "Status", "TrustedAuthority", "VehicleRecord",
    "decode_reqreg", "ethernet_address", "initialize", "verify_file",
]
