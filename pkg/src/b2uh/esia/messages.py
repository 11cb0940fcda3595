"""Fixed-layout binary codecs for the protocol messages.

All identities are 32 raw bytes, IDCards 64 bytes, timestamps 4-byte
big-endian unsigned seconds. Decoders reject any buffer of the wrong length.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from ..crypto import ID_LEN, SIG_LEN

TIME_LEN = 4


class DecodeError(ValueError):
    pass


def _check_ids(**fields: bytes) -> None:
    for name, v in fields.items():
        if not isinstance(v, (bytes, bytearray)) or len(v) != ID_LEN:
            raise ValueError(f"{name} must be {ID_LEN} bytes")


def _check_card(card: bytes) -> None:
    if len(card) != SIG_LEN:
        raise ValueError(f"IDCard must be {SIG_LEN} bytes")


def _split(data: bytes, size: int, kind: str, widths: tuple[int, ...]) -> list[bytes]:
    if len(data) != size:
        raise DecodeError(f"{kind}: expected {size} bytes, got {len(data)}")
    out, at = [], 0
    for w in widths:
        out.append(bytes(data[at:at + w]))
        at += w
    return out


@dataclass(frozen=True)
class ReqRegOV:
    oid: bytes
    fog_id: bytes
    rsu_id: bytes
    idcard: bytes
    time: int

    SIZE = 3 * ID_LEN + SIG_LEN + TIME_LEN  # 164

    def __post_init__(self):
        _check_ids(oid=self.oid, fog_id=self.fog_id, rsu_id=self.rsu_id)
        _check_card(self.idcard)
        if not 0 <= self.time < 2**32:
            raise ValueError("time must fit in 4 unsigned bytes")

    def encode(self) -> bytes:
        return self.oid + self.fog_id + self.rsu_id + self.idcard + struct.pack(">I", self.time)

    @classmethod
    def decode(cls, data: bytes) -> "ReqRegOV":
        oid, fog, rsu, card, t = _split(data, cls.SIZE, "ReqReg(OV)", (ID_LEN,) * 3 + (SIG_LEN, TIME_LEN))
        return cls(oid, fog, rsu, card, struct.unpack(">I", t)[0])


@dataclass(frozen=True)
class ReqRegFV:
    fog_id: bytes
    rsu_id: bytes
    idcard: bytes
    time: int

    SIZE = 2 * ID_LEN + SIG_LEN + TIME_LEN  # 132

    def __post_init__(self):
        _check_ids(fog_id=self.fog_id, rsu_id=self.rsu_id)
        _check_card(self.idcard)
        if not 0 <= self.time < 2**32:
            raise ValueError("time must fit in 4 unsigned bytes")

    @property
    def oid(self) -> bytes:
        # a fog head's own identity is its FogID
        return self.fog_id

    def encode(self) -> bytes:
        return self.fog_id + self.rsu_id + self.idcard + struct.pack(">I", self.time)

    @classmethod
    def decode(cls, data: bytes) -> "ReqRegFV":
        fog, rsu, card, t = _split(data, cls.SIZE, "ReqReg(FV)", (ID_LEN, ID_LEN, SIG_LEN, TIME_LEN))
        return cls(fog, rsu, card, struct.unpack(">I", t)[0])


def decode_reqreg(data: bytes) -> ReqRegOV | ReqRegFV:
    """Pick the registration form by length."""
    if len(data) == ReqRegOV.SIZE:
        return ReqRegOV.decode(data)
    if len(data) == ReqRegFV.SIZE:
        return ReqRegFV.decode(data)
    raise DecodeError(f"ReqReg: no form is {len(data)} bytes")


@dataclass(frozen=True)
class ReqCon:
    a1_oid: bytes
    a1_fog_id: bytes
    a1_rsu_id: bytes
    a2_oid: bytes
    idcard_a1: bytes

    SIZE = 4 * ID_LEN + SIG_LEN  # 192

    def __post_init__(self):
        _check_ids(a1_oid=self.a1_oid, a1_fog_id=self.a1_fog_id, a1_rsu_id=self.a1_rsu_id, a2_oid=self.a2_oid)
        _check_card(self.idcard_a1)

    def encode(self) -> bytes:
        return self.a1_oid + self.a1_fog_id + self.a1_rsu_id + self.a2_oid + self.idcard_a1

    @classmethod
    def decode(cls, data: bytes) -> "ReqCon":
        return cls(*_split(data, cls.SIZE, "ReqCon", (ID_LEN,) * 4 + (SIG_LEN,)))


@dataclass(frozen=True)
class ReqLogout:
    oid: bytes
    fog_id: bytes
    rsu_id: bytes

    SIZE = 3 * ID_LEN  # 96

    def __post_init__(self):
        _check_ids(oid=self.oid, fog_id=self.fog_id, rsu_id=self.rsu_id)

    def encode(self) -> bytes:
        return self.oid + self.fog_id + self.rsu_id

    @classmethod
    def decode(cls, data: bytes) -> "ReqLogout":
        return cls(*_split(data, cls.SIZE, "ReqLogout", (ID_LEN,) * 3))


# ReqCon, the responder's IDCard, and the fog head's signed confirmation
AUTH_EXCHANGE_BYTES = ReqCon.SIZE + 2 * SIG_LEN
# head-to-head leg of a cross-fog authentication: one ReqCon plus the reply card
FV_EXCHANGE_BYTES = ReqCon.SIZE + SIG_LEN
MUTUAL_AUTH_TOTAL_BYTES = ReqRegOV.SIZE + AUTH_EXCHANGE_BYTES
