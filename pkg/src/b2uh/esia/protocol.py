"""Initialization, registration, authentication and logout.

An :class:`ESIANetwork` holds the trusted authority, the vehicle registry,
one ordinary chain per fog plus the fog-head chain. Accepted requests queue
ledger records; :meth:`ESIANetwork.seal` writes them as blocks once a
consensus round has committed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping

from ..crypto import (
    IDCard,
    KeyPair,
    NonceSource,
    Role,
    generate_keypair,
    hash_identity,
    idcard_payload,
    issue_idcard,
    sign,
    verify,
    CryptoError,
)
from ..grouping import GroupingPlan
from .ledger import Ledger
from .messages import (
    AUTH_EXCHANGE_BYTES,
    FV_EXCHANGE_BYTES,
    DecodeError,
    ReqCon,
    ReqLogout,
    ReqRegFV,
    ReqRegOV,
    decode_reqreg,
)

DEFAULT_DELTA_TS = 5
FVL_CHAIN = "fvl"


class ErrorKind(str, Enum):
    TIMEOUT = "Timeout"
    UNKNOWN_RSU = "UnknownRSU"
    UNKNOWN_FOG = "UnknownFog"
    BAD_IDCARD = "BadIDCard"
    ALREADY_REGISTERED = "AlreadyRegistered"
    BAD_CARD_FORMAT = "BadCardFormat"
    UNKNOWN_VEHICLE = "UnknownVehicle"
    INVALID_STATUS = "InvalidStatus"
    FVL_FAILURE = "FVLayerFailure"
    DUPLICATE_ADDRESS = "DuplicateAddress"


class ProtocolError(Exception):
    def __init__(self, kind: ErrorKind, detail: str = ""):
        super().__init__(f"{kind.value}: {detail}" if detail else kind.value)
        self.kind = kind


class Status(str, Enum):
    REGISTERED = "registered"
    REVOKED = "revoked"
    UNKNOWN = "unknown"


@dataclass
class OpCounters:
    signatures: int = 0
    verifications: int = 0
    hashes: int = 0
    encryptions: int = 0

    def copy(self) -> "OpCounters":
        return replace(self)

    def __sub__(self, other: "OpCounters") -> "OpCounters":
        return OpCounters(
            self.signatures - other.signatures,
            self.verifications - other.verifications,
            self.hashes - other.hashes,
            self.encryptions - other.encryptions,
        )

    def as_dict(self) -> dict[str, int]:
        return {
            "signatures": self.signatures, "verifications": self.verifications,
            "hashes": self.hashes, "encryptions": self.encryptions,
        }


@dataclass(frozen=True)
class TrustedAuthority:
    keys: KeyPair
    rsu_ids: frozenset[bytes]

    @classmethod
    def create(cls, rsu_names: Iterable[str], seed: int = 0) -> "TrustedAuthority":
        keys = generate_keypair(NonceSource(f"ta:{seed}"))
        return cls(keys, frozenset(hash_identity(n.encode()) for n in rsu_names))


@dataclass(frozen=True)
class VehicleRecord:
    vehicle_id: int
    address: bytes
    oid: bytes
    role: Role
    fog_id: bytes
    rsu_id: bytes
    keys: KeyPair
    idcard: IDCard

    def reqreg(self, time: int) -> ReqRegOV | ReqRegFV:
        card = self.idcard.to_bytes()
        if self.role is Role.FV:
            return ReqRegFV(self.fog_id, self.rsu_id, card, time)
        return ReqRegOV(self.oid, self.fog_id, self.rsu_id, card, time)

    def reqcon(self, peer_oid: bytes) -> ReqCon:
        return ReqCon(self.oid, self.fog_id, self.rsu_id, peer_oid, self.idcard.to_bytes())

    def reqlogout(self) -> ReqLogout:
        return ReqLogout(self.oid, self.fog_id, self.rsu_id)


def ethernet_address(vehicle_id: int) -> bytes:
    """Synthetic locally administered 6-byte MAC for a simulated vehicle."""
    return b"\x02" + vehicle_id.to_bytes(5, "big")


def initialize(
    addresses: Mapping[int, bytes],
    plan: GroupingPlan,
    ta: TrustedAuthority,
    rsu_id: bytes,
    seed: int = 0,
) -> dict[int, VehicleRecord]:
    """Identities, key pairs and IDCards for every vehicle of ``plan``.

    A fog head's OID doubles as its fog's FogID.
    """
    if len(set(addresses.values())) != len(addresses):
        raise ProtocolError(ErrorKind.DUPLICATE_ADDRESS, "Ethernet addresses must be unique")
    if rsu_id not in ta.rsu_ids:
        raise ProtocolError(ErrorKind.UNKNOWN_RSU)
    fog_of = plan.fog_index()
    missing = set(fog_of) - set(addresses)
    if missing:
        raise ValueError(f"no Ethernet address for vehicles {sorted(missing)[:5]}")
    nonces = NonceSource(f"init:{seed}")
    oids = {v: hash_identity(addresses[v]) for v in fog_of}
    out = {}
    for v in sorted(fog_of):
        fog = plan.fogs[fog_of[v]]
        role = Role.FV if v == fog.head else Role.OV
        fog_id = oids[fog.head]
        ov = oids[v] if role is Role.OV else None
        keys = generate_keypair(nonces)
        card = issue_idcard(role, rsu_id, fog_id, ov, ta.keys.sk, nonces)
        out[v] = VehicleRecord(v, addresses[v], oids[v], role, fog_id, rsu_id, keys, card)
    return out


@dataclass
class _Entry:
    record: VehicleRecord
    status: Status = Status.UNKNOWN


@dataclass(frozen=True)
class AuthResult:
    a1: bytes
    a2: bytes
    same_fog: bool
    bytes_exchanged: int
    ops: OpCounters


@dataclass
class ESIANetwork:
    ta: TrustedAuthority
    vehicles: dict[int, VehicleRecord]
    delta_ts: int = DEFAULT_DELTA_TS
    seed: int = 0
    counters: OpCounters = field(default_factory=OpCounters)
    chains: dict[str, Ledger] = field(default_factory=dict)

    def __post_init__(self):
        self._by_oid = {r.oid: _Entry(r) for r in self.vehicles.values()}
        self._fogs = {r.fog_id for r in self.vehicles.values()}
        self._pending: dict[str, list[dict]] = {}
        self._nonces = NonceSource(f"session:{self.seed}")
        self.fvl_healthy = True
        self.chains.setdefault(FVL_CHAIN, Ledger(FVL_CHAIN))
        for f in sorted(self._fogs):
            self.chains.setdefault(f.hex(), Ledger(f.hex()))

    # -- bookkeeping

    def status(self, oid: bytes) -> Status:
        e = self._by_oid.get(oid)
        return e.status if e else Status.UNKNOWN

    def _chain_for(self, rec: VehicleRecord) -> str:
        return FVL_CHAIN if rec.role is Role.FV else rec.fog_id.hex()

    def _queue(self, chain: str, record: dict) -> None:
        self._pending.setdefault(chain, []).append(record)

    @property
    def pending(self) -> dict[str, list[dict]]:
        return {k: list(v) for k, v in self._pending.items() if v}

    def seal(self, timestamp: int) -> list[str]:
        """Write queued records as one block per chain; returns the chains touched."""
        touched = []
        for name in sorted(self._pending):
            recs = self._pending[name]
            if recs:
                self.chains[name].append(recs, timestamp)
                touched.append(name)
        self._pending.clear()
        return touched

    def _check_card(self, card: IDCard, role: Role, rsu: bytes, fog: bytes, oid: bytes | None) -> bool:
        self.counters.hashes += 1
        self.counters.verifications += 1
        try:
            payload = idcard_payload(role, rsu, fog, oid)
        except CryptoError:
            return False
        return verify(payload, card.signature, self.ta.keys.pk)

    # -- registration

    def register(self, req: ReqRegOV | ReqRegFV | bytes, receive_time: int) -> VehicleRecord:
        if isinstance(req, (bytes, bytearray)):
            try:
                req = decode_reqreg(bytes(req))
            except DecodeError as exc:
                raise ProtocolError(ErrorKind.BAD_IDCARD, str(exc)) from None
        if abs(receive_time - req.time) > self.delta_ts:
            raise ProtocolError(ErrorKind.TIMEOUT, f"elapsed {receive_time - req.time}s > {self.delta_ts}s")
        if req.rsu_id not in self.ta.rsu_ids:
            raise ProtocolError(ErrorKind.UNKNOWN_RSU)
        is_ov = isinstance(req, ReqRegOV)
        if is_ov and req.fog_id not in self._fogs:
            raise ProtocolError(ErrorKind.UNKNOWN_FOG)
        role = Role.OV if is_ov else Role.FV
        card = IDCard.from_bytes(req.idcard)
        if not self._check_card(card, role, req.rsu_id, req.fog_id, req.oid if is_ov else None):
            raise ProtocolError(ErrorKind.BAD_IDCARD)
        entry = self._by_oid.get(req.oid)
        if entry is None or entry.record.role is not role:
            # the TA signed it, but this network never provisioned the identity
            raise ProtocolError(ErrorKind.BAD_IDCARD, "identity not provisioned")
        if entry.status is Status.REGISTERED:
            raise ProtocolError(ErrorKind.ALREADY_REGISTERED)
        if entry.status is Status.REVOKED:
            raise ProtocolError(ErrorKind.INVALID_STATUS, "identity was revoked at logout")
        entry.status = Status.REGISTERED
        self._queue(self._chain_for(entry.record), {
            "type": "register", "role": role.value, "oid": req.oid.hex(),
            "fog": req.fog_id.hex(), "rsu": req.rsu_id.hex(), "time": req.time,
        })
        return entry.record

    # -- authentication

    def _lookup(self, oid: bytes) -> _Entry:
        e = self._by_oid.get(oid)
        if e is None:
            raise ProtocolError(ErrorKind.UNKNOWN_VEHICLE, oid.hex()[:16])
        return e

    def _confirm(self, fv: VehicleRecord, a1: bytes, a2: bytes) -> None:
        self.counters.signatures += 1
        sign(hashlib.sha256(a1 + a2).digest(), fv.keys.sk, self._nonces)

    def authenticate(self, req: ReqCon | bytes, now: int = 0) -> AuthResult:
        start = self.counters.copy()
        if isinstance(req, (bytes, bytearray)):
            try:
                req = ReqCon.decode(bytes(req))
            except DecodeError as exc:
                raise ProtocolError(ErrorKind.BAD_CARD_FORMAT, str(exc)) from None
        card1 = IDCard.from_bytes(req.idcard_a1)
        if not self._check_card(card1, Role.OV, req.a1_rsu_id, req.a1_fog_id, req.a1_oid):
            raise ProtocolError(ErrorKind.BAD_CARD_FORMAT, "requester IDCard does not verify")
        e1, e2 = self._lookup(req.a1_oid), self._lookup(req.a2_oid)
        for e in (e1, e2):
            if e.status is not Status.REGISTERED:
                raise ProtocolError(ErrorKind.INVALID_STATUS, f"{e.record.oid.hex()[:16]} is {e.status.value}")
        r2 = e2.record
        # reverse direction: the responder's card, returned in the reply
        if not self._check_card(r2.idcard, r2.role, r2.rsu_id, r2.fog_id, r2.oid if r2.role is Role.OV else None):
            raise ProtocolError(ErrorKind.BAD_CARD_FORMAT, "responder IDCard does not verify")
        same = req.a1_fog_id == r2.fog_id
        nbytes = AUTH_EXCHANGE_BYTES
        fv1 = self._lookup(req.a1_fog_id).record
        if same:
            chain = req.a1_fog_id.hex()
        else:
            fv2 = self._lookup(r2.fog_id).record
            for fv in (fv1, fv2):
                if self.status(fv.oid) is not Status.REGISTERED or not self.fvl_healthy:
                    raise ProtocolError(ErrorKind.FVL_FAILURE, "fog-head layer unavailable")
            for fv in (fv1, fv2):
                if not self._check_card(fv.idcard, Role.FV, fv.rsu_id, fv.fog_id, None):
                    raise ProtocolError(ErrorKind.FVL_FAILURE, "fog-head IDCard does not verify")
            nbytes += FV_EXCHANGE_BYTES
            chain = FVL_CHAIN
        self._confirm(fv1, req.a1_oid, req.a2_oid)
        self._queue(chain, {
            "type": "auth", "a1": req.a1_oid.hex(), "a2": req.a2_oid.hex(),
            "same_fog": same, "time": now,
        })
        return AuthResult(req.a1_oid, req.a2_oid, same, nbytes, self.counters - start)

    # -- logout

    def logout(self, req: ReqLogout | bytes, now: int = 0) -> VehicleRecord:
        if isinstance(req, (bytes, bytearray)):
            try:
                req = ReqLogout.decode(bytes(req))
            except DecodeError as exc:
                raise ProtocolError(ErrorKind.UNKNOWN_VEHICLE, str(exc)) from None
        if req.rsu_id not in self.ta.rsu_ids:
            raise ProtocolError(ErrorKind.UNKNOWN_RSU)
        if req.fog_id not in self._fogs:
            raise ProtocolError(ErrorKind.UNKNOWN_FOG)
        e = self._by_oid.get(req.oid)
        if e is None or e.status is not Status.REGISTERED or e.record.fog_id != req.fog_id:
            raise ProtocolError(ErrorKind.UNKNOWN_VEHICLE)
        e.status = Status.REVOKED
        self._queue(self._chain_for(e.record), {
            "type": "logout", "oid": req.oid.hex(), "fog": req.fog_id.hex(), "time": now,
        })
        return e.record
