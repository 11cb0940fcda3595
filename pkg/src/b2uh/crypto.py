"""Identities, short-Weierstrass curve arithmetic and the IDCard signature.

Signing is ``R = rG, s = (h + sk*R_x) / r (mod q)`` and verification
recomputes ``R' = (h*G + R_x*pk) / s`` and accepts iff ``x(R') == R_x``.
The x-coordinate comparison is what lets a signature travel as exactly 64
bytes (``R_x || s``).

Points are affine ``(x, y)`` tuples with ``None`` as the point at infinity;
scalar multiplication runs in Jacobian coordinates internally.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from enum import Enum

Point = tuple[int, int] | None

ID_LEN = 32
SIG_LEN = 64
MAX_NONCE_DRAWS = 64


class CryptoError(ValueError):
    """Invalid input to an identity or signature operation."""


@dataclass(frozen=True)
class CurveParams:
    """``v^2 = u^3 + o*u + p`` over GF(field) with a base point of prime order ``q``."""

    name: str
    field: int
    o: int
    p: int
    gx: int
    gy: int
    q: int
    _comb: list = field(default_factory=list, init=False, repr=False, compare=False)

    @property
    def G(self) -> tuple[int, int]:
        return (self.gx, self.gy)

    @property
    def byte_len(self) -> int:
        return (max(self.field, self.q).bit_length() + 7) // 8

    def is_nonsingular(self) -> bool:
        return (4 * self.o**3 + 27 * self.p**2) % self.field != 0

    def contains(self, P: Point) -> bool:
        if P is None:
            return True
        x, y = P
        if not (0 <= x < self.field and 0 <= y < self.field):
            return False
        return (y * y - (x * x * x + self.o * x + self.p)) % self.field == 0


# NIST P-256 / secp256r1
P256 = CurveParams(
    name="secp256r1",
    field=0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFF,
    o=0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFC,
    p=0x5AC635D8AA3A93E7B3EBBD55769886BC651D06B0CC53B0F63BCE3C3E27D2604B,
    gx=0x6B17D1F2E12C4247F8BCE6E563A440F277037D812DEB33A0F4A13945D898C296,
    gy=0x4FE342E2FE1A7F9B8EE7EB4A7C0F9E162BCE33576B315ECECBB6406837BF51F5,
    q=0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551,
)

# v^2 = u^3 + 2u + 3 over GF(97): 100 points, (3, 6) generates the order-5 subgroup
TOY97 = CurveParams(name="toy97", field=97, o=2, p=3, gx=3, gy=6, q=5)


# --- field / group arithmetic -------------------------------------------------


def point_neg(curve: CurveParams, P: Point) -> Point:
    if P is None:
        return None
    return (P[0], (-P[1]) % curve.field)


def point_add(curve: CurveParams, P: Point, Q: Point) -> Point:
    """Affine chord-and-tangent addition."""
    if P is None:
        return Q
    if Q is None:
        return P
    mod = curve.field
    if P[0] == Q[0]:
        if (P[1] + Q[1]) % mod == 0:
            return None
        lam = (3 * P[0] * P[0] + curve.o) * pow(2 * P[1], -1, mod) % mod
    else:
        lam = (Q[1] - P[1]) * pow(Q[0] - P[0], -1, mod) % mod
    x = (lam * lam - P[0] - Q[0]) % mod
    return (x, (lam * (P[0] - x) - P[1]) % mod)


def _jdouble(curve, X, Y, Z):
    if Y == 0 or Z == 0:
        return 0, 1, 0
    mod = curve.field
    YY = Y * Y % mod
    S = 4 * X * YY % mod
    ZZ = Z * Z % mod
    M = (3 * X * X + curve.o * ZZ * ZZ) % mod
    X3 = (M * M - 2 * S) % mod
    Y3 = (M * (S - X3) - 8 * YY * YY) % mod
    Z3 = 2 * Y * Z % mod
    return X3, Y3, Z3


def _jadd(curve, X1, Y1, Z1, X2, Y2, Z2):
    if Z1 == 0:
        return X2, Y2, Z2
    if Z2 == 0:
        return X1, Y1, Z1
    mod = curve.field
    Z1Z1 = Z1 * Z1 % mod
    Z2Z2 = Z2 * Z2 % mod
    U1 = X1 * Z2Z2 % mod
    U2 = X2 * Z1Z1 % mod
    S1 = Y1 * Z2 * Z2Z2 % mod
    S2 = Y2 * Z1 * Z1Z1 % mod
    if U1 == U2:
        if S1 != S2:
            return 0, 1, 0
        return _jdouble(curve, X1, Y1, Z1)
    H = (U2 - U1) % mod
    R = (S2 - S1) % mod
    HH = H * H % mod
    HHH = H * HH % mod
    V = U1 * HH % mod
    X3 = (R * R - HHH - 2 * V) % mod
    Y3 = (R * (V - X3) - S1 * HHH) % mod
    Z3 = H * Z1 * Z2 % mod
    return X3, Y3, Z3


def _to_affine(curve, X, Y, Z) -> Point:
    if Z == 0:
        return None
    mod = curve.field
    zinv = pow(Z, -1, mod)
    zinv2 = zinv * zinv % mod
    return (X * zinv2 % mod, Y * zinv2 * zinv % mod)


def _window_mult(curve, k, P):
    # 4-bit fixed window over Jacobian coordinates
    table = [(0, 1, 0), (P[0], P[1], 1)]
    for _ in range(14):
        table.append(_jadd(curve, *table[-1], P[0], P[1], 1))
    X, Y, Z = 0, 1, 0
    for shift in range((k.bit_length() + 3) // 4 * 4 - 4, -4, -4):
        for _ in range(4):
            X, Y, Z = _jdouble(curve, X, Y, Z)
        nib = (k >> shift) & 0xF
        if nib:
            X, Y, Z = _jadd(curve, X, Y, Z, *table[nib])
    return X, Y, Z


def _comb_table(curve):
    # table[i][j] = j * 16**i * G, affine
    if not curve._comb:
        digits = (curve.q.bit_length() + 3) // 4
        base = curve.G
        for _ in range(digits):
            row = [None, base]
            for _ in range(14):
                row.append(point_add(curve, row[-1], base))
            curve._comb.append(row)
            for _ in range(4):
                base = point_add(curve, base, base)
    return curve._comb


def _base_mult_jacobian(curve, k):
    X, Y, Z = 0, 1, 0
    for row in _comb_table(curve):
        nib = k & 0xF
        P = row[nib]
        if P is not None:
            X, Y, Z = _jadd(curve, X, Y, Z, P[0], P[1], 1)
        k >>= 4
        if not k:
            break
    return X, Y, Z


def scalar_mult(curve: CurveParams, k: int, P: Point) -> Point:
    """``k * P`` for any integer ``k``; only multiples of G are reduced mod q."""
    if P is None:
        return None
    if P == curve.G:
        k %= curve.q
        if k == 0:
            return None
        return _to_affine(curve, *_base_mult_jacobian(curve, k))
    if k < 0:
        k, P = -k, point_neg(curve, P)
    if k == 0:
        return None
    return _to_affine(curve, *_window_mult(curve, k, P))


def scalar_mult_naive(curve: CurveParams, k: int, P: Point) -> Point:
    """Repeated addition; only sensible on toy curves, used as an oracle."""
    acc = None
    for _ in range(k):
        acc = point_add(curve, acc, P)
    return acc


def enumerate_points(curve: CurveParams) -> list[Point]:
    """Every affine point plus infinity, by brute force over the field."""
    mod = curve.field
    squares: dict[int, list[int]] = {}
    for y in range(mod):
        squares.setdefault(y * y % mod, []).append(y)
    pts: list[Point] = [None]
    for x in range(mod):
        for y in squares.get((x**3 + curve.o * x + curve.p) % mod, []):
            pts.append((x, y))
    return pts


# --- keys, hashes, signatures ---------------------------------------------------


def hash_identity(source: bytes) -> bytes:
    """32-byte identity ``SHA-256(source)``; e.g. an OID from an Ethernet address."""
    if not source:
        raise CryptoError("identity source must be non-empty")
    return hashlib.sha256(source).digest()


def hash_to_scalar(message: bytes, curve: CurveParams = P256) -> int:
    return int.from_bytes(hashlib.sha256(message).digest(), "big") % curve.q


class NonceSource:
    """Deterministic scalar stream for reproducible simulation runs."""

    def __init__(self, seed: int | str | bytes | None = None):
        self._rng = random.Random(seed)

    def scalar(self, curve: CurveParams) -> int:
        return self._rng.randrange(1, curve.q)


@dataclass(frozen=True)
class KeyPair:
    sk: int
    pk: tuple[int, int]


def generate_keypair(rng: NonceSource, curve: CurveParams = P256) -> KeyPair:
    sk = rng.scalar(curve)
    return KeyPair(sk, scalar_mult(curve, sk, curve.G))


@dataclass(frozen=True)
class Signature:
    rx: int
    s: int

    def to_bytes(self, curve: CurveParams = P256) -> bytes:
        n = curve.byte_len
        return self.rx.to_bytes(n, "big") + self.s.to_bytes(n, "big")

    @classmethod
    def from_bytes(cls, data: bytes, curve: CurveParams = P256) -> "Signature":
        n = curve.byte_len
        if len(data) != 2 * n:
            raise CryptoError(f"signature must be {2 * n} bytes, got {len(data)}")
        return cls(int.from_bytes(data[:n], "big"), int.from_bytes(data[n:], "big"))


def sign_digest(h: int, sk: int, nonce_source: NonceSource, curve: CurveParams = P256) -> Signature:
    if not 1 <= sk < curve.q:
        raise CryptoError("private key out of range")
    for _ in range(MAX_NONCE_DRAWS):
        r = nonce_source.scalar(curve)
        R = scalar_mult(curve, r, curve.G)
        if R is None or R[0] % curve.q == 0:
            continue
        s = (h + sk * R[0]) * pow(r, -1, curve.q) % curve.q
        if s:
            return Signature(R[0], s)
    raise RuntimeError("nonce resampling exhausted")


def sign(message: bytes, sk: int, nonce_source: NonceSource, curve: CurveParams = P256) -> Signature:
    return sign_digest(hash_to_scalar(message, curve), sk, nonce_source, curve)


def verify_digest(h: int, sig: Signature, pk: Point, curve: CurveParams = P256) -> bool:
    if not (0 < sig.s < curve.q and 0 < sig.rx < curve.field):
        return False
    if pk is None or not curve.contains(pk):
        return False
    w = pow(sig.s, -1, curve.q)
    u1 = h * w % curve.q
    u2 = sig.rx * w % curve.q
    acc = _base_mult_jacobian(curve, u1)
    if u2:
        acc = _jadd(curve, *acc, *_window_mult(curve, u2, pk))
    R = _to_affine(curve, *acc)
    return R is not None and R[0] == sig.rx


def verify(message: bytes, sig: Signature, pk: Point, curve: CurveParams = P256) -> bool:
    return verify_digest(hash_to_scalar(message, curve), sig, pk, curve)


# --- IDCards ----------------------------------------------------------------------


class Role(str, Enum):
    FV = "FV"
    OV = "OV"


def idcard_payload(role: Role, rsu_id: bytes, fog_id: bytes, ov_id: bytes | None = None) -> bytes:
    """``RSUID || FogID`` for a fog head, ``RSUID || FogID || OID`` for an ordinary vehicle."""
    role = Role(role)
    if (role is Role.OV) != (ov_id is not None):
        raise CryptoError("ov_id must be given exactly when role is OV")
    parts = [rsu_id, fog_id] + ([ov_id] if ov_id is not None else [])
    if any(len(p) != ID_LEN for p in parts):
        raise CryptoError("identities must be 32 bytes")
    return b"".join(parts)


@dataclass(frozen=True)
class IDCard:
    signature: Signature

    def to_bytes(self) -> bytes:
        return self.signature.to_bytes(P256)

    @classmethod
    def from_bytes(cls, data: bytes) -> "IDCard":
        return cls(Signature.from_bytes(data, P256))


def issue_idcard(role, rsu_id, fog_id, ov_id, ta_sk, nonce_source: NonceSource) -> IDCard:
    payload = idcard_payload(role, rsu_id, fog_id, ov_id)
    return IDCard(sign(payload, ta_sk, nonce_source))


def verify_idcard(card: IDCard, role, rsu_id, fog_id, ov_id, ta_pk) -> bool:
    try:
        payload = idcard_payload(role, rsu_id, fog_id, ov_id)
    except CryptoError:
        return False
    return verify(payload, card.signature, ta_pk)
