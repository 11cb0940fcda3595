import hashlib

import pytest
from hypothesis import given, settings, strategies as st

from b2uh import crypto
from b2uh.crypto import (
    P256,
    TOY97,
    CryptoError,
    IDCard,
    NonceSource,
    Role,
    Signature,
    generate_keypair,
    hash_identity,
    idcard_payload,
    issue_idcard,
    scalar_mult,
    scalar_mult_naive,
    sign,
    verify,
    verify_idcard,
)

ec = pytest.importorskip("cryptography.hazmat.primitives.asymmetric.ec")
from cryptography.hazmat.primitives import hashes  # noqa: E402
from cryptography.hazmat.primitives.asymmetric.utils import (  # noqa: E402
    decode_dss_signature,
    encode_dss_signature,
)
from cryptography.exceptions import InvalidSignature  # noqa: E402


class FixedNonce(NonceSource):
    def __init__(self, *values):
        super().__init__(0)
        self.values = list(values)

    def scalar(self, curve):
        return self.values.pop(0)


def toy_points_bruteforce():
    p = TOY97.field
    pts = [None]
    for u in range(p):
        for v in range(p):
            if (v * v - (u**3 + 2 * u + 3)) % p == 0:
                pts.append((u, v))
    return pts


# --- hashing ---------------------------------------------------------------------


def test_sha256_abc_vector():
    assert hash_identity(b"abc").hex().startswith("ba7816bf")
    assert hash_identity(b"abc") == hashlib.sha256(b"abc").digest()


def test_hash_identity_deterministic_and_distinct():
    a, b = bytes.fromhex("00163e0a0b01"), bytes.fromhex("00163e0a0b02")
    assert hash_identity(a) == hash_identity(a)
    assert hash_identity(a) != hash_identity(b)
    assert len(hash_identity(a)) == 32


def test_hash_identity_rejects_empty():
    with pytest.raises(CryptoError):
        hash_identity(b"")


# --- curve parameters and group law ---------------------------------------------


@pytest.mark.parametrize("curve", [P256, TOY97])
def test_curve_invariants(curve):
    assert curve.is_nonsingular()
    assert curve.contains(curve.G)
    assert scalar_mult(curve, curve.q, curve.G) is None
    assert curve.q > 3


def test_toy_curve_point_count_matches_enumeration():
    pts = toy_points_bruteforce()
    assert sorted(pts, key=str) == sorted(crypto.enumerate_points(TOY97), key=str)
    assert len(pts) == 100
    assert len(pts) % TOY97.q == 0


def test_toy_scalar_mult_matches_repeated_addition():
    pts = toy_points_bruteforce()
    for P in pts[1:]:
        acc = None
        for k in range(1, 21):
            acc = crypto.point_add(TOY97, acc, P)
            assert scalar_mult(TOY97, k, P) == acc == scalar_mult_naive(TOY97, k, P)


def test_p256_public_keys_match_reference_library():
    rng = NonceSource(7)
    for _ in range(5):
        kp = generate_keypair(rng)
        ref = ec.derive_private_key(kp.sk, ec.SECP256R1()).public_key().public_numbers()
        assert kp.pk == (ref.x, ref.y)


def test_p256_scalar_mult_on_non_generator_point():
    P = scalar_mult(P256, 123456789, P256.G)
    k = 987654321
    assert scalar_mult(P256, k, P) == scalar_mult(P256, 123456789 * k % P256.q, P256.G)
    assert scalar_mult(P256, P256.q - 1, P) == crypto.point_neg(P256, P)


# --- signatures ------------------------------------------------------------------


def test_sign_verify_roundtrip_and_encoding():
    rng = NonceSource(1)
    kp = generate_keypair(rng)
    sig = sign(b"hello", kp.sk, rng)
    assert verify(b"hello", sig, kp.pk)
    raw = sig.to_bytes()
    assert len(raw) == 64
    assert Signature.from_bytes(raw) == sig


def test_bit_flip_and_wrong_key_fail():
    rng = NonceSource(2)
    kp1, kp2 = generate_keypair(rng), generate_keypair(rng)
    msg = b"registration payload"
    sig = sign(msg, kp1.sk, rng)
    flipped = bytes([msg[0] ^ 1]) + msg[1:]
    assert not verify(flipped, sig, kp1.pk)
    assert not verify(msg, sig, kp2.pk)


def test_two_nonces_two_valid_signatures():
    rng = NonceSource(3)
    kp = generate_keypair(rng)
    s1, s2 = sign(b"m", kp.sk, rng), sign(b"m", kp.sk, rng)
    assert s1 != s2
    assert verify(b"m", s1, kp.pk) and verify(b"m", s2, kp.pk)


def test_degenerate_signatures_rejected_without_exception():
    rng = NonceSource(4)
    kp = generate_keypair(rng)
    sig = sign(b"m", kp.sk, rng)
    assert not verify(b"m", Signature(sig.rx, 0), kp.pk)
    assert not verify(b"m", Signature(0, sig.s), kp.pk)
    assert not verify(b"m", sig, (kp.pk[0], kp.pk[1] ^ 1))  # off-curve key
    assert not verify(b"m", sig, None)


def test_signatures_interoperate_with_reference_ecdsa():
    # the signing equation is ECDSA's; only R_x is kept unreduced
    rng = NonceSource(5)
    kp = generate_keypair(rng)
    ref_priv = ec.derive_private_key(kp.sk, ec.SECP256R1())
    for i in range(5):
        msg = f"message {i}".encode()
        ours = sign(msg, kp.sk, rng)
        ref_priv.public_key().verify(encode_dss_signature(ours.rx, ours.s), msg, ec.ECDSA(hashes.SHA256()))
        r, s = decode_dss_signature(ref_priv.sign(msg, ec.ECDSA(hashes.SHA256())))
        assert verify(msg, Signature(r, s), kp.pk)
    with pytest.raises(InvalidSignature):
        bad = sign(b"x", kp.sk, rng)
        ref_priv.public_key().verify(encode_dss_signature(bad.rx, bad.s), b"y", ec.ECDSA(hashes.SHA256()))


def test_toy_curve_signature_with_fixed_nonce():
    # pick r whose R = rG (by repeated addition) has R_x not divisible by q
    sk = 3
    pk = scalar_mult_naive(TOY97, sk, TOY97.G)
    h = crypto.hash_to_scalar(b"toy", TOY97)
    for r in range(1, TOY97.q):
        R = scalar_mult_naive(TOY97, r, TOY97.G)
        s = (h + sk * R[0]) * pow(r, -1, TOY97.q) % TOY97.q
        if R[0] % TOY97.q and s:
            break
    sig = sign(b"toy", sk, FixedNonce(r), TOY97)
    assert sig.rx == R[0]
    assert sig.s == s
    assert verify(b"toy", sig, pk, TOY97)


def test_nonce_resampling_skips_degenerate_r():
    # on the toy curve 2G = (80, 10) has R_x = 0 mod q, so r = 2 must be redrawn
    sk, h = 2, 0
    assert scalar_mult_naive(TOY97, 2, TOY97.G)[0] % TOY97.q == 0
    sig = crypto.sign_digest(h, sk, FixedNonce(2, 1), TOY97)
    assert sig.rx == TOY97.gx
    assert crypto.verify_digest(h, sig, scalar_mult_naive(TOY97, sk, TOY97.G), TOY97)


def test_nonce_exhaustion_raises():
    sk = 2
    h = (-sk * TOY97.gx) % TOY97.q
    with pytest.raises(RuntimeError):
        crypto.sign_digest(h, sk, FixedNonce(*([1] * crypto.MAX_NONCE_DRAWS)), TOY97)


def test_private_key_range_checked():
    with pytest.raises(CryptoError):
        sign(b"m", 0, NonceSource(0))


@settings(max_examples=40, deadline=None)
@given(st.binary(min_size=0, max_size=200), st.binary(min_size=1, max_size=200))
def test_property_roundtrip_and_mismatch(m1, m2):
    rng = NonceSource(m1 + b"|" + m2)
    kp = generate_keypair(rng)
    sig = sign(m1, kp.sk, rng)
    assert verify(m1, sig, kp.pk)
    if m1 != m2:
        assert not verify(m2, sig, kp.pk)
    assert Signature.from_bytes(sig.to_bytes()) == sig


# --- IDCards ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def ta():
    return generate_keypair(NonceSource("ta"))


def ids():
    return hash_identity(b"rsu"), hash_identity(b"fog"), hash_identity(b"ov")


def test_payload_lengths():
    rsu, fog, ov = ids()
    assert len(idcard_payload(Role.FV, rsu, fog)) == 64
    assert len(idcard_payload(Role.OV, rsu, fog, ov)) == 96


@pytest.mark.parametrize("role,ov", [(Role.FV, True), (Role.OV, False)])
def test_role_ov_mismatch(role, ov):
    rsu, fog, oid = ids()
    with pytest.raises(CryptoError):
        idcard_payload(role, rsu, fog, oid if ov else None)


def test_idcard_roundtrip_and_wrong_fields(ta):
    rsu, fog, ov = ids()
    rng = NonceSource(9)
    card = issue_idcard(Role.OV, rsu, fog, ov, ta.sk, rng)
    assert len(card.to_bytes()) == 64
    assert IDCard.from_bytes(card.to_bytes()) == card
    assert verify_idcard(card, Role.OV, rsu, fog, ov, ta.pk)
    assert not verify_idcard(card, Role.OV, rsu, hash_identity(b"other fog"), ov, ta.pk)
    other = generate_keypair(rng)
    assert not verify_idcard(card, Role.OV, rsu, fog, ov, other.pk)
    fv_card = issue_idcard(Role.FV, rsu, fog, None, ta.sk, rng)
    assert verify_idcard(fv_card, Role.FV, rsu, fog, None, ta.pk)
    assert not verify_idcard(fv_card, Role.OV, rsu, fog, ov, ta.pk)
