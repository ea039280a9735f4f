"""Counted cryptographic primitives.

Every protocol-relevant operation routes through a CryptoSuite so user- and
peer-side costs can be asserted per operation class:

  KG     identity keypair generation
  SO     symmetric encrypt/decrypt of the data object
  HO     hash / MAC computations
  MO     modular square / multiply (zero-knowledge arithmetic)
  AO_pk  public-key operations (verify, key wrap)
  AO_sk  private-key operations (sign, key unwrap)

Concrete algorithms: Ed25519 signatures, X25519-ECIES key wrap, AES-128-GCM
for the data object, HMAC-SHA256 for hash chains, SHA-256 elsewhere.
"""

from __future__ import annotations

import hashlib
import hmac as hmac_mod
import random
from dataclasses import dataclass

import gmpy2
from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    PublicFormat,
)

DATA_KEY_LEN = 16        # AES-128 k_d
SIG_LEN = 64
PUB_KEY_LEN = 32
WRAPPED_KEY_LEN = 76     # eph_pk 32 + nonce 12 + ct 16 + tag 16
ZK_MODULUS_MIN_BITS = 665


class CryptoError(Exception):
    pass


class WrapError(CryptoError):
    pass


class DecryptError(CryptoError):
    pass


@dataclass
class OpCounter:
    """Tally of operations by cost class."""

    kg: int = 0
    so: int = 0
    ho: int = 0
    mo: int = 0
    ao_pk: int = 0
    ao_sk: int = 0

    FIELDS = ("kg", "so", "ho", "mo", "ao_pk", "ao_sk")

    def snapshot(self) -> dict[str, int]:
        return {f: getattr(self, f) for f in self.FIELDS}

    def diff(self, before: dict[str, int]) -> dict[str, int]:
        return {f: getattr(self, f) - before[f] for f in self.FIELDS}

    def add(self, other: "OpCounter") -> None:
        for f in self.FIELDS:
            setattr(self, f, getattr(self, f) + getattr(other, f))

    def reset(self) -> None:
        for f in self.FIELDS:
            setattr(self, f, 0)


@dataclass(frozen=True)
class KeyBundle:
    """Per-index identity keys: Ed25519 signing pair + X25519 wrap pair."""

    sign_sk: bytes
    sign_pk: bytes
    wrap_sk: bytes
    wrap_pk: bytes


@dataclass(frozen=True)
class ZkGroup:
    """Public modulus for the zero-knowledge protocol.

    N = p·q for two secret ~333-bit primes; the factorization is discarded
    at generation time, so square roots mod N stay hard for everyone.
    """

    modulus: int

    def __post_init__(self) -> None:
        if self.modulus.bit_length() < ZK_MODULUS_MIN_BITS:
            raise ValueError("zk modulus too small")


def make_zk_group(rng: random.Random) -> ZkGroup:
    def prime_333() -> int:
        candidate = rng.getrandbits(332) | (1 << 332)
        return int(gmpy2.next_prime(candidate))

    p = prime_333()
    q = prime_333()
    while q == p:
        q = prime_333()
    return ZkGroup(modulus=p * q)


def mod_invert(a: int, n: int) -> int:
    return int(gmpy2.invert(a, n))


class CryptoSuite:
    """Primitive operations, each charged to an OpCounter."""

    def __init__(self, counter: OpCounter | None = None):
        self.counter = counter if counter is not None else OpCounter()

    # -- identity keys ------------------------------------------------------

    def keygen(self, seed: bytes) -> KeyBundle:
        self.counter.kg += 1
        sign_seed = hashlib.sha256(seed + b"sign").digest()
        wrap_seed = hashlib.sha256(seed + b"wrap").digest()
        sign_sk = Ed25519PrivateKey.from_private_bytes(sign_seed)
        wrap_sk = X25519PrivateKey.from_private_bytes(wrap_seed)
        return KeyBundle(
            sign_sk=sign_seed,
            sign_pk=sign_sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw),
            wrap_sk=wrap_seed,
            wrap_pk=wrap_sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw),
        )

    # -- signatures (hash-then-sign) ----------------------------------------

    def sign(self, sign_sk: bytes, message: bytes) -> bytes:
        self.counter.ho += 1
        self.counter.ao_sk += 1
        digest = hashlib.sha256(message).digest()
        return Ed25519PrivateKey.from_private_bytes(sign_sk).sign(digest)

    def verify(self, sign_pk: bytes, message: bytes, signature: bytes) -> bool:
        self.counter.ho += 1
        self.counter.ao_pk += 1
        digest = hashlib.sha256(message).digest()
        try:
            Ed25519PublicKey.from_public_bytes(sign_pk).verify(signature, digest)
            return True
        except (InvalidSignature, ValueError):
            return False

    # -- key wrap ------------------------------------------------------------

    def wrap_key(self, wrap_pk: bytes, data_key: bytes, rng: random.Random) -> bytes:
        self.counter.ao_pk += 1
        eph_sk = X25519PrivateKey.from_private_bytes(rng.randbytes(32))
        eph_pk = eph_sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        shared = eph_sk.exchange(X25519PublicKey.from_public_bytes(wrap_pk))
        aes_key = hashlib.sha256(shared + b"kwrap").digest()[:16]
        nonce = rng.randbytes(12)
        ct = AESGCM(aes_key).encrypt(nonce, data_key, None)
        return eph_pk + nonce + ct

    def unwrap_key(self, wrap_sk: bytes, wrapped: bytes) -> bytes:
        self.counter.ao_sk += 1
        if len(wrapped) != WRAPPED_KEY_LEN:
            raise WrapError("bad wrapped key length")
        eph_pk, nonce, ct = wrapped[:32], wrapped[32:44], wrapped[44:]
        shared = X25519PrivateKey.from_private_bytes(wrap_sk).exchange(
            X25519PublicKey.from_public_bytes(eph_pk)
        )
        aes_key = hashlib.sha256(shared + b"kwrap").digest()[:16]
        try:
            return AESGCM(aes_key).decrypt(nonce, ct, None)
        except InvalidTag as exc:
            raise WrapError("key unwrap failed") from exc

    # -- data object encryption ----------------------------------------------

    def encrypt(self, data_key: bytes, plaintext: bytes, rng: random.Random) -> bytes:
        self.counter.so += 1
        nonce = rng.randbytes(12)
        return nonce + AESGCM(data_key).encrypt(nonce, plaintext, None)

    def decrypt(self, data_key: bytes, blob: bytes) -> bytes:
        self.counter.so += 1
        if len(blob) < 12 + 16:
            raise DecryptError("ciphertext too short")
        try:
            return AESGCM(data_key).decrypt(blob[:12], blob[12:], None)
        except InvalidTag as exc:
            raise DecryptError("wrong key or corrupted ciphertext") from exc

    # -- hashing -------------------------------------------------------------

    def hash(self, message: bytes) -> bytes:
        self.counter.ho += 1
        return hashlib.sha256(message).digest()

    def mac(self, key: bytes, message: bytes) -> bytes:
        self.counter.ho += 1
        return hmac_mod.new(key, message, hashlib.sha256).digest()

    # -- zero-knowledge arithmetic --------------------------------------------

    def zk_square(self, x: int, modulus: int) -> int:
        self.counter.mo += 1
        return (x * x) % modulus

    def zk_mul(self, a: int, b: int, modulus: int) -> int:
        self.counter.mo += 1
        return (a * b) % modulus
