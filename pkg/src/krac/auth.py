"""The three authentication mechanisms.

PK   per-index signing/wrap keypair; ops carry a counter and a signature over
     h(payload || u32_be(ctr)); peers keep an IPsec-style sliding window per
     identity to kill replays.
ZKP  Feige-Fiat-Shamir: identity is v = s^2 mod N; mutating ops run commit ->
     challenge -> respond against n challenge bits.
OTH  one-time hashes: the ACL stores {h(s || salt), salt}; each op reveals the
     current chain element and installs a replacement hash, so every proof is
     single-use by construction.

Identity objects are what ACL items reference; per-peer verification state
(window position, current chain hash) lives in PkState / OthState.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from enum import Enum

from .core import Index, register_codec, u32
from .crypto import CryptoSuite, KeyBundle, ZkGroup

WINDOW_SIZE = 32
SALT_LEN = 16
DEFAULT_ZK_ROUNDS = 20


class Mechanism(Enum):
    PK = "pk"
    ZKP = "zkp"
    OTH = "oth"


# -- identities (referenced from ACL items) ----------------------------------


@dataclass(frozen=True)
class PkIdentity:
    sign_pk: bytes
    wrap_pk: bytes


@dataclass(frozen=True)
class ZkpIdentity:
    v: int


@dataclass(frozen=True)
class OthIdentity:
    hash: bytes
    salt: bytes

    # one-time-hash identities cannot receive wrapped keys
    wrap_pk = None


# -- proofs (travel with requests) --------------------------------------------


@dataclass(frozen=True)
class PkProof:
    ctr: int
    signature: bytes


@dataclass(frozen=True)
class ZkpCommit:
    commitments: tuple[int, ...]


@dataclass(frozen=True)
class ZkpResponse:
    session_id: int
    responses: tuple[int, ...]


@dataclass(frozen=True)
class OthProof:
    element: bytes
    next_hash: bytes
    next_salt: bytes


# -- per-peer verification state ----------------------------------------------


@dataclass(frozen=True)
class PkState:
    """Sliding replay window: bitmap bit j marks ctr == base + j as seen."""

    base: int = 0
    bitmap: int = 0


@dataclass(frozen=True)
class OthState:
    hash: bytes
    salt: bytes


register_codec(PkIdentity, 0x10, (("sign_pk", "raw"), ("wrap_pk", "raw")))
register_codec(ZkpIdentity, 0x11, (("v", "residue"),))
register_codec(OthIdentity, 0x12, (("hash", "raw"), ("salt", "raw")))
register_codec(PkProof, 0x20, (("ctr", "u32"), ("signature", "raw")))
register_codec(ZkpCommit, 0x21, (("commitments", ("list", "residue")),))
register_codec(ZkpResponse, 0x22, (
    ("session_id", "u32"),
    ("responses", ("list", "residue")),
))
register_codec(OthProof, 0x23, (
    ("element", "raw"),
    ("next_hash", "raw"),
    ("next_salt", "raw"),
))
register_codec(PkState, 0x50, (("base", "u32"), ("bitmap", "u32")))
register_codec(OthState, 0x52, (("hash", "raw"), ("salt", "raw")))


# -- PK ------------------------------------------------------------------------


@dataclass
class PkCreds:
    """Client-held keypair + outgoing counter for one index."""

    bundle: KeyBundle
    ctr: int = 0

    def identity(self) -> PkIdentity:
        return PkIdentity(self.bundle.sign_pk, self.bundle.wrap_pk)


def pk_new_creds(suite: CryptoSuite, rng: random.Random) -> PkCreds:
    return PkCreds(bundle=suite.keygen(rng.randbytes(32)))


def pk_make_proof(suite: CryptoSuite, creds: PkCreds, payload: bytes) -> PkProof:
    creds.ctr += 1
    sig = suite.sign(creds.bundle.sign_sk, payload + u32(creds.ctr))
    return PkProof(ctr=creds.ctr, signature=sig)


def window_admit(state: PkState, ctr: int) -> tuple[bool, PkState]:
    """Accept ctr against the window; on accept, return the advanced state."""
    if ctr < state.base:
        return False, state
    if ctr <= state.base + WINDOW_SIZE - 1:
        bit = 1 << (ctr - state.base)
        if state.bitmap & bit:
            return False, state
        return True, PkState(state.base, state.bitmap | bit)
    shift = ctr - (state.base + WINDOW_SIZE - 1)
    bitmap = (state.bitmap >> shift) | (1 << (WINDOW_SIZE - 1))
    return True, PkState(ctr - WINDOW_SIZE + 1, bitmap & 0xFFFFFFFF)


def pk_verify(
    suite: CryptoSuite,
    identity: PkIdentity,
    proof: PkProof,
    payload: bytes,
    state: PkState,
) -> tuple[bool, PkState]:
    if not suite.verify(identity.sign_pk, payload + u32(proof.ctr), proof.signature):
        return False, state
    return window_admit(state, proof.ctr)


# -- ZKP -------------------------------------------------------------------------


@dataclass
class ZkpCreds:
    """Client-held secret s; the public v = s^2 mod N goes into the ACL."""

    s: int
    v: int


def zkp_new_creds(suite: CryptoSuite, rng: random.Random, group: ZkGroup) -> ZkpCreds:
    suite.counter.kg += 1
    n = group.modulus
    while True:
        s = rng.randrange(2, n - 1)
        if math.gcd(s, n) == 1:
            break
    return ZkpCreds(s=s, v=suite.zk_square(s, n))


def zkp_commit(
    suite: CryptoSuite, rng: random.Random, group: ZkGroup, rounds: int
) -> tuple[tuple[int, ...], ZkpCommit]:
    """Stage 1: fresh r_j per round, commitments x_j = r_j^2 mod N."""
    n = group.modulus
    rs = tuple(rng.randrange(2, n - 1) for _ in range(rounds))
    return rs, ZkpCommit(tuple(suite.zk_square(r, n) for r in rs))


def zkp_challenge(rng: random.Random, rounds: int) -> tuple[int, ...]:
    return tuple(rng.getrandbits(1) for _ in range(rounds))


def zkp_respond(
    suite: CryptoSuite,
    creds: ZkpCreds,
    group: ZkGroup,
    rs: tuple[int, ...],
    challenge: tuple[int, ...],
    session_id: int,
) -> ZkpResponse:
    """Stage 3: y_j = r_j when c_j = 0, r_j * s mod N when c_j = 1."""
    n = group.modulus
    ys = tuple(
        r if c == 0 else suite.zk_mul(r, creds.s, n)
        for r, c in zip(rs, challenge)
    )
    return ZkpResponse(session_id=session_id, responses=ys)


def zkp_verify(
    suite: CryptoSuite,
    group: ZkGroup,
    v: int,
    commit: ZkpCommit,
    challenge: tuple[int, ...],
    response: ZkpResponse,
) -> bool:
    """Check y_j^2 == x_j * v^c_j (mod N) for every round; y_j = 0 is rejected
    since it would verify trivially against x_j = 0."""
    n = group.modulus
    if len(commit.commitments) != len(challenge) or len(response.responses) != len(challenge):
        return False
    for x, c, y in zip(commit.commitments, challenge, response.responses):
        if y == 0:
            return False
        left = suite.zk_square(y, n)
        right = x if c == 0 else suite.zk_mul(x, v, n)
        if left != right:
            return False
    return True


# -- OTH ---------------------------------------------------------------------------


@dataclass
class OthCreds:
    """Client-held master secret + the live chain element per (index, replica).

    `enrolled` caches the originally enrolled identities (recomputable; kept
    for ACL lookups, excluded from storage accounting).
    """

    master: bytes
    chains: dict[tuple[bytes, int], bytes] = field(default_factory=dict)
    enrolled: dict[tuple[bytes, int], OthIdentity] = field(default_factory=dict)


def oth_new_creds(suite: CryptoSuite, rng: random.Random) -> OthCreds:
    suite.counter.kg += 1
    return OthCreds(master=rng.randbytes(32))


def oth_enroll(
    suite: CryptoSuite,
    creds: OthCreds,
    index: Index,
    replica_no: int,
    rng: random.Random,
) -> OthIdentity:
    """Derive s_i for one replica position and build its ACL identity."""
    key = (index.value, replica_no)
    element = suite.mac(creds.master, index.value + b"\x00" + u32(replica_no))
    salt = rng.randbytes(SALT_LEN)
    ident = OthIdentity(hash=suite.hash(element + salt), salt=salt)
    creds.chains[key] = element
    creds.enrolled[key] = ident
    return ident


def oth_make_proof(
    suite: CryptoSuite,
    creds: OthCreds,
    index: Index,
    replica_no: int,
    rng: random.Random,
) -> OthProof:
    """Reveal the current element and install its successor.

    The chain advances locally before the request is sent; a peer that denies
    the op simply keeps the older hash (tolerated, see README).
    """
    key = (index.value, replica_no)
    element = creds.chains[key]
    nxt = suite.mac(creds.master, element)
    next_salt = rng.randbytes(SALT_LEN)
    next_hash = suite.hash(nxt + next_salt)
    creds.chains[key] = nxt
    return OthProof(element=element, next_hash=next_hash, next_salt=next_salt)


def oth_verify(
    suite: CryptoSuite, proof: OthProof, state: OthState
) -> tuple[bool, OthState]:
    if suite.hash(proof.element + state.salt) != state.hash:
        return False, state
    return True, OthState(hash=proof.next_hash, salt=proof.next_salt)
