"""Deterministic in-process peer network.

Peers sit on a hash ring (a position is handled by the clockwise successor
of its digest). Routing is collapsed to direct delivery with a tunable path
length y: a request leg costs ceil(y/2) messages, a reply leg floor(y/2),
and a dropped request pays the request leg only.

An adversary controls up to f subverted peers. Behaviors act at the
endpoint (no in-transit tampering):

  Deny            swallow every request
  ForgeValue      answer reads with a fabricated value, fake-ack mutations
  TamperAcl       serve honest data but corrupt the wrapped keys in replies
  ReplayCaptured  behave honestly while recording requests for later replay
  ClaimOwnership  steal empty entries: enroll the attacker as owner instead

All randomness (challenges, attacker identities, tampering) is drawn from
one seeded RNG, so equal seeds give byte-identical runs.
"""

from __future__ import annotations

import bisect
import math
import random
import struct
from dataclasses import dataclass
from typing import Optional, Union

from .auth import DEFAULT_ZK_ROUNDS, OthIdentity, ZkpResponse
from .core import AclItem, DhtValue, Position, Rights, hash_bytes
from .crypto import CryptoSuite, make_zk_group
from .peer import (
    ChallengeIssued,
    Decision,
    Op,
    Peer,
    Request,
    Stored,
    StoredEntry,
    ValueReply,
)


def peer_id(seed: int, peer_no: int) -> bytes:
    return hash_bytes(struct.pack(">QI", seed & 0xFFFFFFFFFFFFFFFF, peer_no))


# -- adversary behaviors -----------------------------------------------------


@dataclass(frozen=True)
class Deny:
    pass


@dataclass(frozen=True)
class ForgeValue:
    data: bytes = b"\xde\xad\xbe\xef"


@dataclass(frozen=True)
class TamperAcl:
    pass


@dataclass(frozen=True)
class ReplayCaptured:
    pass


@dataclass(frozen=True)
class ClaimOwnership:
    pass


Behavior = Union[Deny, ForgeValue, TamperAcl, ReplayCaptured, ClaimOwnership]

BEHAVIOR_NAMES = ("deny", "forge", "tamper", "replay", "claim")


def parse_behavior(spec: str) -> Behavior:
    """Parse "deny" | "forge[:hex]" | "tamper" | "replay" | "claim"."""
    name, _, arg = spec.partition(":")
    if name == "deny":
        return Deny()
    if name == "forge":
        return ForgeValue(bytes.fromhex(arg)) if arg else ForgeValue()
    if name == "tamper":
        return TamperAcl()
    if name == "replay":
        return ReplayCaptured()
    if name == "claim":
        return ClaimOwnership()
    raise ValueError(f"unknown behavior {spec!r}")


@dataclass
class TrafficLedger:
    """Message accounting under the path-length model."""

    y: int = 2
    messages: int = 0
    requests: int = 0
    replies: int = 0

    def request_leg(self) -> None:
        self.requests += 1
        self.messages += math.ceil(self.y / 2)

    def reply_leg(self) -> None:
        self.replies += 1
        self.messages += self.y // 2

    def snapshot(self) -> dict[str, int]:
        return {"messages": self.messages, "requests": self.requests, "replies": self.replies}


class Network:
    """The whole simulated overlay; sessions talk to it through submit()."""

    def __init__(
        self,
        peers: int,
        seed: int,
        k: int,
        y: int = 2,
        zk_rounds: int = DEFAULT_ZK_ROUNDS,
    ):
        if peers < 1:
            raise ValueError("need at least one peer")
        self.seed = seed
        self.k = k
        self.y = y
        self.zk_rounds = zk_rounds
        self.rng = random.Random(seed)
        self.clock = 0.0
        self.ledger = TrafficLedger(y=y)
        self.peer_suite = CryptoSuite()
        self.peers: dict[bytes, Peer] = {}
        for i in range(peers):
            pid = peer_id(seed, i)
            self.peers[pid] = Peer(pid, zk_group=None, zk_rounds=zk_rounds, suite=self.peer_suite)
        self._ids = sorted(self.peers)
        self.adversary: dict[bytes, Behavior] = {}
        self._attacker_identity: dict[bytes, OthIdentity] = {}
        self.captured: list[Request] = []
        self._zk_group = None

    # the modulus is only generated when some session actually needs it
    @property
    def zk_group(self):
        if self._zk_group is None:
            self._zk_group = make_zk_group(random.Random(self.seed ^ 0x7A313D))
            for p in self.peers.values():
                p.zk_group = self._zk_group
        return self._zk_group

    # -- topology ---------------------------------------------------------------

    def responsible_for(self, position: Position) -> bytes:
        idx = bisect.bisect_left(self._ids, position.digest)
        return self._ids[idx % len(self._ids)]

    def responsible_set(self, positions: list[Position]) -> list[bytes]:
        return [self.responsible_for(p) for p in positions]

    def sample_api_peers(self, rng: random.Random, count: int) -> list[bytes]:
        if len(self._ids) >= count:
            return rng.sample(self._ids, count)
        return [self._ids[rng.randrange(len(self._ids))] for _ in range(count)]

    def subvert(self, pid: bytes, behavior: Behavior) -> None:
        if pid not in self.peers:
            raise KeyError("no such peer")
        self.adversary[pid] = behavior
        if pid not in self._attacker_identity:
            self._attacker_identity[pid] = OthIdentity(
                hash=self.rng.randbytes(32), salt=self.rng.randbytes(16)
            )

    # -- delivery -----------------------------------------------------------------

    def submit(self, api_id: bytes, request: Request) -> Optional[Decision]:
        """One logical exchange: route to the responsible peer, return its
        reply, or None when the request was swallowed."""
        self.ledger.request_leg()
        self.clock += 0.01
        pid = self.responsible_for(request.position)
        decision = self._apply(pid, request)
        if decision is None:
            return None
        self.ledger.reply_leg()
        return decision

    def replay(self, request: Request) -> Optional[Decision]:
        """Re-deliver a captured request verbatim (attacker traffic)."""
        return self.submit(b"", request)

    def replay_zkp(self, commit_req: Request, response_req: Request) -> Optional[Decision]:
        """Replay a captured two-stage exchange: the commit gets a fresh
        challenge, then the captured responses are re-sent under the new
        session id."""
        first = self.replay(commit_req)
        if not isinstance(first, ChallengeIssued):
            return first
        reused = ZkpResponse(first.session_id, response_req.proof.responses)
        return self.replay(
            Request(
                response_req.op,
                response_req.position,
                identity=response_req.identity,
                proof=reused,
                data=response_req.data,
                delta=response_req.delta,
            )
        )

    def _apply(self, pid: bytes, request: Request) -> Optional[Decision]:
        peer = self.peers[pid]
        behavior = self.adversary.get(pid)
        if behavior is None:
            return peer.handle(request, self.rng, self.clock)
        if isinstance(behavior, Deny):
            return None
        if isinstance(behavior, ForgeValue):
            if request.op is Op.GET:
                forged = DhtValue(
                    (AclItem(self._attacker_identity[pid], None, Rights.OWNER),),
                    behavior.data,
                )
                return ValueReply(forged)
            return Stored()
        if isinstance(behavior, TamperAcl):
            decision = peer.handle(request, self.rng, self.clock)
            if isinstance(decision, ValueReply) and decision.value is not None:
                decision = ValueReply(self._tamper(decision.value))
            return decision
        if isinstance(behavior, ReplayCaptured):
            self.captured.append(request)
            return peer.handle(request, self.rng, self.clock)
        # ClaimOwnership: hijack first accesses, stay honest otherwise
        if request.op is Op.PUT and request.value is not None and request.position.digest not in peer.store:
            hijacked = DhtValue(
                (AclItem(self._attacker_identity[pid], None, Rights.OWNER),),
                request.value.data,
            )
            peer.store[request.position.digest] = StoredEntry(value=hijacked)
            return Stored()
        return peer.handle(request, self.rng, self.clock)

    def _tamper(self, value: DhtValue) -> DhtValue:
        items = tuple(
            AclItem(
                it.auth,
                self.rng.randbytes(len(it.wrapped_key)) if it.wrapped_key is not None else None,
                it.rights,
            )
            for it in value.acl
        )
        return DhtValue(items, value.data)

    # -- determinism support ----------------------------------------------------------

    def serialize_stores(self) -> bytes:
        """Byte image of every peer's store, in ring order."""
        return b"".join(pid + self.peers[pid].serialize_store() for pid in self._ids)
