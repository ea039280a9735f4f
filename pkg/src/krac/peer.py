"""Peer-side request handling: storage, authentication, authorization.

A peer holds one StoredEntry per position digest. Reads are open (anyone may
fetch the ciphertext; the reply ACL is narrowed to the requester's and the
owner's items), writes and ACL changes are checked against the entry's ACL
under the requester's proven identity. An empty entry is claimed by whoever
touches it first: the first put is accepted unauthenticated and its ACL owner
becomes the entry's owner.

ZKP mutations are two exchanges: a commit request escrows a pending session
and returns challenge bits; the follow-up carries the responses plus the
actual payload.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional, Union

from .core import (
    Action,
    AclItem,
    DhtValue,
    Position,
    Rights,
    canonical_encode,
    hash_bytes,
    register_codec,
    rights_allows,
    u32,
)
from .auth import (
    DEFAULT_ZK_ROUNDS,
    OthIdentity,
    OthProof,
    OthState,
    PkIdentity,
    PkProof,
    PkState,
    ZkpCommit,
    ZkpIdentity,
    ZkpResponse,
    oth_verify,
    pk_verify,
    zkp_challenge,
    zkp_verify,
)
from .crypto import CryptoSuite, ZkGroup

ZKP_SESSION_TTL = 30.0  # simulated seconds before an escrowed session lapses


class Op(Enum):
    PUT = "put"
    GET = "get"
    SET = "set"


@dataclass(frozen=True)
class DeltaItem:
    """One ACL change: rights=None removes the identity, otherwise upsert.

    An upsert with wrapped_key=None keeps whatever key the item already has.
    """

    auth: Any
    wrapped_key: Optional[bytes]
    rights: Optional[Rights]


@dataclass(frozen=True)
class AclDelta:
    items: tuple[DeltaItem, ...]


register_codec(DeltaItem, 0x31, (
    ("auth", "node"),
    ("wrapped_key", ("opt", "raw")),
    ("rights", ("opt", "rights")),
))
register_codec(AclDelta, 0x30, (("items", ("list", "node")),))


@dataclass(frozen=True)
class Request:
    """What travels to one replica position.

    proof=None marks a first-access attempt; a ZkpCommit proof opens a
    two-stage session, a ZkpResponse closes it. `value` is only meaningful
    for first-access puts; authenticated puts replace the data object via
    `data` and leave the ACL alone.
    """

    op: Op
    position: Position
    identity: Any = None
    proof: Any = None
    value: Optional[DhtValue] = None
    data: Optional[bytes] = None
    delta: Optional[AclDelta] = None


@dataclass(frozen=True)
class Stored:
    pass


@dataclass(frozen=True)
class ValueReply:
    value: Optional[DhtValue]


@dataclass(frozen=True)
class Denied:
    reason: str


@dataclass(frozen=True)
class ChallengeIssued:
    session_id: int
    challenge: tuple[int, ...]


Decision = Union[Stored, ValueReply, Denied, ChallengeIssued]


def put_sign_payload(data: bytes) -> bytes:
    return b"PUT" + data


def get_sign_payload() -> bytes:
    return b"GET"


def set_sign_payload(delta: AclDelta) -> bytes:
    return b"SET" + canonical_encode(delta)


def delta_required_action(delta: AclDelta, value: DhtValue) -> Optional[Action]:
    """Map a delta to the right it needs, or None when it is never legal.

    Touching admin rights (granting, revoking, demoting an admin) needs
    CHANGE_ADMIN; plain r/w grants, removals and key re-wraps need CHANGE_RW.
    Naming the current owner with rights=OWNER is a pure re-wrap; any other
    owner grant or an owner removal is invalid.
    """
    if not delta.items:
        return None
    owner_bytes = value.owner().identity_bytes()
    needs_admin = False
    for item in delta.items:
        ib = canonical_encode(item.auth)
        existing = value.find(ib)
        if item.rights is None:
            if existing is None or existing.rights is Rights.OWNER:
                return None
            if existing.rights is Rights.ADMIN:
                needs_admin = True
        elif item.rights is Rights.OWNER:
            if ib != owner_bytes:
                return None
        elif item.rights is Rights.ADMIN:
            needs_admin = True
        else:
            # a READ/WRITE upsert that demotes an admin is an admin change;
            # demoting the owner this way is never legal
            if existing is not None and existing.rights is Rights.OWNER:
                return None
            if existing is not None and existing.rights is Rights.ADMIN:
                needs_admin = True
    return Action.CHANGE_ADMIN if needs_admin else Action.CHANGE_RW


@dataclass
class PendingZkp:
    session_id: int
    identity_bytes: bytes
    commit: ZkpCommit
    challenge: tuple[int, ...]
    intent: Op
    deadline: float

    def fingerprint(self) -> bytes:
        return hash_bytes(
            u32(self.session_id)
            + self.identity_bytes
            + bytes(self.challenge)
            + canonical_encode(self.commit)
            + self.intent.value.encode()
        )


@dataclass
class StoredEntry:
    value: DhtValue
    auth_states: dict[bytes, Any] = field(default_factory=dict)


class Peer:
    """One storage node; `handle` is the only entry point."""

    def __init__(
        self,
        peer_id: bytes,
        zk_group: Optional[ZkGroup] = None,
        zk_rounds: int = DEFAULT_ZK_ROUNDS,
        suite: Optional[CryptoSuite] = None,
    ):
        self.peer_id = peer_id
        self.zk_group = zk_group
        self.zk_rounds = zk_rounds
        self.suite = suite if suite is not None else CryptoSuite()
        self.store: dict[bytes, StoredEntry] = {}
        self.pending: dict[tuple[bytes, bytes], PendingZkp] = {}
        self._next_session = 0

    # -- dispatch -------------------------------------------------------------

    def handle(self, req: Request, rng: random.Random, now: float = 0.0) -> Decision:
        if isinstance(req.proof, ZkpCommit):
            return self._zkp_begin(req, rng, now)
        if isinstance(req.proof, ZkpResponse):
            return self._zkp_finish(req, now)
        if req.op is Op.PUT:
            return self._put(req)
        if req.op is Op.GET:
            return self._get(req)
        if req.op is Op.SET:
            return self._set(req)
        return Denied("bad-request")

    # -- plain operations ------------------------------------------------------

    def _put(self, req: Request) -> Decision:
        entry = self.store.get(req.position.digest)
        if entry is None:
            return self._enroll(req)
        if req.identity is None or req.proof is None:
            return Denied("missing-proof")
        if req.data is None:
            return Denied("bad-request")
        item = entry.value.find(canonical_encode(req.identity))
        if item is None:
            return Denied("unknown-identity")
        if not rights_allows(item.rights, Action.WRITE_DATA):
            return Denied("no-rights")
        if not self._check_proof(entry, item, req.proof, put_sign_payload(req.data)):
            return Denied("bad-proof")
        entry.value = DhtValue(acl=entry.value.acl, data=req.data)
        return Stored()

    def _enroll(self, req: Request) -> Decision:
        # first access: unauthenticated, requester's ACL claims the entry
        if req.value is None or req.identity is None:
            return Denied("bad-request")
        owner = req.value.owner()
        if owner.identity_bytes() != canonical_encode(req.identity):
            return Denied("bad-request")
        entry = StoredEntry(value=req.value)
        self.store[req.position.digest] = entry
        self._state_for(entry, owner)
        return Stored()

    def _get(self, req: Request) -> Decision:
        entry = self.store.get(req.position.digest)
        if entry is None:
            return ValueReply(None)
        requester_bytes = None
        if req.identity is not None:
            if not isinstance(req.proof, PkProof):
                return Denied("bad-request")
            item = entry.value.find(canonical_encode(req.identity))
            if item is None:
                return Denied("unknown-identity")
            if not self._check_proof(entry, item, req.proof, get_sign_payload()):
                return Denied("bad-proof")
            requester_bytes = item.identity_bytes()
        return ValueReply(self._narrowed(entry.value, requester_bytes))

    @staticmethod
    def _narrowed(value: DhtValue, requester_bytes: Optional[bytes]) -> DhtValue:
        keep = tuple(
            it
            for it in value.acl
            if it.rights is Rights.OWNER or it.identity_bytes() == requester_bytes
        )
        return DhtValue(acl=keep, data=value.data)

    def _set(self, req: Request) -> Decision:
        entry = self.store.get(req.position.digest)
        if entry is None:
            return Denied("no-entry")
        if req.identity is None or req.proof is None or req.delta is None:
            return Denied("bad-request")
        item = entry.value.find(canonical_encode(req.identity))
        if item is None:
            return Denied("unknown-identity")
        required = delta_required_action(req.delta, entry.value)
        if required is None:
            return Denied("bad-delta")
        if not rights_allows(item.rights, required):
            return Denied("no-rights")
        if not self._check_proof(entry, item, req.proof, set_sign_payload(req.delta)):
            return Denied("bad-proof")
        return self._apply_delta(req.position.digest, entry, req.delta)

    # -- ZKP two-stage ------------------------------------------------------------

    def _zkp_begin(self, req: Request, rng: random.Random, now: float) -> Decision:
        if self.zk_group is None or not isinstance(req.identity, ZkpIdentity):
            return Denied("bad-request")
        entry = self.store.get(req.position.digest)
        if entry is None:
            return Denied("no-entry")
        ib = canonical_encode(req.identity)
        item = entry.value.find(ib)
        if item is None:
            return Denied("unknown-identity")
        # precheck with the weakest right the intended op could need; the
        # actual delta is checked again at the second exchange
        precheck = Action.WRITE_DATA if req.op is Op.PUT else Action.CHANGE_RW
        if req.op is Op.GET or not rights_allows(item.rights, precheck):
            return Denied("no-rights")
        if len(req.proof.commitments) != self.zk_rounds:
            return Denied("bad-proof")
        self._next_session += 1
        session = PendingZkp(
            session_id=self._next_session,
            identity_bytes=ib,
            commit=req.proof,
            challenge=zkp_challenge(rng, self.zk_rounds),
            intent=req.op,
            deadline=now + ZKP_SESSION_TTL,
        )
        self.pending[(req.position.digest, ib)] = session
        return ChallengeIssued(session.session_id, session.challenge)

    def _zkp_finish(self, req: Request, now: float) -> Decision:
        if self.zk_group is None or not isinstance(req.identity, ZkpIdentity):
            return Denied("bad-request")
        entry = self.store.get(req.position.digest)
        if entry is None:
            return Denied("no-entry")
        ib = canonical_encode(req.identity)
        key = (req.position.digest, ib)
        session = self.pending.get(key)
        if session is None or session.session_id != req.proof.session_id:
            return Denied("no-session")
        if now > session.deadline:
            del self.pending[key]
            return Denied("session-expired")
        if session.intent is not req.op:
            del self.pending[key]
            return Denied("bad-session")
        del self.pending[key]
        item = entry.value.find(ib)
        if item is None:
            return Denied("unknown-identity")
        ok = zkp_verify(
            self.suite, self.zk_group, req.identity.v,
            session.commit, session.challenge, req.proof,
        )
        if not ok:
            return Denied("bad-proof")
        if req.op is Op.PUT:
            if req.data is None:
                return Denied("bad-request")
            if not rights_allows(item.rights, Action.WRITE_DATA):
                return Denied("no-rights")
            entry.value = DhtValue(acl=entry.value.acl, data=req.data)
            return Stored()
        if req.delta is None:
            return Denied("bad-request")
        required = delta_required_action(req.delta, entry.value)
        if required is None:
            return Denied("bad-delta")
        if not rights_allows(item.rights, required):
            return Denied("no-rights")
        return self._apply_delta(req.position.digest, entry, req.delta)

    # -- shared helpers --------------------------------------------------------------

    def _check_proof(self, entry: StoredEntry, item: AclItem, proof: Any, payload: bytes) -> bool:
        ident = item.auth
        if isinstance(ident, PkIdentity):
            if not isinstance(proof, PkProof):
                return False
            state = self._state_for(entry, item)
            ok, new_state = pk_verify(self.suite, ident, proof, payload, state)
            if ok:
                entry.auth_states[item.identity_bytes()] = new_state
            return ok
        if isinstance(ident, OthIdentity):
            if not isinstance(proof, OthProof):
                return False
            state = self._state_for(entry, item)
            ok, new_state = oth_verify(self.suite, proof, state)
            if ok:
                entry.auth_states[item.identity_bytes()] = new_state
            return ok
        # ZKP identities never authenticate through the one-shot path
        return False

    def _state_for(self, entry: StoredEntry, item: AclItem) -> Any:
        ib = item.identity_bytes()
        state = entry.auth_states.get(ib)
        if state is None:
            if isinstance(item.auth, PkIdentity):
                state = PkState()
            elif isinstance(item.auth, OthIdentity):
                state = OthState(hash=item.auth.hash, salt=item.auth.salt)
            else:
                return None
            entry.auth_states[ib] = state
        return state

    def _apply_delta(self, digest: bytes, entry: StoredEntry, delta: AclDelta) -> Decision:
        # build the replacement ACL on the side; nothing in the entry moves
        # until the whole delta has validated
        items = {it.identity_bytes(): it for it in entry.value.acl}
        removed: list[bytes] = []
        for d in delta.items:
            ib = canonical_encode(d.auth)
            if d.rights is None:
                items.pop(ib, None)
                removed.append(ib)
                continue
            existing = items.get(ib)
            wrapped = d.wrapped_key
            if wrapped is None and existing is not None:
                wrapped = existing.wrapped_key
            try:
                items[ib] = AclItem(auth=d.auth, wrapped_key=wrapped, rights=d.rights)
            except ValueError:
                return Denied("bad-delta")
        try:
            new_value = DhtValue(acl=tuple(items.values()), data=entry.value.data)
        except ValueError:
            return Denied("bad-delta")
        entry.value = new_value
        for ib in removed:
            entry.auth_states.pop(ib, None)
        return Stored()

    # -- determinism support -----------------------------------------------------------

    def serialize_store(self) -> bytes:
        """Stable byte image of everything this peer holds."""
        parts = [u32(len(self.store))]
        for digest in sorted(self.store):
            entry = self.store[digest]
            vb = canonical_encode(entry.value)
            parts.append(digest + u32(len(vb)) + vb)
            parts.append(u32(len(entry.auth_states)))
            for ib in sorted(entry.auth_states):
                sb = canonical_encode(entry.auth_states[ib])
                parts.append(u32(len(ib)) + ib + u32(len(sb)) + sb)
        parts.append(u32(len(self.pending)))
        for key in sorted(self.pending):
            parts.append(self.pending[key].fingerprint())
        return b"".join(parts)
