"""User-side sessions.

A Session fans every logical operation out to an index's 2k+1 replica
positions, collects per-replica decisions, and majority-votes get replies
(a value wins with at least k+1 matching data payloads). Data objects are
AES-encrypted under a per-index key k_d when protection is requested;
public-key users recover k_d from their wrapped ACL entry, the other
mechanisms receive it out of band (modeled as direct injection into the
grantee's session).
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass
from typing import Any, Iterable, Optional, Union

from .auth import (
    Mechanism,
    OthIdentity,
    PkCreds,
    ZkpCreds,
    ZkpIdentity,
    oth_enroll,
    oth_make_proof,
    oth_new_creds,
    pk_make_proof,
    pk_new_creds,
    zkp_commit,
    zkp_new_creds,
    zkp_respond,
)
from .core import (
    AclItem,
    DhtValue,
    Index,
    Rights,
    canonical_encode,
    derive_positions,
)
from .crypto import DATA_KEY_LEN, CryptoSuite, DecryptError, WrapError
from .peer import (
    AclDelta,
    ChallengeIssued,
    Decision,
    DeltaItem,
    Op,
    Request,
    Stored,
    ValueReply,
    get_sign_payload,
    put_sign_payload,
    set_sign_payload,
)


class NoMajorityError(Exception):
    """No data payload reached k+1 votes among the collected replies."""


class NoReadAccessError(Exception):
    """The data is protected and this session holds no key that opens it."""


class WriteQuorumError(Exception):
    """Fewer than k+1 replicas acknowledged a mutation."""


@dataclass(frozen=True)
class VoteResult:
    data: Optional[bytes]            # winning payload, None when absent
    replicas: tuple[DhtValue, ...]   # the replies that voted for the winner
    votes: int
    responders: int


def majority_vote(replies: Iterable[Optional[Decision]], k: int) -> VoteResult:
    """Resolve get replies: a payload needs k+1 votes to win.

    Dropped requests (None) and denials carry no vote. Absent is only
    reported when every value reply was absent; replies that disagree on the
    ACL but agree on the data still vote for the same payload, so a tampered
    ACL cannot split an honest majority.
    """
    received = [r for r in replies if r is not None]
    value_replies = [r for r in received if isinstance(r, ValueReply)]
    present = [r.value for r in value_replies if r.value is not None]
    if not present:
        if value_replies:
            return VoteResult(None, (), len(value_replies), len(received))
        raise NoMajorityError("no usable replies")
    tally = Counter(v.data for v in present)
    data, votes = tally.most_common(1)[0]
    if votes < k + 1:
        raise NoMajorityError(f"best payload got {votes} of {k + 1} needed votes")
    matching = tuple(v for v in present if v.data == data)
    return VoteResult(data, matching, votes, len(received))


@dataclass
class GrantRecord:
    rights: Rights
    # replica_no -> identity; PK/ZKP use one identity under key 0
    identities: dict[int, Any]

    def label(self) -> bytes:
        first = min(self.identities)
        return canonical_encode(self.identities[first])


class Session:
    """One user's view of the network for a single mechanism."""

    def __init__(self, network: Any, mechanism: Mechanism, seed: int):
        self.network = network
        self.mechanism = mechanism
        self.rng = random.Random(seed)
        self.suite = CryptoSuite()
        self.pk_creds: dict[bytes, PkCreds] = {}
        self.zkp_creds: dict[bytes, ZkpCreds] = {}
        self.oth_creds = None
        self.known_keys: dict[bytes, bytes] = {}
        self.protected: set[bytes] = set()
        self.plaintexts: dict[bytes, bytes] = {}
        self.grants: dict[bytes, list[GrantRecord]] = {}
        self._pos_cache: dict[bytes, list] = {}
        self._api_cache: dict[bytes, list[bytes]] = {}

    # -- identity management ---------------------------------------------------

    def identity_for(self, index: Index) -> Any:
        """This session's ACL identity for an index (created on demand)."""
        ib = index.value
        if self.mechanism is Mechanism.PK:
            creds = self.pk_creds.get(ib)
            if creds is None:
                creds = self.pk_creds[ib] = pk_new_creds(self.suite, self.rng)
            return creds.identity()
        if self.mechanism is Mechanism.ZKP:
            creds = self.zkp_creds.get(ib)
            if creds is None:
                creds = self.zkp_creds[ib] = zkp_new_creds(
                    self.suite, self.rng, self.network.zk_group
                )
            return ZkpIdentity(creds.v)
        raise ValueError("one-time-hash identities are per replica; use oth_identities_for")

    def oth_identities_for(self, index: Index) -> dict[int, OthIdentity]:
        if self.oth_creds is None:
            self.oth_creds = oth_new_creds(self.suite, self.rng)
        out = {}
        for pos in self._positions(index):
            key = (index.value, pos.replica_no)
            ident = self.oth_creds.enrolled.get(key)
            if ident is None:
                ident = oth_enroll(self.suite, self.oth_creds, index, pos.replica_no, self.rng)
            out[pos.replica_no] = ident
        return out

    def _has_creds(self, ib: bytes) -> bool:
        if self.mechanism is Mechanism.PK:
            return ib in self.pk_creds
        if self.mechanism is Mechanism.ZKP:
            return ib in self.zkp_creds
        return self.oth_creds is not None and (ib, 1) in self.oth_creds.chains

    # -- plumbing ----------------------------------------------------------------

    def _positions(self, index: Index) -> list:
        ps = self._pos_cache.get(index.value)
        if ps is None:
            ps = self._pos_cache[index.value] = derive_positions(index, self.network.k)
        return ps

    def _apis(self, index: Index) -> list[bytes]:
        apis = self._api_cache.get(index.value)
        if apis is None:
            count = 2 * self.network.k + 1
            apis = self._api_cache[index.value] = self.network.sample_api_peers(
                self.rng, count
            )
        return apis

    def _quorum(self) -> int:
        return self.network.k + 1

    # -- put -------------------------------------------------------------------------

    def put(self, index: Index, data: bytes, protect: bool = True) -> int:
        """Write the data object; returns the ack count (>= k+1 or raises)."""
        ib = index.value
        if self._has_creds(ib):
            acks = self._put_subsequent(index, data)
        else:
            acks = self._put_first(index, data, protect)
        if acks < self._quorum():
            raise WriteQuorumError(f"{acks} acks")
        self.plaintexts[ib] = data
        return acks

    def _payload_for(self, ib: bytes, data: bytes) -> bytes:
        key = self.known_keys.get(ib)
        if key is not None:
            return self.suite.encrypt(key, data, self.rng)
        return data

    def _put_first(self, index: Index, data: bytes, protect: bool) -> int:
        ib = index.value
        positions, apis = self._positions(index), self._apis(index)
        if protect:
            self.known_keys[ib] = self.rng.randbytes(DATA_KEY_LEN)
            self.protected.add(ib)
        payload = self._payload_for(ib, data)
        acks = 0
        if self.mechanism is Mechanism.OTH:
            idents = self.oth_identities_for(index)
            for pos, api in zip(positions, apis):
                value = DhtValue(
                    (AclItem(idents[pos.replica_no], None, Rights.OWNER),), payload
                )
                req = Request(Op.PUT, pos, identity=idents[pos.replica_no], value=value)
                if isinstance(self.network.submit(api, req), Stored):
                    acks += 1
            return acks
        ident = self.identity_for(index)
        wrapped = None
        if protect and self.mechanism is Mechanism.PK:
            creds = self.pk_creds[ib]
            wrapped = self.suite.wrap_key(creds.bundle.wrap_pk, self.known_keys[ib], self.rng)
        value = DhtValue((AclItem(ident, wrapped, Rights.OWNER),), payload)
        for pos, api in zip(positions, apis):
            req = Request(Op.PUT, pos, identity=ident, value=value)
            if isinstance(self.network.submit(api, req), Stored):
                acks += 1
        return acks

    def _put_subsequent(self, index: Index, data: bytes) -> int:
        ib = index.value
        positions, apis = self._positions(index), self._apis(index)
        payload = self._payload_for(ib, data)
        acks = 0
        if self.mechanism is Mechanism.PK:
            creds = self.pk_creds[ib]
            ident = creds.identity()
            proof = pk_make_proof(self.suite, creds, put_sign_payload(payload))
            for pos, api in zip(positions, apis):
                req = Request(Op.PUT, pos, identity=ident, proof=proof, data=payload)
                if isinstance(self.network.submit(api, req), Stored):
                    acks += 1
        elif self.mechanism is Mechanism.OTH:
            for pos, api in zip(positions, apis):
                proof = oth_make_proof(self.suite, self.oth_creds, index, pos.replica_no, self.rng)
                ident = self.oth_creds.enrolled[(ib, pos.replica_no)]
                req = Request(Op.PUT, pos, identity=ident, proof=proof, data=payload)
                if isinstance(self.network.submit(api, req), Stored):
                    acks += 1
        else:
            for pos, api in zip(positions, apis):
                if isinstance(self._zkp_mutate(index, pos, api, Op.PUT, data=payload), Stored):
                    acks += 1
        return acks

    def _zkp_mutate(
        self,
        index: Index,
        pos: Any,
        api: bytes,
        op: Op,
        data: Optional[bytes] = None,
        delta: Optional[AclDelta] = None,
    ) -> Optional[Decision]:
        """Run one replica's commit/challenge/respond exchange."""
        creds = self.zkp_creds[index.value]
        ident = ZkpIdentity(creds.v)
        group, rounds = self.network.zk_group, self.network.zk_rounds
        rs, commit = zkp_commit(self.suite, self.rng, group, rounds)
        first = self.network.submit(api, Request(op, pos, identity=ident, proof=commit))
        if not isinstance(first, ChallengeIssued):
            return first
        response = zkp_respond(self.suite, creds, group, rs, first.challenge, first.session_id)
        return self.network.submit(
            api, Request(op, pos, identity=ident, proof=response, data=data, delta=delta)
        )

    # -- get --------------------------------------------------------------------------

    def fetch(self, index: Index) -> VoteResult:
        """Replicated read without decryption."""
        ib = index.value
        positions, apis = self._positions(index), self._apis(index)
        identity = proof = None
        if self.mechanism is Mechanism.PK and ib in self.pk_creds:
            creds = self.pk_creds[ib]
            identity = creds.identity()
            proof = pk_make_proof(self.suite, creds, get_sign_payload())
        replies = [
            self.network.submit(api, Request(Op.GET, pos, identity=identity, proof=proof))
            for pos, api in zip(positions, apis)
        ]
        try:
            return majority_vote(replies, self.network.k)
        except NoMajorityError:
            if identity is None:
                raise
            # an ACL change may have invalidated our authenticated read (our
            # item is gone, every peer denies); reads are open, so retry bare
            replies = [
                self.network.submit(api, Request(Op.GET, pos))
                for pos, api in zip(positions, apis)
            ]
            return majority_vote(replies, self.network.k)

    def get(self, index: Index) -> Optional[bytes]:
        """Replicated read; decrypts protected data when this session can."""
        ib = index.value
        vote = self.fetch(index)
        if vote.data is None:
            return None
        key = self.known_keys.get(ib)
        if key is not None:
            try:
                return self.suite.decrypt(key, vote.data)
            except DecryptError:
                if self.mechanism is not Mechanism.PK:
                    raise NoReadAccessError("data key no longer opens this index") from None
                # stale key after a revocation cycle: fall through and try to
                # unwrap a fresh one from our ACL item
        if self.mechanism is Mechanism.PK and ib in self.pk_creds:
            plain = self._pk_unwrap_and_decrypt(ib, vote)
            if plain is not None:
                return plain
        if ib in self.protected:
            raise NoReadAccessError("no usable key for protected data")
        return vote.data

    def _pk_unwrap_and_decrypt(self, ib: bytes, vote: VoteResult) -> Optional[bytes]:
        creds = self.pk_creds[ib]
        mine = canonical_encode(creds.identity())
        for replica in vote.replicas:
            item = replica.find(mine)
            if item is None or item.wrapped_key is None:
                continue
            try:
                key = self.suite.unwrap_key(creds.bundle.wrap_sk, item.wrapped_key)
                plain = self.suite.decrypt(key, vote.data)
            except (WrapError, DecryptError):
                continue  # tampered wrap or stale key in this reply; try the next
            self.known_keys[ib] = key
            return plain
        return None

    # -- set / grants -------------------------------------------------------------------

    def _auth_set(self, index: Index, deltas: Union[AclDelta, dict[int, AclDelta]]) -> int:
        ib = index.value
        positions, apis = self._positions(index), self._apis(index)
        per_pos = (
            deltas if isinstance(deltas, dict)
            else {pos.replica_no: deltas for pos in positions}
        )
        acks = 0
        if self.mechanism is Mechanism.PK:
            creds = self.pk_creds[ib]
            ident = creds.identity()
            # one signature covers all replicas (the delta is identical)
            proof = pk_make_proof(self.suite, creds, set_sign_payload(per_pos[1]))
            for pos, api in zip(positions, apis):
                req = Request(Op.SET, pos, identity=ident, proof=proof, delta=per_pos[pos.replica_no])
                if isinstance(self.network.submit(api, req), Stored):
                    acks += 1
        elif self.mechanism is Mechanism.OTH:
            for pos, api in zip(positions, apis):
                proof = oth_make_proof(self.suite, self.oth_creds, index, pos.replica_no, self.rng)
                ident = self.oth_creds.enrolled[(ib, pos.replica_no)]
                req = Request(Op.SET, pos, identity=ident, proof=proof, delta=per_pos[pos.replica_no])
                if isinstance(self.network.submit(api, req), Stored):
                    acks += 1
        else:
            for pos, api in zip(positions, apis):
                dec = self._zkp_mutate(index, pos, api, Op.SET, delta=per_pos[pos.replica_no])
                if isinstance(dec, Stored):
                    acks += 1
        return acks

    def set_acl(self, index: Index, deltas: Union[AclDelta, dict[int, AclDelta]]) -> int:
        acks = self._auth_set(index, deltas)
        if acks < self._quorum():
            raise WriteQuorumError(f"{acks} acks")
        return acks

    def grant(self, index: Index, grantee: "Session", rights: Rights) -> int:
        return self.grant_many(index, [(grantee, rights)])

    def grant_many(self, index: Index, grants: list[tuple["Session", Rights]]) -> int:
        """Add ACL items for several users with one set operation."""
        ib = index.value
        key = self.known_keys.get(ib)
        records: list[GrantRecord] = []
        if self.mechanism is Mechanism.OTH:
            per_pos: dict[int, list[DeltaItem]] = {
                pos.replica_no: [] for pos in self._positions(index)
            }
            for grantee, rights in grants:
                idents = grantee.oth_identities_for(index)
                for rno, ident in idents.items():
                    per_pos[rno].append(DeltaItem(ident, None, rights))
                records.append(GrantRecord(rights, dict(idents)))
            deltas: Union[AclDelta, dict[int, AclDelta]] = {
                rno: AclDelta(tuple(items)) for rno, items in per_pos.items()
            }
        else:
            items = []
            for grantee, rights in grants:
                ident = grantee.identity_for(index)
                wrapped = None
                if key is not None and self.mechanism is Mechanism.PK:
                    wrapped = self.suite.wrap_key(ident.wrap_pk, key, self.rng)
                items.append(DeltaItem(ident, wrapped, rights))
                records.append(GrantRecord(rights, {0: ident}))
            deltas = AclDelta(tuple(items))
        acks = self.set_acl(index, deltas)
        for (grantee, rights), record in zip(grants, records):
            if key is not None and self.mechanism is not Mechanism.PK:
                grantee.known_keys[ib] = key
            if ib in self.protected:
                grantee.protected.add(ib)
            self.grants.setdefault(ib, []).append(record)
        return acks

    def revoke_read(
        self,
        index: Index,
        revoked: "Session",
        remaining: Iterable["Session"] = (),
    ) -> tuple[int, int]:
        """Cut one grantee off: re-encrypt under a fresh key, then fix the ACL.

        Exactly one put plus one set. Remaining grantees are re-keyed in the
        same set (wrapped items for PK, out-of-band injection otherwise).
        """
        ib = index.value
        plaintext = self.plaintexts[ib]
        revoked_label = self._label_of(revoked, index)
        fresh = self.rng.randbytes(DATA_KEY_LEN)
        self.known_keys[ib] = fresh
        put_acks = self.put(index, plaintext)

        kept: list[GrantRecord] = []
        removed: Optional[GrantRecord] = None
        for record in self.grants.get(ib, []):
            if record.label() == revoked_label and removed is None:
                removed = record
            else:
                kept.append(record)
        if removed is None:
            raise KeyError("no grant on record for that session")

        if self.mechanism is Mechanism.OTH:
            deltas = {
                rno: AclDelta((DeltaItem(ident, None, None),))
                for rno, ident in removed.identities.items()
            }
        else:
            items = [DeltaItem(removed.identities[0], None, None)]
            if self.mechanism is Mechanism.PK:
                for record in kept:
                    ident = record.identities[0]
                    items.append(
                        DeltaItem(ident, self.suite.wrap_key(ident.wrap_pk, fresh, self.rng), record.rights)
                    )
                own = self.pk_creds[ib]
                items.append(
                    DeltaItem(
                        own.identity(),
                        self.suite.wrap_key(own.bundle.wrap_pk, fresh, self.rng),
                        Rights.OWNER,
                    )
                )
            deltas = AclDelta(tuple(items))
        set_acks = self.set_acl(index, deltas)
        self.grants[ib] = kept
        if self.mechanism is not Mechanism.PK:
            for session in remaining:
                if session.known_keys.get(ib) is not None:
                    session.known_keys[ib] = fresh
        return put_acks, set_acks

    def ungrant(self, index: Index, grantee: "Session") -> int:
        """Remove a grantee's ACL items without re-keying.

        Suitable for write-right revocation; read revocation should go
        through revoke_read so the data key rotates.
        """
        ib = index.value
        label = self._label_of(grantee, index)
        record = next(
            (r for r in self.grants.get(ib, []) if r.label() == label), None
        )
        if record is None:
            raise KeyError("no grant on record for that session")
        if self.mechanism is Mechanism.OTH:
            deltas: Union[AclDelta, dict[int, AclDelta]] = {
                rno: AclDelta((DeltaItem(ident, None, None),))
                for rno, ident in record.identities.items()
            }
        else:
            deltas = AclDelta((DeltaItem(record.identities[0], None, None),))
        acks = self.set_acl(index, deltas)
        self.grants[ib].remove(record)
        return acks

    def _label_of(self, session: "Session", index: Index) -> bytes:
        if self.mechanism is Mechanism.OTH:
            idents = session.oth_identities_for(index)
            return canonical_encode(idents[min(idents)])
        return canonical_encode(session.identity_for(index))

    # -- storage accounting ------------------------------------------------------------

    def user_storage_bytes(self, index: Index) -> int:
        """Bytes this session must retain for one index (caches that can be
        recomputed from retained material are excluded)."""
        ib = index.value
        replicas = 2 * self.network.k + 1
        digests = 32 * replicas  # cached replica positions
        if self.mechanism is Mechanism.PK:
            # full keypair bundle + outgoing counter; k_d is recoverable from
            # our own wrapped ACL item, so it is not charged here
            return 128 + 4 + digests
        if self.mechanism is Mechanism.ZKP:
            # the secret s (v = s^2 is recomputable) + the injected data key
            return 84 + (DATA_KEY_LEN if ib in self.known_keys else 0) + digests
        # one live chain element per replica + the injected data key; the
        # 32-byte master secret is charged once per session, not per index
        return 32 * replicas + (DATA_KEY_LEN if ib in self.known_keys else 0) + digests

    def master_storage_bytes(self) -> int:
        return 32 if self.oth_creds is not None else 0
