"""Line-oriented scenario scripts.

Grammar (one statement per line, `#` starts a comment):

    CONFIG [mechanism=pk|zkp|oth] [k=INT] [y=INT] [rounds=INT] [protect=0|1]
    SPAWN <peers> <seed>
    SUBVERT <peer-no | resp:<index>:<replica>> <behavior>
    PUT <user> <index> <hex-data>
    GET <user> <index>
    SET <user> <index> <delta-spec>
    ASSERT GET <user> <index> == <hex> | ABSENT | DENIED
    ASSERT PUT <user> <index> <hex> DENIED
    ASSERT SET <user> <index> <delta-spec> DENIED
    ASSERT OWNER <user> <index>

delta-spec is comma-joined atoms: either all `grant:<user>:<r|w|a>` (applied
as one set operation) or a single `revoke:<user>` / `revokeread:<user>`.
Users spring into existence on first mention, with seeds derived from the
network seed and their name, so a script's outcome depends only on its text.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

from .auth import Mechanism
from .client import (
    NoMajorityError,
    NoReadAccessError,
    Session,
    WriteQuorumError,
)
from .core import Index, Rights, canonical_encode, hash_bytes
from .simnet import Network, parse_behavior

_RIGHTS = {"r": Rights.READ, "w": Rights.WRITE, "a": Rights.ADMIN}


class ScriptError(Exception):
    """Malformed script or statement that cannot be executed."""


@dataclass
class OpRecord:
    line_no: int
    text: str
    ok: bool
    detail: str = ""


@dataclass
class RunResult:
    ops: list[OpRecord] = field(default_factory=list)
    assertions: int = 0
    failures: int = 0
    messages: int = 0

    @property
    def passed(self) -> bool:
        return self.failures == 0 and all(op.ok for op in self.ops)

    def render(self) -> str:
        lines = [
            f"{'ok' if op.ok else 'FAIL':4} line {op.line_no}: {op.text}"
            + (f"  [{op.detail}]" if op.detail else "")
            for op in self.ops
        ]
        lines.append(
            f"assertions: {self.assertions - self.failures}/{self.assertions} passed; "
            f"messages: {self.messages}"
        )
        return "\n".join(lines)


class Runner:
    def __init__(self) -> None:
        self.network: Optional[Network] = None
        self.mechanism = Mechanism.PK
        self.k = 1
        self.y = 2
        self.rounds = 20
        self.protect = True
        self.users: dict[str, Session] = {}

    # -- helpers -----------------------------------------------------------------

    def _net(self) -> Network:
        if self.network is None:
            raise ScriptError("SPAWN must precede operations")
        return self.network

    def _user(self, name: str) -> Session:
        session = self.users.get(name)
        if session is None:
            seed = int.from_bytes(
                hash_bytes(struct.pack(">q", self._net().seed) + b"user:" + name.encode()),
                "big",
            )
            session = self.users[name] = Session(self._net(), self.mechanism, seed)
        return session

    @staticmethod
    def _index(token: str) -> Index:
        return Index(token.encode())

    def _resolve_peer(self, token: str) -> bytes:
        net = self._net()
        if token.startswith("resp:"):
            _, index_token, replica = token.split(":")
            from .core import derive_positions

            positions = derive_positions(self._index(index_token), net.k)
            return net.responsible_for(positions[int(replica) - 1])
        ids = sorted(net.peers)
        no = int(token)
        if not 0 <= no < len(ids):
            raise ScriptError(f"peer number {no} out of range")
        from .simnet import peer_id

        return peer_id(net.seed, no)

    # -- statement execution ------------------------------------------------------

    def run(self, text: str) -> RunResult:
        result = RunResult()
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                self._statement(line, line_no, result)
            except ScriptError:
                raise
            except Exception as exc:  # surface with the offending line
                raise ScriptError(f"line {line_no}: {line!r}: {exc}") from exc
        if self.network is not None:
            result.messages = self.network.ledger.messages
        return result

    def _statement(self, line: str, line_no: int, result: RunResult) -> None:
        parts = line.split()
        verb = parts[0].upper()
        if verb == "CONFIG":
            self._config(parts[1:])
        elif verb == "SPAWN":
            if self.network is not None:
                raise ScriptError("SPAWN given twice")
            peers, seed = int(parts[1]), int(parts[2])
            self.network = Network(peers, seed, k=self.k, y=self.y, zk_rounds=self.rounds)
        elif verb == "SUBVERT":
            pid = self._resolve_peer(parts[1])
            self._net().subvert(pid, parse_behavior(parts[2]))
        elif verb == "PUT":
            ok, detail = self._put(parts[1], parts[2], parts[3])
            result.ops.append(OpRecord(line_no, line, ok, detail))
        elif verb == "GET":
            ok, detail = self._get_outcome(parts[1], parts[2])
            result.ops.append(OpRecord(line_no, line, ok, detail))
        elif verb == "SET":
            ok, detail = self._set(parts[1], parts[2], parts[3])
            result.ops.append(OpRecord(line_no, line, ok, detail))
        elif verb == "ASSERT":
            ok, detail = self._assertion(parts[1:])
            result.assertions += 1
            if not ok:
                result.failures += 1
            result.ops.append(OpRecord(line_no, line, ok, detail))
        else:
            raise ScriptError(f"unknown statement {verb}")

    def _config(self, tokens: list[str]) -> None:
        if self.network is not None:
            raise ScriptError("CONFIG must precede SPAWN")
        for token in tokens:
            key, _, val = token.partition("=")
            if key == "mechanism":
                self.mechanism = Mechanism(val)
            elif key == "k":
                self.k = int(val)
            elif key == "y":
                self.y = int(val)
            elif key == "rounds":
                self.rounds = int(val)
            elif key == "protect":
                self.protect = bool(int(val))
            else:
                raise ScriptError(f"unknown CONFIG key {key}")

    def _put(self, user: str, index: str, hex_data: str) -> tuple[bool, str]:
        try:
            acks = self._user(user).put(self._index(index), bytes.fromhex(hex_data), protect=self.protect)
            return True, f"{acks} acks"
        except WriteQuorumError as exc:
            return False, f"quorum failed: {exc}"

    def _get_outcome(self, user: str, index: str) -> tuple[bool, str]:
        kind, payload = self._get(user, index)
        if kind == "value":
            return True, payload.hex()
        return kind == "absent", kind

    def _get(self, user: str, index: str):
        try:
            data = self._user(user).get(self._index(index))
        except (NoReadAccessError, NoMajorityError):
            return "denied", None
        if data is None:
            return "absent", None
        return "value", data

    def _set(self, user: str, index: str, spec: str) -> tuple[bool, str]:
        try:
            acks = self._apply_delta_spec(user, index, spec)
            return True, f"{acks} acks"
        except WriteQuorumError as exc:
            return False, f"quorum failed: {exc}"

    def _apply_delta_spec(self, user: str, index: str, spec: str) -> int:
        session = self._user(user)
        idx = self._index(index)
        atoms = [a for a in spec.split(",") if a]
        kinds = {a.split(":", 1)[0] for a in atoms}
        if kinds == {"grant"}:
            grants = []
            for atom in atoms:
                _, name, letter = atom.split(":")
                grants.append((self._user(name), _RIGHTS[letter]))
            return session.grant_many(idx, grants)
        if len(atoms) != 1:
            raise ScriptError("revocations must be the only atom of a SET")
        kind, name = atoms[0].split(":", 1)
        if kind == "revoke":
            return session.ungrant(idx, self._user(name))
        if kind == "revokeread":
            remaining = [s for n, s in self.users.items() if n not in (user, name)]
            put_acks, set_acks = session.revoke_read(idx, self._user(name), remaining)
            return set_acks
        raise ScriptError(f"unknown delta atom {atoms[0]!r}")

    def _assertion(self, parts: list[str]) -> tuple[bool, str]:
        kind = parts[0].upper()
        if kind == "GET":
            user, index = parts[1], parts[2]
            expect = parts[3].upper() if parts[3] in ("ABSENT", "DENIED") else parts[3]
            outcome, data = self._get(user, index)
            if expect == "ABSENT" or expect == "DENIED":
                return outcome == expect.lower(), f"got {outcome}"
            if expect != "==":
                raise ScriptError("expected ==, ABSENT or DENIED")
            want = bytes.fromhex(parts[4])
            if outcome != "value":
                return False, f"got {outcome}"
            return data == want, f"got {data.hex()}"
        if kind == "PUT":
            if parts[4].upper() != "DENIED":
                raise ScriptError("ASSERT PUT only supports DENIED")
            ok, detail = self._put(parts[1], parts[2], parts[3])
            return not ok, detail
        if kind == "SET":
            if parts[4].upper() != "DENIED":
                raise ScriptError("ASSERT SET only supports DENIED")
            try:
                ok, detail = self._set(parts[1], parts[2], parts[3])
            except KeyError as exc:
                return True, f"rejected: {exc}"
            return not ok, detail
        if kind == "OWNER":
            return self._assert_owner(parts[1], parts[2])
        raise ScriptError(f"unknown assertion {kind}")

    def _assert_owner(self, user: str, index: str) -> tuple[bool, str]:
        session = self._user(user)
        idx = self._index(index)
        try:
            vote = session.fetch(idx)
        except NoMajorityError:
            return False, "no majority"
        if vote.data is None:
            return False, "absent"
        if self.mechanism is Mechanism.OTH:
            mine = {
                canonical_encode(i) for i in session.oth_identities_for(idx).values()
            }
        else:
            mine = {canonical_encode(session.identity_for(idx))}
        owners = {replica.owner().identity_bytes() for replica in vote.replicas}
        return bool(owners & mine), f"{len(owners & mine)} replicas match"


def run_script(text: str) -> RunResult:
    return Runner().run(text)
