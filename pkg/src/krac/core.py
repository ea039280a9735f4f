"""Domain types for the access-controlled DHT.

Indexes and their replica positions, the rights lattice, ACL-bearing DHT
values, and the canonical byte encoding that hashing, signing, majority
voting and the traffic ledger all operate on.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, fields as dataclass_fields
from enum import Enum
from typing import Any, Optional

DIGEST_LEN = 32      # 256-bit hash space throughout
RESIDUE_LEN = 84     # fixed width for modular residues (672 bits >= 665-bit moduli)
INDEX_MAX_LEN = 1024


def hash_bytes(data: bytes) -> bytes:
    """The system hash function h(x): SHA-256."""
    return hashlib.sha256(data).digest()


def u32(n: int) -> bytes:
    return struct.pack(">I", n)


class Rights(Enum):
    """Access rights of one ACL item, ordered o > a > (r|w)."""

    OWNER = 1
    ADMIN = 2
    WRITE = 3
    READ = 4


class Action(Enum):
    """Actions a peer checks rights against."""

    READ_DATA = 1
    WRITE_DATA = 2
    CHANGE_RW = 3
    CHANGE_ADMIN = 4


# Owner implies everything including handing out the admin right; admin may
# manage r/w rights and transitively holds them; write and read are
# incomparable leaves.
_ALLOWED: dict[Rights, frozenset[Action]] = {
    Rights.OWNER: frozenset(Action),
    Rights.ADMIN: frozenset({Action.READ_DATA, Action.WRITE_DATA, Action.CHANGE_RW}),
    Rights.WRITE: frozenset({Action.WRITE_DATA}),
    Rights.READ: frozenset({Action.READ_DATA}),
}


def rights_allows(held: Rights, action: Action) -> bool:
    return action in _ALLOWED[held]


def rights_dominates(a: Rights, b: Rights) -> bool:
    """True when a >= b in the partial order (write and read incomparable)."""
    if a is b or a is Rights.OWNER:
        return True
    if a is Rights.ADMIN:
        return b in (Rights.WRITE, Rights.READ)
    return False


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class Index:
    """Application-level key; hashed into 2k+1 storage positions."""

    value: bytes

    def __post_init__(self) -> None:
        if not isinstance(self.value, bytes) or not 1 <= len(self.value) <= INDEX_MAX_LEN:
            raise ValueError("index must be 1..1024 bytes")


@dataclass(frozen=True)
class Position:
    """One of an index's 2k+1 derived storage locations."""

    digest: bytes
    replica_no: int

    def __post_init__(self) -> None:
        if len(self.digest) != DIGEST_LEN:
            raise ValueError("position digest must be 32 bytes")
        if self.replica_no < 1:
            raise ValueError("replica_no starts at 1")


def derive_positions(index: Index, k: int) -> list[Position]:
    """Map an index to its 2k+1 replica positions.

    pos_i = h(index || 0x00 || u32_be(i)); the separator byte plus the
    fixed-width counter keep distinct (index, i) pairs from colliding on
    their concatenation.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    return [
        Position(hash_bytes(index.value + b"\x00" + u32(i)), i)
        for i in range(1, 2 * k + 2)
    ]


@dataclass(frozen=True)
class AclItem:
    """One user's entry in a value's ACL.

    `auth` is the mechanism-specific identity (see krac.auth); `wrapped_key`
    carries the data-encryption key encrypted for this user and is only
    meaningful for identities that expose a key-wrap public key.
    """

    auth: Any
    wrapped_key: Optional[bytes]
    rights: Rights

    def __post_init__(self) -> None:
        if self.wrapped_key is not None and getattr(self.auth, "wrap_pk", None) is None:
            raise ValueError("wrapped_key requires a key-wrap capable identity")

    def identity_bytes(self) -> bytes:
        return canonical_encode(self.auth)


@dataclass(frozen=True)
class DhtValue:
    """Stored record: ACL plus the opaque data object.

    The ACL is kept sorted by the canonical bytes of each item's identity so
    that equal value contents always encode to equal bytes.
    """

    acl: tuple[AclItem, ...]
    data: bytes

    def __post_init__(self) -> None:
        items = tuple(sorted(self.acl, key=lambda it: it.identity_bytes()))
        object.__setattr__(self, "acl", items)
        idents = [it.identity_bytes() for it in items]
        if len(set(idents)) != len(idents):
            raise ValueError("duplicate identities in ACL")
        owners = [it for it in items if it.rights is Rights.OWNER]
        if len(owners) != 1:
            raise ValueError("ACL must contain exactly one owner")

    def owner(self) -> AclItem:
        return next(it for it in self.acl if it.rights is Rights.OWNER)

    def find(self, identity_bytes: bytes) -> Optional[AclItem]:
        for it in self.acl:
            if it.identity_bytes() == identity_bytes:
                return it
        return None


# ---------------------------------------------------------------------------
# Canonical encoding
#
# Wire/persistence layout, bit exact:
#   value   := tag(1 byte) || field_count(u32_be) || field*
#   field   := length(u32_be) || payload
#   payload := raw bytes | u8 | u32_be | residue(84 bytes BE) | rights(u8 code)
#            | option (0x00, or 0x01 || inner payload)
#            | list (count u32_be, then per element: length u32_be || payload)
#            | nested value (full canonical encoding)
# Field order is fixed per type; ACLs are sorted by identity bytes before
# encoding, so encoding is injective on valid values and decode(encode(v))
# reconstructs an equal value.


_TAG_RIGHTS = 0x03

_BY_TYPE: dict[type, tuple[int, tuple[tuple[str, Any], ...]]] = {}
_BY_TAG: dict[int, tuple[type, tuple[tuple[str, Any], ...]]] = {}


def register_codec(cls: type, tag: int, field_kinds: tuple[tuple[str, Any], ...]) -> None:
    """Register a dataclass for canonical encoding under a one-byte tag."""
    if tag in _BY_TAG:
        raise EncodingError(f"tag {tag:#x} already registered")
    names = {f.name for f in dataclass_fields(cls)}
    for name, _ in field_kinds:
        if name not in names:
            raise EncodingError(f"{cls.__name__} has no field {name}")
    _BY_TYPE[cls] = (tag, field_kinds)
    _BY_TAG[tag] = (cls, field_kinds)


def _encode_payload(kind: Any, value: Any) -> bytes:
    if kind == "raw":
        if not isinstance(value, bytes):
            raise EncodingError("raw field must be bytes")
        return value
    if kind == "u8":
        if not 0 <= value <= 0xFF:
            raise EncodingError("u8 out of range")
        return bytes([value])
    if kind == "u32":
        if not 0 <= value <= 0xFFFFFFFF:
            raise EncodingError("u32 out of range")
        return u32(value)
    if kind == "residue":
        if not 0 <= value < 1 << (8 * RESIDUE_LEN):
            raise EncodingError("residue out of range")
        return value.to_bytes(RESIDUE_LEN, "big")
    if kind == "rights":
        return bytes([value.value])
    if kind == "node":
        return canonical_encode(value)
    if isinstance(kind, tuple) and kind[0] == "opt":
        if value is None:
            return b"\x00"
        return b"\x01" + _encode_payload(kind[1], value)
    if isinstance(kind, tuple) and kind[0] == "list":
        parts = [u32(len(value))]
        for item in value:
            payload = _encode_payload(kind[1], item)
            parts.append(u32(len(payload)) + payload)
        return b"".join(parts)
    raise EncodingError(f"unknown field kind {kind!r}")


def _decode_payload(kind: Any, payload: bytes) -> Any:
    if kind == "raw":
        return payload
    if kind == "u8":
        if len(payload) != 1:
            raise EncodingError("bad u8 payload")
        return payload[0]
    if kind == "u32":
        if len(payload) != 4:
            raise EncodingError("bad u32 payload")
        return struct.unpack(">I", payload)[0]
    if kind == "residue":
        if len(payload) != RESIDUE_LEN:
            raise EncodingError("bad residue payload")
        return int.from_bytes(payload, "big")
    if kind == "rights":
        if len(payload) != 1:
            raise EncodingError("bad rights payload")
        return Rights(payload[0])
    if kind == "node":
        return canonical_decode(payload)
    if isinstance(kind, tuple) and kind[0] == "opt":
        if payload[:1] == b"\x00" and len(payload) == 1:
            return None
        if payload[:1] == b"\x01":
            return _decode_payload(kind[1], payload[1:])
        raise EncodingError("bad option marker")
    if isinstance(kind, tuple) and kind[0] == "list":
        if len(payload) < 4:
            raise EncodingError("bad list payload")
        count = struct.unpack(">I", payload[:4])[0]
        items = []
        off = 4
        for _ in range(count):
            if off + 4 > len(payload):
                raise EncodingError("truncated list")
            n = struct.unpack(">I", payload[off:off + 4])[0]
            off += 4
            if off + n > len(payload):
                raise EncodingError("truncated list element")
            items.append(_decode_payload(kind[1], payload[off:off + n]))
            off += n
        if off != len(payload):
            raise EncodingError("trailing bytes in list")
        return tuple(items)
    raise EncodingError(f"unknown field kind {kind!r}")


def canonical_encode(value: Any) -> bytes:
    """Deterministic, injective serialization of any registered domain type."""
    if isinstance(value, Rights):
        return bytes([_TAG_RIGHTS]) + u32(1) + u32(1) + bytes([value.value])
    entry = _BY_TYPE.get(type(value))
    if entry is None:
        raise EncodingError(f"no codec for {type(value).__name__}")
    tag, field_kinds = entry
    parts = [bytes([tag]), u32(len(field_kinds))]
    for name, kind in field_kinds:
        payload = _encode_payload(kind, getattr(value, name))
        parts.append(u32(len(payload)) + payload)
    return b"".join(parts)


def canonical_decode(data: bytes) -> Any:
    value, consumed = _decode_prefix(data)
    if consumed != len(data):
        raise EncodingError("trailing bytes after value")
    return value


def _decode_prefix(data: bytes) -> tuple[Any, int]:
    if len(data) < 5:
        raise EncodingError("truncated value")
    tag = data[0]
    count = struct.unpack(">I", data[1:5])[0]
    off = 5
    payloads = []
    for _ in range(count):
        if off + 4 > len(data):
            raise EncodingError("truncated field header")
        n = struct.unpack(">I", data[off:off + 4])[0]
        off += 4
        if off + n > len(data):
            raise EncodingError("truncated field payload")
        payloads.append(data[off:off + n])
        off += n
    if tag == _TAG_RIGHTS:
        if count != 1:
            raise EncodingError("bad rights value")
        return Rights(payloads[0][0]), off
    entry = _BY_TAG.get(tag)
    if entry is None:
        raise EncodingError(f"unknown tag {tag:#x}")
    cls, field_kinds = entry
    if count != len(field_kinds):
        raise EncodingError(f"field count mismatch for {cls.__name__}")
    kwargs = {
        name: _decode_payload(kind, payload)
        for (name, kind), payload in zip(field_kinds, payloads)
    }
    return cls(**kwargs), off


register_codec(Index, 0x01, (("value", "raw"),))
register_codec(Position, 0x02, (("digest", "raw"), ("replica_no", "u32")))
register_codec(AclItem, 0x04, (
    ("auth", "node"),
    ("wrapped_key", ("opt", "raw")),
    ("rights", "rights"),
))
register_codec(DhtValue, 0x05, (
    ("acl", ("list", "node")),
    ("data", "raw"),
))
