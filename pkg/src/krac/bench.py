"""Overhead model and benchmark harness.

Two size profiles back the `predict` command:

  paper     analytical constants for a classical instantiation (RSA-2048 /
            ECC-224 keys in DER form, 160-bit positions, 665-bit residues).
            Reprinted as reference values; nothing here is measured.
  artifact  what this implementation actually produces (Ed25519/X25519 keys,
            AES-128-GCM, 256-bit positions, 84-byte residues), cross-checked
            against measurements in the test suite.

`run_experiment` executes seeded trials on the simulated network and emits
deterministic CSV/JSON reports: same seed, same bytes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

from .auth import Mechanism
from .client import NoMajorityError, NoReadAccessError, Session, WriteQuorumError
from .core import Index, Rights, hash_bytes
from .crypto import OpCounter
from .simnet import Network, parse_behavior

# -- reference profile (analytical constants, never measured) -------------------

PAPER_MESSAGE_SIZE_OVERHEAD = {
    "pk_rsa": 554,   # ctr 4 + DER public key 294 + signature 256
    "pk_ecc": 147,   # ctr 4 + DER public key 80 + signature 63
    "zkp_per_round": 83,   # one 665-bit response per challenge round
    "oth": 64,       # revealed element 32 + replacement hash 32
}

PAPER_PEER_ITEM_BYTES = {"pk_rsa": 679, "pk_ecc": 273, "zkp": 84, "oth": 49}

# per-index user storage overhead as (base, slope) in k; the OTH master
# secret is 32 bytes once per user on top
PAPER_USER_DELTA = {
    "pk_rsa": (1196, 40),
    "pk_ecc": (117, 40),
    "zkp": (25, 40),
    "oth": (48, 104),
}
PAPER_OTH_MASTER_BYTES = 32

PAPER_REFERENCE_TIMINGS_US = {
    "kg_rsa": 317092,
    "kg_ecc": 685,
    "ao_sk_rsa": 5135,
    "ao_sk_ecc": 170,
    "ao_pk_rsa": 148,
    "ao_pk_ecc": 380,
    "ho": 176,   # SHA-256 over 32 kB
    "so": 33,    # AES-128 over 32 kB
    "mo": 4,     # 665-bit modular operation
}

PAPER_DEFAULTS = {"k": 20, "rounds": 20, "acl_size": 10}


# -- artifact profile (must match what the implementation does) -------------------

ARTIFACT_PEER_ITEM_BYTES = {
    "pk": 149,   # identity 64 + wrapped key 76 + rights 1 + replay window 8
    "zkp": 85,   # residue v 84 + rights 1
    "oth": 49,   # current hash 32 + salt 16 + rights 1
}


def artifact_message_size_overhead(mechanism: str, rounds: int) -> int:
    if mechanism == "pk":
        return 4 + 64 + 64     # ctr + both public keys + signature
    if mechanism == "zkp":
        return rounds * 84     # responses in the closing message
    return 32 + 32 + 16        # element + replacement hash + replacement salt


def artifact_user_storage(mechanism: str, k: int) -> int:
    """Per-index bytes a session retains (see Session.user_storage_bytes)."""
    replicas = 2 * k + 1
    if mechanism == "pk":
        return 128 + 4 + 32 * replicas
    if mechanism == "zkp":
        return 84 + 16 + 32 * replicas
    return 16 + 64 * replicas


ARTIFACT_OTH_MASTER_BYTES = 32


def message_totals(mechanism: str, k: int, y: int) -> dict[str, int]:
    """Messages per logical replicated operation (the overhead versus one
    unreplicated exchange is total - y)."""
    base = (2 * k + 1) * y
    two_stage = 2 * base if mechanism == "zkp" else base
    return {"get": base, "put": two_stage, "set": two_stage}


def _counts(**kw: float) -> dict[str, float]:
    out = {f: 0.0 for f in OpCounter.FIELDS}
    out.update(kw)
    return out


def paper_op_counts(mechanism: str, k: int, rounds: int, acl_size: int) -> dict:
    r, n, a = 2 * k + 1, rounds, acl_size
    if mechanism == "pk":
        return {
            "user_initial_put": _counts(kg=1, so=1, ao_pk=a),
            "user_initial_set": _counts(kg=1, ao_pk=a),
            "user_get": _counts(ao_sk=1, so=1),
            "user_put": _counts(so=1, ao_pk=a, ho=1, ao_sk=1),
            "user_set": _counts(ao_pk=a, ho=1, ao_sk=1),
            "peer_get": _counts(),
            "peer_put": _counts(ao_pk=1, ho=1),
            "peer_set": _counts(ao_pk=1, ho=1),
        }
    if mechanism == "zkp":
        return {
            "user_initial_put": _counts(mo=1, so=1),
            "user_initial_set": _counts(mo=1),
            "user_get": _counts(so=1),
            "user_put": _counts(so=1, mo=1.5 * n * r),
            "user_set": _counts(mo=1.5 * n * r),
            "peer_get": _counts(),
            "peer_put": _counts(mo=1.5 * n),
            "peer_set": _counts(mo=1.5 * n),
        }
    return {
        "user_initial_put": _counts(ho=r, so=1),
        "user_initial_set": _counts(ho=r),
        "user_get": _counts(so=1),
        "user_put": _counts(so=1, ho=r),
        "user_set": _counts(ho=r),
        "peer_get": _counts(),
        "peer_put": _counts(ho=1),
        "peer_set": _counts(ho=1),
    }


def artifact_op_counts(mechanism: str, k: int, rounds: int, acl_size: int) -> dict:
    """Expected per-operation counter deltas for this implementation.

    Differences from the reference model: key wraps are charged to the set
    that carries them (a subsequent put re-wraps nothing), reads are
    signature-authenticated under PK, and each OTH proof costs two hashes on
    the user side (chain advance + replacement hash).
    """
    r, n, a = 2 * k + 1, rounds, acl_size
    if mechanism == "pk":
        return {
            "user_initial_put": _counts(kg=1, so=1, ao_pk=1),
            "user_get_first": _counts(ho=1, ao_sk=2, so=1),
            "user_get": _counts(ho=1, ao_sk=1, so=1),
            "user_put": _counts(so=1, ho=1, ao_sk=1),
            "user_set": _counts(ho=1, ao_sk=1, ao_pk=a),
            "peer_get": _counts(ho=1, ao_pk=1),
            "peer_put": _counts(ho=1, ao_pk=1),
            "peer_set": _counts(ho=1, ao_pk=1),
        }
    if mechanism == "zkp":
        return {
            "user_initial_put": _counts(kg=1, mo=1, so=1),
            "user_get_first": _counts(so=1),
            "user_get": _counts(so=1),
            "user_put": _counts(so=1, mo=1.5 * n * r),
            "user_set": _counts(mo=1.5 * n * r),
            "peer_get": _counts(),
            "peer_put": _counts(mo=1.5 * n),
            "peer_set": _counts(mo=1.5 * n),
        }
    return {
        "user_initial_put": _counts(kg=1, ho=2 * r, so=1),
        "user_get_first": _counts(so=1),
        "user_get": _counts(so=1),
        "user_put": _counts(so=1, ho=2 * r),
        "user_set": _counts(ho=2 * r),
        "peer_get": _counts(),
        "peer_put": _counts(ho=1),
        "peer_set": _counts(ho=1),
    }


def predict(
    profile: str,
    mechanism: str,
    k: int,
    rounds: int = 20,
    acl_size: int = 10,
    y: int = 2,
) -> dict:
    if mechanism not in ("pk", "zkp", "oth"):
        raise ValueError(f"unknown mechanism {mechanism!r}")
    totals = message_totals(mechanism, k, y)
    out = {
        "profile": profile,
        "mechanism": mechanism,
        "k": k,
        "rounds": rounds,
        "acl_size": acl_size,
        "y": y,
        "messages": totals,
        "message_delta": {op: m - y for op, m in totals.items()},
    }
    if profile == "paper":
        if mechanism == "pk":
            out["message_size_overhead_bytes"] = {
                "rsa": PAPER_MESSAGE_SIZE_OVERHEAD["pk_rsa"],
                "ecc": PAPER_MESSAGE_SIZE_OVERHEAD["pk_ecc"],
            }
            out["peer_item_bytes"] = {
                "rsa": PAPER_PEER_ITEM_BYTES["pk_rsa"],
                "ecc": PAPER_PEER_ITEM_BYTES["pk_ecc"],
            }
            out["user_storage_delta_bytes"] = {
                "rsa": PAPER_USER_DELTA["pk_rsa"][0] + PAPER_USER_DELTA["pk_rsa"][1] * k,
                "ecc": PAPER_USER_DELTA["pk_ecc"][0] + PAPER_USER_DELTA["pk_ecc"][1] * k,
            }
        else:
            key = mechanism
            out["message_size_overhead_bytes"] = (
                PAPER_MESSAGE_SIZE_OVERHEAD["zkp_per_round"] * rounds
                if mechanism == "zkp"
                else PAPER_MESSAGE_SIZE_OVERHEAD["oth"]
            )
            out["peer_item_bytes"] = PAPER_PEER_ITEM_BYTES[key]
            base, slope = PAPER_USER_DELTA[key]
            out["user_storage_delta_bytes"] = base + slope * k
            if mechanism == "oth":
                out["user_master_bytes"] = PAPER_OTH_MASTER_BYTES
        out["op_counts"] = paper_op_counts(mechanism, k, rounds, acl_size)
        out["reference_timings_us"] = dict(PAPER_REFERENCE_TIMINGS_US)
        return out
    if profile != "artifact":
        raise ValueError(f"unknown profile {profile!r}")
    out["message_size_overhead_bytes"] = artifact_message_size_overhead(mechanism, rounds)
    out["peer_item_bytes"] = ARTIFACT_PEER_ITEM_BYTES[mechanism]
    out["user_storage_delta_bytes"] = artifact_user_storage(mechanism, k)
    if mechanism == "oth":
        out["user_master_bytes"] = ARTIFACT_OTH_MASTER_BYTES
    out["op_counts"] = artifact_op_counts(mechanism, k, rounds, acl_size)
    return out


# -- experiment runner ---------------------------------------------------------------


@dataclass
class BenchConfig:
    mechanism: str = "pk"
    k: int = 3
    rounds: int = 20
    acl_size: int = 2
    peers: int = 64
    adversary: int = 0
    behaviors: tuple[str, ...] = ("deny",)
    seed: int = 0
    trials: int = 3
    y: int = 2


@dataclass
class OverheadReport:
    config: dict
    predicted: dict
    rows: list[dict]
    aggregates: dict

    def to_json(self) -> str:
        payload = {
            "config": self.config,
            "predicted": self.predicted,
            "rows": self.rows,
            "aggregates": self.aggregates,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        lines = []
        for key in sorted(self.config):
            lines.append(f"# config {key}={self.config[key]}")
        for key in sorted(self.aggregates):
            lines.append(f"# aggregate {key}={self.aggregates[key]}")
        cols = sorted(self.rows[0]) if self.rows else []
        lines.append(",".join(cols))
        for row in self.rows:
            lines.append(",".join(str(row[c]) for c in cols))
        return "\n".join(lines) + "\n"


def _flatten(prefix: str, counts: dict[str, int]) -> dict[str, int]:
    return {f"{prefix}_{name}": value for name, value in counts.items()}


def run_experiment(cfg: BenchConfig) -> OverheadReport:
    mech = Mechanism(cfg.mechanism)
    predicted = predict("artifact", cfg.mechanism, cfg.k, cfg.rounds, cfg.acl_size, cfg.y)
    rows = []
    for t in range(cfg.trials):
        rows.append(_trial(cfg, mech, t))
    aggregates = _aggregate(rows)
    return OverheadReport(
        config=asdict(cfg) | {"behaviors": list(cfg.behaviors)},
        predicted=predicted,
        rows=rows,
        aggregates=aggregates,
    )


def _trial(cfg: BenchConfig, mech: Mechanism, t: int) -> dict:
    tseed = cfg.seed * 1_000_003 + t
    net = Network(cfg.peers, tseed, k=cfg.k, y=cfg.y, zk_rounds=cfg.rounds)
    owner = Session(net, mech, seed=tseed ^ 0xA5A5A5)
    grantees = [
        Session(net, mech, seed=(tseed << 8) | (g + 1)) for g in range(cfg.acl_size)
    ]
    index = Index(b"bench/" + str(t).encode())
    data_one = hash_bytes(b"payload-one" + str(t).encode())
    data_two = hash_bytes(b"payload-two" + str(t).encode())
    data_three = hash_bytes(b"payload-three" + str(t).encode())
    row: dict = {"trial": t}

    snap_u, snap_m = owner.suite.counter.snapshot(), net.ledger.messages
    owner.put(index, data_one)
    row["first_put_messages"] = net.ledger.messages - snap_m
    row.update(_flatten("first_put_user", owner.suite.counter.diff(snap_u)))

    snap_u, snap_m = owner.suite.counter.snapshot(), net.ledger.messages
    owner.grant_many(index, [(g, Rights.READ) for g in grantees])
    row["set_messages"] = net.ledger.messages - snap_m
    row.update(_flatten("set_user", owner.suite.counter.diff(snap_u)))

    snap_u, snap_m = owner.suite.counter.snapshot(), net.ledger.messages
    snap_p = net.peer_suite.counter.snapshot()
    owner.put(index, data_two)
    row["put_messages"] = net.ledger.messages - snap_m
    row.update(_flatten("put_user", owner.suite.counter.diff(snap_u)))
    row.update(_flatten("put_peer", net.peer_suite.counter.diff(snap_p)))
    row["put_messages_predicted"] = predict_messages = (
        message_totals(cfg.mechanism, cfg.k, cfg.y)["put"]
    )
    row["put_messages_match"] = int(row["put_messages"] == predict_messages)

    reader = grantees[0] if grantees else owner
    snap_m = net.ledger.messages
    try:
        row["get_ok"] = int(reader.get(index) == data_two)
    except (NoMajorityError, NoReadAccessError):
        row["get_ok"] = 0
    row["get_messages"] = net.ledger.messages - snap_m

    row["user_storage_bytes"] = owner.user_storage_bytes(index)
    row["user_storage_match"] = int(
        row["user_storage_bytes"] == artifact_user_storage(cfg.mechanism, cfg.k)
    )

    if cfg.adversary > 0:
        ids = sorted(net.peers)
        chosen = net.rng.sample(ids, min(cfg.adversary, len(ids)))
        for i, pid in enumerate(chosen):
            net.subvert(pid, parse_behavior(cfg.behaviors[i % len(cfg.behaviors)]))
    try:
        owner.put(index, data_three)
        row["adv_put_ok"] = 1
        expected = data_three
    except WriteQuorumError:
        row["adv_put_ok"] = 0
        expected = data_two
    try:
        row["adv_get_ok"] = int(reader.get(index) == expected)
    except (NoMajorityError, NoReadAccessError):
        row["adv_get_ok"] = 0
    return row


def _aggregate(rows: list[dict]) -> dict:
    if not rows:
        return {}
    out = {}
    for key in sorted(rows[0]):
        if key == "trial":
            continue
        values = [row[key] for row in rows]
        mean = sum(values) / len(values)
        out[f"mean_{key}"] = round(mean, 6)
    for flag in ("put_messages_match", "user_storage_match", "get_ok"):
        out[f"all_{flag}"] = int(all(row[flag] for row in rows))
    return out
