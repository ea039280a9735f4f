"""k-resilient fine-grained access control for DHTs.

Protocol library (three authentication mechanisms, ACL authorization,
2k+1 replication with majority voting), a deterministic network simulator
with a bounded adversary, and a benchmark CLI.
"""

from . import auth, bench, client, core, crypto, peer, scenario, simnet  # noqa: F401
from .auth import Mechanism
from .client import (
    NoMajorityError,
    NoReadAccessError,
    Session,
    VoteResult,
    WriteQuorumError,
    majority_vote,
)
from .core import (
    AclItem,
    Action,
    DhtValue,
    Index,
    Position,
    Rights,
    canonical_decode,
    canonical_encode,
    derive_positions,
    rights_allows,
)
from .simnet import Network

__version__ = "0.1.0"

__all__ = [
    "AclItem",
    "Action",
    "DhtValue",
    "Index",
    "Mechanism",
    "Network",
    "NoMajorityError",
    "NoReadAccessError",
    "Position",
    "Rights",
    "Session",
    "VoteResult",
    "WriteQuorumError",
    "canonical_decode",
    "canonical_encode",
    "derive_positions",
    "majority_vote",
    "rights_allows",
]
