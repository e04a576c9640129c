"""
OTT Index Module
Derives the index, the anchor and the two ephemeral key pairs from two seeds,
checks the create/revoke binding equations, and parses/formats did:ott URIs.

    anchor = hash(pk1)
    index  = hash(pk2 | anchor)
"""

import logging
import re
from dataclasses import dataclass, field
from typing import Dict

from ott_crypto import (
    DIGEST_SIZE,
    PUBLIC_KEY_SIZE,
    SigningKeyPair,
    hash_digest,
    keypair_from_seed,
    random_seed,
)
from ott_errors import MalformedDid

logger = logging.getLogger(__name__)

DID_METHOD = "ott"
DID_PREFIX = "did:ott:"
DID_PATTERN = re.compile(r"did:ott:([0-9a-f]{64})")


@dataclass(frozen=True)
class Did:
    """did:ott:<index-hex>"""
    index: bytes
    method: str = DID_METHOD

    def __post_init__(self):
        if len(self.index) != DIGEST_SIZE:
            raise MalformedDid(f"index must be {DIGEST_SIZE} bytes, got {len(self.index)}")

    @property
    def uri(self) -> str:
        return DID_PREFIX + self.index.hex()

    def __str__(self) -> str:
        return self.uri


@dataclass(frozen=True)
class IndexMaterial:
    """Everything that defines ownership of one OTT DID. Treat as secret."""
    seed1: bytes = field(repr=False)
    seed2: bytes = field(repr=False)
    kp1: SigningKeyPair = field(repr=False)
    kp2: SigningKeyPair = field(repr=False)
    anchor: bytes
    index: bytes

    @property
    def did(self) -> Did:
        return Did(index=self.index)

    def to_dict(self) -> Dict[str, str]:
        """Hex export used by keyring files"""
        return {
            'seed1': self.seed1.hex(),
            'seed2': self.seed2.hex(),
            'index': self.index.hex(),
        }

    @classmethod
    def from_seeds_hex(cls, seed1_hex: str, seed2_hex: str) -> "IndexMaterial":
        return derive_index_material(bytes.fromhex(seed1_hex), bytes.fromhex(seed2_hex))


def derive_index_material(seed1: bytes, seed2: bytes) -> IndexMaterial:
    """Two seeds -> two key pairs -> anchor -> index"""
    kp1 = keypair_from_seed(seed1)
    kp2 = keypair_from_seed(seed2)
    anchor = hash_digest(kp1.public)
    index = hash_digest(kp2.public + anchor)
    return IndexMaterial(
        seed1=bytes(seed1),
        seed2=bytes(seed2),
        kp1=kp1,
        kp2=kp2,
        anchor=anchor,
        index=index,
    )


def generate_index_material() -> IndexMaterial:
    """Fresh material from two OS-random seeds"""
    material = derive_index_material(random_seed(), random_seed())
    logger.debug(f"Generated index material for {material.did}")
    return material


def verify_create_binding(pk2: bytes, anchor: bytes, index: bytes) -> bool:
    """hash(pk2 | anchor) == index"""
    if len(pk2) != PUBLIC_KEY_SIZE or len(anchor) != DIGEST_SIZE:
        return False
    return hash_digest(bytes(pk2) + bytes(anchor)) == bytes(index)


def verify_revoke_binding(pk1: bytes, pk2: bytes, index: bytes) -> bool:
    """hash(pk2 | hash(pk1)) == index"""
    if len(pk1) != PUBLIC_KEY_SIZE:
        return False
    return verify_create_binding(pk2, hash_digest(bytes(pk1)), index)


def parse_did(uri: str) -> Did:
    """Parse the canonical form did:ott:<64 lowercase hex>; anything else is MalformedDid"""
    if not isinstance(uri, str):
        raise MalformedDid(f"DID must be a string, got {type(uri).__name__}")
    match = DID_PATTERN.fullmatch(uri)
    if not match:
        if not uri.startswith(DID_PREFIX):
            raise MalformedDid(f"not an OTT DID: {uri!r}")
        raise MalformedDid(f"method-specific id must be 64 lowercase hex characters: {uri!r}")
    return Did(index=bytes.fromhex(match.group(1)))


def format_did(index: bytes) -> str:
    return Did(index=bytes(index)).uri
