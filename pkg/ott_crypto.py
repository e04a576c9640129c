"""
OTT Crypto Module
Deterministic primitives shared by every other module:
- BLAKE2b-256 hashing (RFC 7693, 32-byte digest)
- Ed25519 key pairs derived from 32-byte seeds (RFC 8032, pure Ed25519)
- Sign / verify
"""

import hashlib
import logging
import secrets
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

logger = logging.getLogger(__name__)

SEED_SIZE = 32
DIGEST_SIZE = 32
PUBLIC_KEY_SIZE = 32
SIGNATURE_SIZE = 64


def _require_length(name: str, value: bytes, size: int) -> bytes:
    value = bytes(value)
    if len(value) != size:
        raise ValueError(f"{name} must be {size} bytes, got {len(value)}")
    return value


@dataclass(frozen=True)
class SigningKeyPair:
    """Ed25519 key pair; secret is the 32-byte RFC 8032 seed"""
    secret: bytes = field(repr=False)
    public: bytes

    def __post_init__(self):
        _require_length("secret", self.secret, SEED_SIZE)
        _require_length("public", self.public, PUBLIC_KEY_SIZE)


def hash_digest(data: bytes) -> bytes:
    """BLAKE2b with a 32-byte digest"""
    return hashlib.blake2b(bytes(data), digest_size=DIGEST_SIZE).digest()


def random_seed() -> bytes:
    """32 bytes from the operating system's CSPRNG"""
    return secrets.token_bytes(SEED_SIZE)


def keypair_from_seed(seed: bytes) -> SigningKeyPair:
    """Ed25519 key pair whose secret seed equals the input"""
    seed = _require_length("seed", seed, SEED_SIZE)
    public = Ed25519PrivateKey.from_private_bytes(seed).public_key().public_bytes(
        encoding=serialization.Encoding.Raw,
        format=serialization.PublicFormat.Raw,
    )
    return SigningKeyPair(secret=seed, public=public)


def sign(secret: bytes, message: bytes) -> bytes:
    """Pure Ed25519 signature (no prehash, empty context)"""
    secret = _require_length("secret", secret, SEED_SIZE)
    return Ed25519PrivateKey.from_private_bytes(secret).sign(bytes(message))


def verify(public: bytes, message: bytes, sig: bytes) -> bool:
    """True iff sig is a valid Ed25519 signature of message under public; never raises"""
    if len(public) != PUBLIC_KEY_SIZE or len(sig) != SIGNATURE_SIZE:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(bytes(public)).verify(bytes(sig), bytes(message))
        return True
    except InvalidSignature:
        return False
    except ValueError as e:
        # Invalid point encodings surface as ValueError in some backends
        logger.debug(f"Rejecting malformed public key: {e}")
        return False


def public_key_pem(public: bytes) -> str:
    """SubjectPublicKeyInfo PEM for a raw Ed25519 public key"""
    public = _require_length("public", public, PUBLIC_KEY_SIZE)
    return Ed25519PublicKey.from_public_bytes(public).public_bytes(
        encoding=serialization.Encoding.PEM,
        format=serialization.PublicFormat.SubjectPublicKeyInfo,
    ).decode('ascii')
