"""
OTT Message Module
Bit-exact codec and validators for the two OTT ledger messages.

Create (194 + n bytes):
    tag1[32] | tag2[32] | data_length[2, big-endian] | data[n] | pk2[32] | anchor[32] | signature[64]
Revoke (163 bytes):
    tag1[32] | tag2[32] | 0x0001 | 0x00 | pk1[32] | signature[64]

The signature covers every byte before it, in wire order. Create messages are
signed with sk2, revoke messages with sk1. See docs/wire-format.md.
"""

import logging
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from ott_crypto import (
    DIGEST_SIZE,
    PUBLIC_KEY_SIZE,
    SIGNATURE_SIZE,
    hash_digest,
    sign,
    verify,
)
from ott_errors import DataTooLarge, EmptyDocument, NotOttMessage
from ott_index import IndexMaterial, verify_create_binding, verify_revoke_binding

logger = logging.getLogger(__name__)

TAG_SIZE = 32
LENGTH_SIZE = 2
TAG1_CONST = hash_digest(b"OTT-MESSAGE-TAG-1")
TAG2_CONST = hash_digest(b"OTT-MESSAGE-TAG-2")

MAX_DATA_LENGTH = 31600
REVOKE_DATA = b"\x00"

HEADER_SIZE = 2 * TAG_SIZE + LENGTH_SIZE                          # 66
BASE_OVERHEAD = HEADER_SIZE + PUBLIC_KEY_SIZE + SIGNATURE_SIZE    # 162
CREATE_OVERHEAD = BASE_OVERHEAD + DIGEST_SIZE                     # 194
REVOKE_LENGTH = BASE_OVERHEAD + len(REVOKE_DATA)                  # 163
MAX_CREATE_LENGTH = CREATE_OVERHEAD + MAX_DATA_LENGTH             # 31794


class MessageKind(Enum):
    CREATE = "Create"
    REVOKE = "Revoke"


@dataclass(frozen=True)
class OttMessage:
    """Decoded create or revoke message (structure only, nothing verified)"""
    kind: MessageKind
    tag1: bytes
    tag2: bytes
    data: bytes
    public_key: bytes
    signature: bytes
    anchor: Optional[bytes] = None

    @property
    def data_length(self) -> int:
        return len(self.data)

    def signed_range(self) -> bytes:
        """The exact bytes the signature covers"""
        prefix = self.tag1 + self.tag2 + struct.pack(">H", self.data_length) + self.data + self.public_key
        if self.kind is MessageKind.CREATE:
            prefix += self.anchor
        return prefix

    def encode(self) -> bytes:
        return self.signed_range() + self.signature


def _header(data: bytes) -> bytes:
    return TAG1_CONST + TAG2_CONST + struct.pack(">H", len(data)) + data


def encode_create(document_bytes: bytes, material: IndexMaterial) -> bytes:
    """Wrap a DID Document into a create message signed with sk2"""
    document_bytes = bytes(document_bytes)
    if not document_bytes:
        raise EmptyDocument("create message needs a non-empty document")
    if len(document_bytes) > MAX_DATA_LENGTH:
        raise DataTooLarge(f"document is {len(document_bytes)} bytes, limit is {MAX_DATA_LENGTH}")

    prefix = _header(document_bytes) + material.kp2.public + material.anchor
    return prefix + sign(material.kp2.secret, prefix)


def encode_revoke(material: IndexMaterial) -> bytes:
    """Revoke message revealing pk1, signed with sk1"""
    prefix = _header(REVOKE_DATA) + material.kp1.public
    return prefix + sign(material.kp1.secret, prefix)


def decode_message(payload: bytes) -> OttMessage:
    """
    Parse a raw ledger payload into an OttMessage.

    Kind comes from length arithmetic: total - 162 - data_length is 32 for a
    create (anchor present) and 0 for a revoke. Signatures and bindings are not
    checked here.
    """
    payload = bytes(payload)
    if len(payload) < HEADER_SIZE:
        raise NotOttMessage(f"payload of {len(payload)} bytes is shorter than the header")

    tag1 = payload[:TAG_SIZE]
    tag2 = payload[TAG_SIZE:2 * TAG_SIZE]
    if tag1 != TAG1_CONST or tag2 != TAG2_CONST:
        raise NotOttMessage("tags do not identify an OTT message")

    (data_length,) = struct.unpack(">H", payload[2 * TAG_SIZE:HEADER_SIZE])
    extra = len(payload) - BASE_OVERHEAD - data_length

    if extra == DIGEST_SIZE:
        kind = MessageKind.CREATE
        if data_length == 0 or data_length > MAX_DATA_LENGTH:
            raise NotOttMessage(f"create data length {data_length} out of range")
    elif extra == 0:
        kind = MessageKind.REVOKE
    else:
        raise NotOttMessage(
            f"length {len(payload)} inconsistent with data_length {data_length}"
        )

    offset = HEADER_SIZE
    data = payload[offset:offset + data_length]
    offset += data_length
    public_key = payload[offset:offset + PUBLIC_KEY_SIZE]
    offset += PUBLIC_KEY_SIZE

    anchor = None
    if kind is MessageKind.CREATE:
        anchor = payload[offset:offset + DIGEST_SIZE]
        offset += DIGEST_SIZE
    elif data != REVOKE_DATA:
        raise NotOttMessage("revoke message data must be the single byte 0x00")

    signature = payload[offset:offset + SIGNATURE_SIZE]

    return OttMessage(
        kind=kind,
        tag1=tag1,
        tag2=tag2,
        data=data,
        public_key=public_key,
        signature=signature,
        anchor=anchor,
    )


def validate_create(msg: OttMessage, index: bytes) -> bool:
    """Integrity signature under the embedded pk2, then hash(pk2 | anchor) == index"""
    if msg.kind is not MessageKind.CREATE or msg.anchor is None:
        return False
    if not verify(msg.public_key, msg.signed_range(), msg.signature):
        logger.debug("create message signature check failed")
        return False
    return verify_create_binding(msg.public_key, msg.anchor, index)


def validate_revoke(msg: OttMessage, create_pk2: bytes, create_anchor: bytes, index: bytes) -> bool:
    """Integrity signature under pk1, anchor == hash(pk1), hash(pk2 | hash(pk1)) == index"""
    if msg.kind is not MessageKind.REVOKE:
        return False
    if not verify(msg.public_key, msg.signed_range(), msg.signature):
        logger.debug("revoke message signature check failed")
        return False
    if hash_digest(msg.public_key) != bytes(create_anchor):
        return False
    return verify_revoke_binding(msg.public_key, create_pk2, index)
