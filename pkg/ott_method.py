"""
OTT Method Module
The four DID method functions over a ledger client:
- create:  fresh seeds -> index material -> DID Document -> create message -> attach
- resolve: fetch by index -> first valid create governs -> first valid revoke revokes
- revoke:  attach the revoke message revealing pk1
- update:  revoke the old DID, then create a new one from new seeds

A DidKeyRing must not be used by two concurrent revoke/update calls.
"""

import base64
import json
import logging
import os
import tempfile
import textwrap
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dateutil import parser as date_parser

from ott_crypto import PUBLIC_KEY_SIZE, public_key_pem
from ott_errors import (
    AlreadyRevoked,
    DocumentTooLarge,
    InvalidKeyType,
    KeyringError,
    KeyringExists,
    MalformedStoredDocument,
    NotOttMessage,
    ParseError,
    PartialUpdateError,
)
from ott_index import Did, IndexMaterial, generate_index_material, parse_did
from ott_ledger import LedgerClient
from ott_message import (
    MAX_DATA_LENGTH,
    MessageKind,
    decode_message,
    encode_create,
    encode_revoke,
    validate_create,
    validate_revoke,
)

logger = logging.getLogger(__name__)

DID_CONTEXT = "https://www.w3.org/ns/did/v1"
KEY_FRAGMENT = "#keys-0"
DEFAULT_KEY_TYPE = "Ed25519VerificationKey2020"
ED25519_KEY_TYPES = ("Ed25519VerificationKey2020", "Ed25519VerificationKey2018")
KNOWN_KEY_TYPES = ED25519_KEY_TYPES + (
    "JsonWebKey2020",
    "EcdsaSecp256k1VerificationKey2019",
    "RsaVerificationKey2018",
)

PEM_HEADER = "-----BEGIN PUBLIC KEY-----"
PEM_FOOTER = "-----END PUBLIC KEY-----"

KEYRING_VERSION = 1


# ---------------------------------------------------------------------------
# DID Document
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerificationMethod:
    id: str
    type: str
    controller: str
    public_key_pem: str

    def to_dict(self) -> Dict[str, str]:
        return {
            'id': self.id,
            'type': self.type,
            'controller': self.controller,
            'publicKeyPem': self.public_key_pem,
        }


@dataclass(frozen=True)
class DidDocument:
    """W3C-shaped document binding a DID to its authentication key"""
    id: str
    created: str
    authentication_method: VerificationMethod
    context: tuple = (DID_CONTEXT,)

    def to_dict(self) -> Dict[str, Any]:
        # Key order is part of the canonical form
        return {
            '@context': list(self.context),
            'id': self.id,
            'created': self.created,
            'authenticationMethod': self.authentication_method.to_dict(),
        }


def utc_timestamp(moment: Optional[datetime] = None) -> str:
    """RFC 3339 UTC with seconds precision"""
    moment = moment or datetime.now(timezone.utc)
    return moment.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def build_document(did: Did, auth_public_key_pem: str, key_type: str,
                   created: Optional[str] = None) -> DidDocument:
    return DidDocument(
        id=did.uri,
        created=created or utc_timestamp(),
        authentication_method=VerificationMethod(
            id=did.uri + KEY_FRAGMENT,
            type=key_type,
            controller=did.uri,
            public_key_pem=auth_public_key_pem,
        ),
    )


def serialize_document(doc: DidDocument) -> bytes:
    """Canonical JSON: UTF-8, fixed key order, no insignificant whitespace"""
    return json.dumps(doc.to_dict(), separators=(',', ':'), ensure_ascii=False).encode('utf-8')


def _require(obj: Dict[str, Any], key: str, path: str, kind: type = str) -> Any:
    if key not in obj:
        raise ParseError(f"{path}{key}", "missing required field")
    value = obj[key]
    if not isinstance(value, kind):
        raise ParseError(f"{path}{key}", f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def _check_pem(pem: str, path: str) -> None:
    lines = pem.strip().splitlines()
    if len(lines) < 3 or lines[0] != PEM_HEADER or lines[-1] != PEM_FOOTER:
        raise ParseError(path, "not a PUBLIC KEY PEM block")
    try:
        base64.b64decode(''.join(lines[1:-1]), validate=True)
    except ValueError as e:
        raise ParseError(path, f"PEM body is not base64: {e}") from e


def parse_document(data: Union[bytes, str]) -> DidDocument:
    """Inverse of serialize_document; ParseError names the offending field"""
    try:
        obj = json.loads(data)
    except (ValueError, UnicodeDecodeError) as e:
        raise ParseError("$", f"not JSON: {e}") from e
    if not isinstance(obj, dict):
        raise ParseError("$", "document must be a JSON object")

    context = _require(obj, '@context', '', list)
    if not context or not all(isinstance(c, str) for c in context):
        raise ParseError("@context", "must be a non-empty list of strings")
    did_uri = _require(obj, 'id', '')
    created = _require(obj, 'created', '')
    try:
        date_parser.isoparse(created)
    except (ValueError, OverflowError) as e:
        raise ParseError("created", f"not an RFC 3339 timestamp: {e}") from e

    method = _require(obj, 'authenticationMethod', '', dict)
    path = 'authenticationMethod.'
    method_id = _require(method, 'id', path)
    if method_id != did_uri + KEY_FRAGMENT:
        raise ParseError(path + 'id', f"must be {did_uri + KEY_FRAGMENT!r}, got {method_id!r}")
    pem = _require(method, 'publicKeyPem', path)
    _check_pem(pem, path + 'publicKeyPem')

    return DidDocument(
        context=tuple(context),
        id=did_uri,
        created=created,
        authentication_method=VerificationMethod(
            id=method_id,
            type=_require(method, 'type', path),
            controller=_require(method, 'controller', path),
            public_key_pem=pem,
        ),
    )


def auth_key_to_pem(key_bytes: bytes, key_type: str) -> str:
    """
    PEM text for the identity key placed in the document.

    PEM input is carried as-is; 32 raw bytes with an Ed25519 label become a
    SubjectPublicKeyInfo PEM; anything else is taken as DER
    SubjectPublicKeyInfo and armored without being parsed.
    """
    key_bytes = bytes(key_bytes)
    if not key_bytes:
        raise ValueError("authentication public key must be non-empty")

    if key_bytes.lstrip().startswith(b"-----BEGIN"):
        pem = key_bytes.decode('ascii').strip() + "\n"
        _check_pem(pem, 'publicKeyPem')
        return pem
    if key_type in ED25519_KEY_TYPES and len(key_bytes) == PUBLIC_KEY_SIZE:
        return public_key_pem(key_bytes)

    body = base64.b64encode(key_bytes).decode('ascii')
    return "\n".join([PEM_HEADER, *textwrap.wrap(body, 64), PEM_FOOTER]) + "\n"


# ---------------------------------------------------------------------------
# Resolution
# ---------------------------------------------------------------------------

class ResolutionStatus(Enum):
    VALID = "Valid"
    REVOKED = "Revoked"
    NOT_FOUND = "NotFound"
    INVALID = "Invalid"


@dataclass(frozen=True)
class Evidence:
    create_record_id: Optional[bytes] = None
    revoke_record_id: Optional[bytes] = None
    messages_scanned: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'createRecordId': self.create_record_id.hex() if self.create_record_id else None,
            'revokeRecordId': self.revoke_record_id.hex() if self.revoke_record_id else None,
            'messagesScanned': self.messages_scanned,
        }


@dataclass(frozen=True)
class ResolutionResult:
    status: ResolutionStatus
    document: Optional[DidDocument] = None
    evidence: Evidence = field(default_factory=Evidence)

    def document_dict(self) -> Dict[str, Any]:
        """The document, or {} when none is carried (revoked, not found, invalid)"""
        return self.document.to_dict() if self.document else {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            'status': self.status.value,
            'document': self.document_dict(),
            'evidence': self.evidence.to_dict(),
        }


def resolve_records(did: Did, records) -> ResolutionResult:
    """Resolution as a pure function of the record list for the DID's index"""
    index = did.index
    scanned = len(records)
    if not records:
        return ResolutionResult(ResolutionStatus.NOT_FOUND, evidence=Evidence(messages_scanned=0))

    decoded = []
    for record in records:
        try:
            decoded.append((record, decode_message(record.payload)))
        except NotOttMessage as e:
            logger.debug(f"Skipping non-OTT record seq={record.sequence}: {e}")

    governing = None
    for record, msg in decoded:
        if msg.kind is MessageKind.CREATE and validate_create(msg, index):
            governing = (record, msg)
            break

    if governing is None:
        status = ResolutionStatus.INVALID if decoded else ResolutionStatus.NOT_FOUND
        if decoded:
            logger.warning(f"{did}: {len(decoded)} OTT-shaped record(s), none valid")
        return ResolutionResult(status, evidence=Evidence(messages_scanned=scanned))

    create_record, create_msg = governing
    try:
        document = parse_document(create_msg.data)
        if document.id != did.uri:
            raise MalformedStoredDocument("id", f"document id {document.id!r} does not match {did.uri}")
        if document.authentication_method.controller != did.uri:
            raise MalformedStoredDocument("authenticationMethod.controller", "controller is not the DID itself")
    except ParseError as e:
        logger.warning(f"{did}: governing create carries an unusable document: {e}")
        return ResolutionResult(
            ResolutionStatus.INVALID,
            evidence=Evidence(create_record_id=create_record.message_id, messages_scanned=scanned),
        )

    for record, msg in decoded:
        if msg.kind is MessageKind.REVOKE and validate_revoke(msg, create_msg.public_key, create_msg.anchor, index):
            return ResolutionResult(
                ResolutionStatus.REVOKED,
                evidence=Evidence(
                    create_record_id=create_record.message_id,
                    revoke_record_id=record.message_id,
                    messages_scanned=scanned,
                ),
            )

    return ResolutionResult(
        ResolutionStatus.VALID,
        document=document,
        evidence=Evidence(create_record_id=create_record.message_id, messages_scanned=scanned),
    )


def resolve(did: Union[Did, str], ledger: LedgerClient) -> ResolutionResult:
    """Fetch every record under the DID's index and apply the resolution rules"""
    if isinstance(did, str):
        did = parse_did(did)
    records = ledger.fetch_by_index(did.index)
    result = resolve_records(did, records)
    logger.info(f"Resolved {did}: {result.status.value} ({result.evidence.messages_scanned} message(s))")
    return result


# ---------------------------------------------------------------------------
# Keyring
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DidKeyRing:
    """Secret material needed to revoke or update a DID, plus the identity key"""
    did: Did
    material: IndexMaterial = field(repr=False)
    auth_public_key: bytes = field(repr=False)
    key_type: str = DEFAULT_KEY_TYPE
    auth_public_key_pem: str = field(default='', repr=False)

    def __post_init__(self):
        if self.material.index != self.did.index:
            raise KeyringError("keyring material does not derive the keyring's DID")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'version': KEYRING_VERSION,
            'did': self.did.uri,
            **self.material.to_dict(),
            'keyType': self.key_type,
            'authPublicKeyPem': self.auth_public_key_pem,
        }


def check_keyring_destination(path: Union[str, Path], overwrite: bool = False) -> Path:
    """Raise unless a keyring could be written to path; nothing is created"""
    path = Path(path)
    if path.exists() and not overwrite:
        raise KeyringExists(f"keyring already exists: {path}")
    if path.is_dir():
        raise KeyringError(f"keyring path is a directory: {path}")

    ancestor = path.parent.absolute()
    while not ancestor.exists():
        ancestor = ancestor.parent
    if not ancestor.is_dir():
        raise KeyringError(f"cannot write keyring under {ancestor}: not a directory")
    if not os.access(ancestor, os.W_OK | os.X_OK):
        raise KeyringError(f"cannot write keyring under {ancestor}: permission denied")
    return path


def save_keyring(keyring: DidKeyRing, path: Union[str, Path], overwrite: bool = False) -> Path:
    """Write the keyring JSON via temp file + rename; owner-only permissions where supported"""
    path = check_keyring_destination(path, overwrite=overwrite)

    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=str(path.parent))
    try:
        with os.fdopen(fd, 'w', encoding='utf-8') as f:
            json.dump(keyring.to_dict(), f, indent=2)
            f.flush()
            os.fsync(f.fileno())
        try:
            os.chmod(tmp_name, 0o600)
        except OSError:
            pass
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise

    logger.info(f"Saved keyring for {keyring.did} to {path}")
    return path


def load_keyring(path: Union[str, Path]) -> DidKeyRing:
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
        material = IndexMaterial.from_seeds_hex(data['seed1'], data['seed2'])
        did = parse_did(data['did'])
        pem = data['authPublicKeyPem']
        return DidKeyRing(
            did=did,
            material=material,
            auth_public_key=pem.encode('ascii'),
            key_type=data.get('keyType', DEFAULT_KEY_TYPE),
            auth_public_key_pem=pem,
        )
    except FileNotFoundError:
        raise
    except (KeyError, ValueError, TypeError) as e:
        raise KeyringError(f"unreadable keyring {path}: {e}") from e


# ---------------------------------------------------------------------------
# Method functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PreparedCreate:
    """A checked create message, ready to attach"""
    keyring: DidKeyRing
    payload: bytes = field(repr=False)


def prepare_create(auth_public_key: bytes, key_type: str,
                   material: Optional[IndexMaterial] = None) -> PreparedCreate:
    """Validate the identity key, build the document and encode the create message; no ledger I/O"""
    if key_type not in KNOWN_KEY_TYPES:
        raise InvalidKeyType(f"unrecognized verification method type {key_type!r}")
    pem = auth_key_to_pem(auth_public_key, key_type)

    material = material or generate_index_material()
    document = build_document(material.did, pem, key_type)
    document_bytes = serialize_document(document)
    if len(document_bytes) > MAX_DATA_LENGTH:
        raise DocumentTooLarge(f"document is {len(document_bytes)} bytes, limit is {MAX_DATA_LENGTH}")

    keyring = DidKeyRing(
        did=material.did,
        material=material,
        auth_public_key=bytes(auth_public_key),
        key_type=key_type,
        auth_public_key_pem=pem,
    )
    return PreparedCreate(keyring=keyring, payload=encode_create(document_bytes, material))


def create(auth_public_key: bytes, key_type: str, ledger: LedgerClient,
           material: Optional[IndexMaterial] = None) -> DidKeyRing:
    """
    Generate a new DID and attach its create message.

    The returned keyring is the only way to revoke or update the DID later;
    the caller must persist it.
    """
    prepared = prepare_create(auth_public_key, key_type, material=material)
    ledger.attach(prepared.keyring.did.index, prepared.payload)
    logger.info(f"Created {prepared.keyring.did}")
    return prepared.keyring


def revoke(keyring: DidKeyRing, ledger: LedgerClient, precheck: bool = False) -> bool:
    """Attach the revoke message; precheck=True refuses when the DID already resolves Revoked"""
    if precheck and resolve(keyring.did, ledger).status is ResolutionStatus.REVOKED:
        raise AlreadyRevoked(f"{keyring.did} is already revoked")
    ledger.attach(keyring.did.index, encode_revoke(keyring.material))
    logger.info(f"Revoked {keyring.did}")
    return True


def update(keyring: DidKeyRing, auth_public_key: bytes, key_type: str, ledger: LedgerClient,
           material: Optional[IndexMaterial] = None) -> DidKeyRing:
    """
    Revoke the current DID, then create a new one from new seeds.

    Bad input fails before anything is attached. Once the revoke is on the
    ledger, any failure to attach the new create is a PartialUpdateError.
    """
    prepared = prepare_create(auth_public_key, key_type, material=material)

    revoke(keyring, ledger)
    try:
        ledger.attach(prepared.keyring.did.index, prepared.payload)
    except Exception as e:
        logger.error(f"Update of {keyring.did} stopped after revoke: {e}")
        raise PartialUpdateError(keyring.did.uri, e) from e

    logger.info(f"Updated {keyring.did} -> {prepared.keyring.did}")
    return prepared.keyring
