"""
OTT Errors Module
Single exception hierarchy for the OTT DID method, gateway and provider registry
"""

from typing import Optional


class OttError(Exception):
    """Base error for everything raised by the OTT package"""


# DID / codec errors

class MalformedDid(OttError, ValueError):
    """DID URI does not match did:ott:<64 lowercase hex>"""


class DataTooLarge(OttError, ValueError):
    """Data field exceeds the 31600 byte limit of a create message"""


class EmptyDocument(OttError, ValueError):
    """Create message requested with an empty document"""


class NotOttMessage(OttError, ValueError):
    """Payload is not a structurally valid OTT create or revoke message"""


# Ledger errors

class PayloadTooLarge(OttError, ValueError):
    """Payload exceeds the ledger's size cap"""


class LedgerUnavailable(OttError):
    """Ledger could not be reached, timed out, or failed server-side"""


class InvalidProfile(OttError, ValueError):
    """Latency profile has negative or inconsistent parameters"""


# Method errors

class DocumentTooLarge(DataTooLarge):
    """Serialized DID Document exceeds the create message data limit"""


class ParseError(OttError, ValueError):
    """DID Document JSON is missing a field or has a wrong type"""

    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


class MalformedStoredDocument(ParseError):
    """A validly signed create message carries an unparseable document"""


class InvalidKeyType(OttError, ValueError):
    """Verification method type label is not recognized"""


class AlreadyRevoked(OttError):
    """Revoke pre-check found the DID already revoked"""


class PartialUpdateError(OttError):
    """Update revoked the old DID but could not create the new one"""

    def __init__(self, revoked_did: str, cause: Optional[BaseException] = None):
        self.revoked_did = revoked_did
        self.cause = cause
        super().__init__(
            f"{revoked_did} was revoked but the replacement DID could not be created: {cause}"
        )


class KeyringExists(OttError):
    """Refusing to overwrite an existing keyring file"""


class KeyringError(OttError, ValueError):
    """Keyring file is unreadable or inconsistent"""


# Gateway errors

class BindError(OttError):
    """Gateway could not bind its listen address"""


class StoreCorrupt(OttError):
    """Append-only log line failed its checksum or could not be decoded"""

    def __init__(self, line_number: int, reason: str):
        self.line_number = line_number
        super().__init__(f"store line {line_number}: {reason}")


class StoreLocked(OttError):
    """Another gateway instance holds the store's single-writer lock"""


# Provider registry errors

class DuplicateMethodWithinProvider(OttError, ValueError):
    """A provider registered two tables under the same method name"""


class InvalidTable(OttError, ValueError):
    """A method table is missing one of its four functions"""


class MethodNotFound(OttError, LookupError):
    """No registered provider offers the requested DID method"""


# CLI exit codes
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_LEDGER = 3
EXIT_KEYRING_EXISTS = 4
EXIT_NOT_FOUND = 5
EXIT_INVALID = 6
EXIT_PARTIAL_UPDATE = 7


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit code contract"""
    if isinstance(exc, (LedgerUnavailable, BindError, StoreCorrupt, StoreLocked)):
        return EXIT_LEDGER
    if isinstance(exc, KeyringExists):
        return EXIT_KEYRING_EXISTS
    if isinstance(exc, PartialUpdateError):
        return EXIT_PARTIAL_UPDATE
    if isinstance(exc, (MalformedDid, InvalidProfile, InvalidKeyType)):
        return EXIT_USAGE
    return EXIT_FAILURE
