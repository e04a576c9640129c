"""
DID Provider Module
Method-agility registry: providers register named DID method tables, and
applications fetch a table by method name at run time and call
create / resolve / update / revoke through one uniform interface.

Table function signatures (status codes in STATUS_*):
    create(key_material, key_type)                           -> DidHandle or None
    resolve(did, document_out)                               -> status
    update(did, key_material, key_type, handle_out=None)     -> status
    revoke(did)                                              -> status

document_out is a bytearray that receives the canonical document JSON.
"""

import logging
import threading
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from ott_errors import (
    DuplicateMethodWithinProvider,
    InvalidTable,
    LedgerUnavailable,
    MalformedDid,
    MethodNotFound,
    OttError,
    PartialUpdateError,
)
from ott_index import parse_did
from ott_ledger import LedgerClient
from ott_method import (
    DidKeyRing,
    ResolutionStatus,
    create as ott_create,
    resolve as ott_resolve,
    revoke as ott_revoke,
    serialize_document,
    update as ott_update,
)

logger = logging.getLogger(__name__)

# Operation and function identifiers
OP_DID = 24
FUNC_DID_CREATE = 1
FUNC_DID_RESOLVE = 2
FUNC_DID_UPDATE = 3
FUNC_DID_REVOKE = 4

# Status codes returned by table functions
STATUS_OK = 1
STATUS_FAILURE = 0
STATUS_REVOKED = -1
STATUS_NOT_FOUND = -2
STATUS_INVALID = -3
STATUS_LEDGER_UNAVAILABLE = -4
STATUS_MALFORMED_DID = -5
STATUS_UNKNOWN_HANDLE = -6

RESOLUTION_STATUS_CODES = {
    ResolutionStatus.VALID: STATUS_OK,
    ResolutionStatus.REVOKED: STATUS_REVOKED,
    ResolutionStatus.NOT_FOUND: STATUS_NOT_FOUND,
    ResolutionStatus.INVALID: STATUS_INVALID,
}

OTT_METHOD_NAME = "OTT"
OTT_PROVIDER_NAME = "didprovider"


@dataclass(frozen=True)
class OperationId:
    operation: int = OP_DID
    function_ids: Mapping[str, int] = field(default_factory=lambda: MappingProxyType({
        'create': FUNC_DID_CREATE,
        'resolve': FUNC_DID_RESOLVE,
        'update': FUNC_DID_UPDATE,
        'revoke': FUNC_DID_REVOKE,
    }))


DID_OPERATION = OperationId()


@dataclass(frozen=True)
class MethodTable:
    method_name: str
    provider_name: str
    create_fn: Callable
    resolve_fn: Callable
    update_fn: Callable
    revoke_fn: Callable

    def function(self, function_id: int) -> Callable:
        """Look up a table entry by its numeric function id"""
        by_id = {
            FUNC_DID_CREATE: self.create_fn,
            FUNC_DID_RESOLVE: self.resolve_fn,
            FUNC_DID_UPDATE: self.update_fn,
            FUNC_DID_REVOKE: self.revoke_fn,
        }
        if function_id not in by_id:
            raise KeyError(f"no DID function with id {function_id}")
        return by_id[function_id]

    def check(self) -> None:
        for name in ('create_fn', 'resolve_fn', 'update_fn', 'revoke_fn'):
            if not callable(getattr(self, name)):
                raise InvalidTable(f"{self.provider_name}/{self.method_name}: {name} is not callable")


class DidRegistry:
    """
    provider_name -> tables, in registration order.

    When several providers offer one method name, the most recently
    registered provider wins. Re-registering a provider replaces its tables
    and moves it to the end.
    """

    def __init__(self, context: str = "default"):
        self.context = context
        self._lock = threading.RLock()
        self._providers: Dict[str, Tuple[MethodTable, ...]] = {}

    def register_provider(self, provider_name: str, tables: Sequence[MethodTable]) -> bool:
        tables = tuple(tables)
        seen = set()
        for table in tables:
            if not isinstance(table, MethodTable):
                raise InvalidTable(f"{provider_name}: expected MethodTable, got {type(table).__name__}")
            table.check()
            if table.method_name in seen:
                raise DuplicateMethodWithinProvider(
                    f"{provider_name} offers {table.method_name!r} more than once"
                )
            seen.add(table.method_name)

        with self._lock:
            replaced = self._providers.pop(provider_name, None) is not None
            self._providers[provider_name] = tables
        action = "Replaced" if replaced else "Registered"
        logger.info(f"{action} provider {provider_name!r} with methods {sorted(seen)}")
        return True

    def fetch(self, method_name: str, provider_name: Optional[str] = None) -> MethodTable:
        """Resolve one table for method_name, optionally restricted to one provider"""
        with self._lock:
            providers = list(self._providers.items())
        for name, tables in reversed(providers):
            if provider_name is not None and name != provider_name:
                continue
            for table in tables:
                if table.method_name == method_name:
                    return table
        where = f" from provider {provider_name!r}" if provider_name else ""
        raise MethodNotFound(f"no DID method {method_name!r}{where} in context {self.context!r}")

    def list_methods(self) -> List[Tuple[str, str]]:
        with self._lock:
            providers = list(self._providers.items())
        return [(name, table.method_name) for name, tables in providers for table in tables]


def register_provider(registry: DidRegistry, provider_name: str, tables: Sequence[MethodTable]) -> bool:
    return registry.register_provider(provider_name, tables)


def fetch(registry: DidRegistry, method_name: str, provider_name: Optional[str] = None) -> MethodTable:
    return registry.fetch(method_name, provider_name)


def list_methods(registry: DidRegistry) -> List[Tuple[str, str]]:
    return registry.list_methods()


# ---------------------------------------------------------------------------
# OTT provider
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DidHandle:
    """Opaque handle returned by a table's create function"""
    did: str
    keyring: DidKeyRing = field(repr=False, compare=False)


class OttProvider:
    """Holds the keyrings of the DIDs it created so revoke/update can take a DID string"""

    def __init__(self, ledger: LedgerClient, provider_name: str = OTT_PROVIDER_NAME):
        self.ledger = ledger
        self.provider_name = provider_name
        self._lock = threading.Lock()
        self._keyrings: Dict[str, DidKeyRing] = {}

    def adopt(self, keyring: DidKeyRing) -> DidHandle:
        """Make a keyring created elsewhere (e.g. loaded from disk) usable through the table"""
        with self._lock:
            self._keyrings[keyring.did.uri] = keyring
        return DidHandle(did=keyring.did.uri, keyring=keyring)

    def _keyring_for(self, did: str) -> Optional[DidKeyRing]:
        with self._lock:
            return self._keyrings.get(did)

    def create(self, key_material: bytes, key_type: str) -> Optional[DidHandle]:
        try:
            keyring = ott_create(key_material, key_type, self.ledger)
        except (OttError, ValueError) as e:
            logger.error(f"OTT create failed: {e}")
            return None
        return self.adopt(keyring)

    def resolve(self, did: str, document_out: Optional[bytearray] = None) -> int:
        try:
            parsed = parse_did(did)
            result = ott_resolve(parsed, self.ledger)
        except MalformedDid as e:
            logger.error(f"OTT resolve: {e}")
            return STATUS_MALFORMED_DID
        except LedgerUnavailable as e:
            logger.error(f"OTT resolve: {e}")
            return STATUS_LEDGER_UNAVAILABLE

        if document_out is not None:
            document_out.clear()
            if result.document is not None:
                document_out.extend(serialize_document(result.document))
        return RESOLUTION_STATUS_CODES[result.status]

    def revoke(self, did: str) -> int:
        keyring = self._keyring_for(did)
        if keyring is None:
            return self._unknown(did)
        try:
            ott_revoke(keyring, self.ledger)
        except LedgerUnavailable as e:
            logger.error(f"OTT revoke of {did} failed: {e}")
            return STATUS_LEDGER_UNAVAILABLE
        except OttError as e:
            logger.error(f"OTT revoke of {did} failed: {e}")
            return STATUS_FAILURE
        return STATUS_OK

    def update(self, did: str, key_material: bytes, key_type: str,
               handle_out: Optional[list] = None) -> int:
        keyring = self._keyring_for(did)
        if keyring is None:
            return self._unknown(did)
        try:
            new_keyring = ott_update(keyring, key_material, key_type, self.ledger)
        except PartialUpdateError as e:
            logger.error(str(e))
            return STATUS_FAILURE
        except LedgerUnavailable as e:
            logger.error(f"OTT update of {did} failed: {e}")
            return STATUS_LEDGER_UNAVAILABLE
        except (OttError, ValueError) as e:
            logger.error(f"OTT update of {did} failed: {e}")
            return STATUS_FAILURE

        handle = self.adopt(new_keyring)
        if handle_out is not None:
            handle_out.append(handle)
        return STATUS_OK

    @staticmethod
    def _unknown(did: str) -> int:
        try:
            parse_did(did)
        except MalformedDid:
            return STATUS_MALFORMED_DID
        logger.error(f"No keyring held for {did}")
        return STATUS_UNKNOWN_HANDLE

    def table(self) -> MethodTable:
        return MethodTable(
            method_name=OTT_METHOD_NAME,
            provider_name=self.provider_name,
            create_fn=self.create,
            resolve_fn=self.resolve,
            update_fn=self.update,
            revoke_fn=self.revoke,
        )


def make_ott_provider(ledger: LedgerClient) -> OttProvider:
    return OttProvider(ledger)


# Process-wide registry
_default_registry = None
_default_registry_guard = threading.Lock()


def get_default_registry() -> DidRegistry:
    """Get or create the process-wide registry"""
    global _default_registry
    with _default_registry_guard:
        if _default_registry is None:
            _default_registry = DidRegistry()
        return _default_registry


def load_ott_provider(ledger: LedgerClient, registry: Optional[DidRegistry] = None) -> OttProvider:
    """Register the OTT provider for `ledger` in `registry` (default: the process-wide one)"""
    provider = make_ott_provider(ledger)
    (registry or get_default_registry()).register_provider(provider.provider_name, [provider.table()])
    return provider
