"""
OTT Ledger Module
Abstraction over the ledger's indexation primitives:
- attach(index, payload)        (send_indexation_msg)
- fetch_by_index(index)         (find_message_by_index)

Two implementations share one record model:
- SimulatedTangle: in-memory, latency injection, fault hooks
- HttpLedgerClient: talks to the bundled gateway over HTTP

The ledger stores arbitrary bytes under arbitrary indexes and never validates
OTT semantics. Records are totally ordered by a ledger-assigned sequence.
"""

import base64
import logging
import struct
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import requests
from requests.adapters import HTTPAdapter
from urllib3.util.retry import Retry

from ott_crypto import DIGEST_SIZE, hash_digest
from ott_errors import InvalidProfile, LedgerUnavailable, OttError, PayloadTooLarge

logger = logging.getLogger(__name__)

MAX_PAYLOAD_SIZE = 32768
DEFAULT_TIMEOUT = 30.0
API_PREFIX = "/api/v1"

DELAY_KINDS = {
    'fixed': 1,
    'uniform': 2,
    'lognormal': 2,
}

# Gateway presets, scaled to desk time. Fetch delays mirror the measured
# private (3.49 ms) and public (216 ms) resolve times; attach stands in for PoW.
PRESET_PROFILES = {
    'private': "attach=uniform:20:40,fetch=fixed:3.49",
    'public': "attach=uniform:20:40,fetch=fixed:216",
}


# ---------------------------------------------------------------------------
# Latency profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DelaySpec:
    """fixed(ms) | uniform(lo, hi) | lognormal(mu, sigma), all in milliseconds"""
    kind: str = 'fixed'
    params: Tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if self.kind not in DELAY_KINDS:
            raise InvalidProfile(f"unknown delay kind {self.kind!r}")
        if len(self.params) != DELAY_KINDS[self.kind]:
            raise InvalidProfile(f"{self.kind} takes {DELAY_KINDS[self.kind]} parameter(s), got {len(self.params)}")
        if any(not np.isfinite(p) or p < 0 for p in self.params):
            raise InvalidProfile(f"delay parameters must be finite and >= 0: {self.params}")
        if self.kind == 'uniform' and self.params[0] > self.params[1]:
            raise InvalidProfile(f"uniform bounds reversed: {self.params}")

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == 'fixed':
            return float(self.params[0])
        if self.kind == 'uniform':
            lo, hi = self.params
            return float(rng.uniform(lo, hi)) if hi > lo else float(lo)
        mu, sigma = self.params
        return float(rng.lognormal(mu, sigma))

    def __str__(self) -> str:
        return ':'.join([self.kind] + [f"{p:g}" for p in self.params])


@dataclass(frozen=True)
class LatencyProfile:
    """Delays injected before attach and fetch complete"""
    attach_delay: DelaySpec = field(default_factory=DelaySpec)
    fetch_delay: DelaySpec = field(default_factory=DelaySpec)
    seed: Optional[int] = None

    @classmethod
    def zero(cls) -> "LatencyProfile":
        return cls()

    def __str__(self) -> str:
        return f"attach={self.attach_delay},fetch={self.fetch_delay}"


def parse_delay(text: str) -> DelaySpec:
    """fixed:<ms> | uniform:<lo>:<hi> | lognormal:<mu>:<sigma>"""
    kind, *raw = text.strip().split(':')
    try:
        params = tuple(float(p) for p in raw)
    except ValueError as e:
        raise InvalidProfile(f"bad delay {text!r}: {e}") from e
    return DelaySpec(kind=kind.lower(), params=params)


def parse_latency(text: str, seed: Optional[int] = None) -> LatencyProfile:
    """
    Parse the CLI latency grammar.

    '<delay>' applies to both attach and fetch; 'attach=<delay>,fetch=<delay>'
    sets them separately (either may be omitted); 'private' / 'public' are presets.
    """
    text = (text or '').strip()
    if text.lower() in PRESET_PROFILES:
        text = PRESET_PROFILES[text.lower()]
    if not text:
        raise InvalidProfile("empty latency profile")

    if '=' not in text:
        delay = parse_delay(text)
        return LatencyProfile(attach_delay=delay, fetch_delay=delay, seed=seed)

    parts: Dict[str, DelaySpec] = {}
    for chunk in text.split(','):
        key, sep, value = chunk.partition('=')
        key = key.strip().lower()
        if not sep or key not in ('attach', 'fetch'):
            raise InvalidProfile(f"bad latency component {chunk!r}")
        parts[key] = parse_delay(value)
    return LatencyProfile(
        attach_delay=parts.get('attach', DelaySpec()),
        fetch_delay=parts.get('fetch', DelaySpec()),
        seed=seed,
    )


class LatencyInjector:
    """Samples and sleeps delays from a profile; seeded profiles are reproducible"""

    def __init__(self, profile: Optional[LatencyProfile] = None):
        self._lock = threading.Lock()
        self.configure(profile or LatencyProfile.zero())

    def configure(self, profile: LatencyProfile) -> None:
        if not isinstance(profile, LatencyProfile):
            raise InvalidProfile(f"expected LatencyProfile, got {type(profile).__name__}")
        with self._lock:
            self.profile = profile
            self._rng = np.random.default_rng(profile.seed)

    def sample_attach(self) -> float:
        with self._lock:
            return self.profile.attach_delay.sample(self._rng)

    def sample_fetch(self) -> float:
        with self._lock:
            return self.profile.fetch_delay.sample(self._rng)

    @staticmethod
    def _sleep(ms: float) -> None:
        if ms > 0:
            time.sleep(ms / 1000.0)

    def delay_attach(self) -> None:
        self._sleep(self.sample_attach())

    def delay_fetch(self) -> None:
        self._sleep(self.sample_fetch())


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LedgerRecord:
    """A message as stored by the ledger"""
    message_id: bytes
    index: bytes
    payload: bytes
    attached_at: int  # UTC milliseconds
    sequence: int


def message_id_for(index: bytes, payload: bytes, sequence: int) -> bytes:
    """hash(index | payload | sequence as 8-byte big-endian)"""
    return hash_digest(bytes(index) + bytes(payload) + struct.pack(">Q", sequence))


def now_ms() -> int:
    return int(time.time() * 1000)


def check_index(index: bytes) -> bytes:
    index = bytes(index)
    if len(index) != DIGEST_SIZE:
        raise ValueError(f"index must be {DIGEST_SIZE} bytes, got {len(index)}")
    return index


class RecordIndex:
    """
    Append-only index -> records map with a strictly increasing sequence.

    Writers are serialized by one lock; readers see immutable tuples, so a
    fetch never observes a half-appended record.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._by_index: Dict[bytes, Tuple[LedgerRecord, ...]] = {}
        self._by_id: Dict[bytes, LedgerRecord] = {}
        self._next_sequence = 0

    @property
    def lock(self) -> threading.Lock:
        return self._lock

    def __len__(self) -> int:
        return len(self._by_id)

    def next_record(self, index: bytes, payload: bytes) -> LedgerRecord:
        """Build the next record without publishing it; caller holds the lock"""
        sequence = self._next_sequence
        return LedgerRecord(
            message_id=message_id_for(index, payload, sequence),
            index=index,
            payload=payload,
            attached_at=now_ms(),
            sequence=sequence,
        )

    def publish(self, record: LedgerRecord) -> None:
        """Make a record visible; caller holds the lock"""
        if record.sequence < self._next_sequence:
            raise ValueError(f"sequence {record.sequence} is not after {self._next_sequence - 1}")
        self._by_index[record.index] = self._by_index.get(record.index, ()) + (record,)
        self._by_id[record.message_id] = record
        self._next_sequence = record.sequence + 1

    def append(self, index: bytes, payload: bytes) -> LedgerRecord:
        with self._lock:
            record = self.next_record(index, payload)
            self.publish(record)
        return record

    def fetch(self, index: bytes) -> List[LedgerRecord]:
        return list(self._by_index.get(index, ()))

    def get(self, message_id: bytes) -> Optional[LedgerRecord]:
        return self._by_id.get(message_id)


# ---------------------------------------------------------------------------
# Ledger clients
# ---------------------------------------------------------------------------

class LedgerClient(ABC):
    """The two indexation primitives plus latency configuration"""

    @abstractmethod
    def attach(self, index: bytes, payload: bytes) -> bytes:
        """Store payload under index; returns the message id"""

    @abstractmethod
    def fetch_by_index(self, index: bytes) -> List[LedgerRecord]:
        """All records under index, ascending by sequence"""

    @abstractmethod
    def configure_latency(self, profile: LatencyProfile) -> bool:
        """Apply a latency profile to subsequent calls"""


class SimulatedTangle(LedgerClient):
    """In-memory ledger; process-lifetime durability only"""

    def __init__(self, latency: Optional[LatencyProfile] = None, max_payload: int = MAX_PAYLOAD_SIZE):
        self.max_payload = max_payload
        self.records = RecordIndex()
        self.latency = LatencyInjector(latency)
        self._fault_lock = threading.Lock()
        self._attach_budget: Optional[int] = None
        self._fail_fetch = False

    def inject_fault(self, attach_after: Optional[int] = None, fetch: bool = False) -> None:
        """
        attach_after=k lets k more attaches succeed, then every attach raises
        LedgerUnavailable. fetch=True makes fetches fail. Call with no
        arguments to clear.
        """
        with self._fault_lock:
            self._attach_budget = attach_after
            self._fail_fetch = fetch

    def _check_attach_fault(self) -> None:
        with self._fault_lock:
            if self._attach_budget is None:
                return
            if self._attach_budget <= 0:
                raise LedgerUnavailable("injected fault: attach refused")
            self._attach_budget -= 1

    def attach(self, index: bytes, payload: bytes) -> bytes:
        index = check_index(index)
        payload = bytes(payload)
        if not payload:
            raise ValueError("payload must be non-empty")
        if len(payload) > self.max_payload:
            raise PayloadTooLarge(f"payload is {len(payload)} bytes, cap is {self.max_payload}")
        self._check_attach_fault()

        self.latency.delay_attach()
        record = self.records.append(index, payload)
        logger.debug(f"Attached seq={record.sequence} under {index.hex()[:16]}...")
        return record.message_id

    def fetch_by_index(self, index: bytes) -> List[LedgerRecord]:
        index = check_index(index)
        with self._fault_lock:
            if self._fail_fetch:
                raise LedgerUnavailable("injected fault: fetch refused")
        self.latency.delay_fetch()
        return self.records.fetch(index)

    def configure_latency(self, profile: LatencyProfile) -> bool:
        self.latency.configure(profile)
        logger.info(f"Simulated ledger latency set to {profile}")
        return True


class HttpLedgerClient(LedgerClient):
    """Ledger client for the gateway's /api/v1 indexation API"""

    def __init__(self, base_url: str, timeout: float = DEFAULT_TIMEOUT, retries: int = 0,
                 latency: Optional[LatencyProfile] = None):
        self.base_url = base_url.rstrip('/')
        self.timeout = timeout
        self.latency = LatencyInjector(latency)
        self.session = requests.Session()
        if retries > 0:
            retry = Retry(
                total=retries,
                backoff_factor=0.2,
                status_forcelist=(500, 502, 503, 504),
                allowed_methods=frozenset({'GET', 'POST'}),
                raise_on_status=False,
            )
            adapter = HTTPAdapter(max_retries=retry)
            self.session.mount('http://', adapter)
            self.session.mount('https://', adapter)

    def _request(self, method: str, path: str, **kwargs) -> requests.Response:
        url = f"{self.base_url}{API_PREFIX}{path}"
        try:
            response = self.session.request(method, url, timeout=self.timeout, **kwargs)
        except requests.RequestException as e:
            logger.error(f"Ledger request {method} {path} failed: {e}")
            raise LedgerUnavailable(f"cannot reach ledger at {self.base_url}: {e}") from e
        if response.status_code >= 500:
            raise LedgerUnavailable(f"ledger error {response.status_code}: {self._error_text(response)}")
        return response

    @staticmethod
    def _error_text(response: requests.Response) -> str:
        try:
            return response.json().get('error', response.text)
        except ValueError:
            return response.text

    def attach(self, index: bytes, payload: bytes) -> bytes:
        index = check_index(index)
        payload = bytes(payload)
        if not payload:
            raise ValueError("payload must be non-empty")
        if len(payload) > MAX_PAYLOAD_SIZE:
            raise PayloadTooLarge(f"payload is {len(payload)} bytes, cap is {MAX_PAYLOAD_SIZE}")

        self.latency.delay_attach()
        response = self._request('POST', '/messages', json={
            'index': index.hex(),
            'data': base64.b64encode(payload).decode('ascii'),
        })
        if response.status_code == 413:
            raise PayloadTooLarge(self._error_text(response))
        if response.status_code != 201:
            raise OttError(f"attach rejected ({response.status_code}): {self._error_text(response)}")
        return bytes.fromhex(response.json()['messageId'])

    def fetch_by_index(self, index: bytes) -> List[LedgerRecord]:
        index = check_index(index)
        self.latency.delay_fetch()
        response = self._request('GET', '/messages', params={'index': index.hex()})
        if response.status_code != 200:
            raise OttError(f"fetch rejected ({response.status_code}): {self._error_text(response)}")

        records = []
        for message_id in response.json().get('messageIds', []):
            records.append(self.get_message(message_id))
        return records

    def get_message(self, message_id_hex: str) -> LedgerRecord:
        response = self._request('GET', f"/messages/{message_id_hex}")
        if response.status_code != 200:
            raise OttError(f"message {message_id_hex} unavailable ({response.status_code})")
        body = response.json()
        return LedgerRecord(
            message_id=bytes.fromhex(message_id_hex),
            index=bytes.fromhex(body['index']),
            payload=base64.b64decode(body['data']),
            attached_at=int(body['attachedAt']),
            sequence=int(body['seq']),
        )

    def health(self) -> Dict:
        response = self._request('GET', '/health')
        return response.json()

    def configure_latency(self, profile: LatencyProfile) -> bool:
        self.latency.configure(profile)
        logger.info(f"Client-side latency for {self.base_url} set to {profile}")
        return True

    def close(self) -> None:
        self.session.close()
