"""
OTT Gateway Module
Private gateway node serving the indexation API over HTTP:
- POST /api/v1/messages              attach
- GET  /api/v1/messages?index=<hex>  message ids under an index
- GET  /api/v1/messages/<id>         one record
- GET  /api/v1/health                liveness + record count

Records are persisted to an append-only JSON-lines log (write-ahead: the line
is fsync'd before the 201 goes out) and replayed on startup. One gateway per
store, enforced by a PID lock file next to the log.

No authentication. Meant for a trusted LAN or localhost only.
"""

import base64
import binascii
import json
import logging
import os
import re
import signal
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Union

import crc32c
import psutil
from flask import Flask, jsonify, request
from werkzeug.exceptions import HTTPException
from werkzeug.serving import make_server

from ott_config import DEFAULT_GATEWAY_LISTEN, DEFAULT_GATEWAY_STORE, parse_listen_address
from ott_errors import BindError, StoreCorrupt, StoreLocked
from ott_ledger import (
    API_PREFIX,
    MAX_PAYLOAD_SIZE,
    LatencyInjector,
    LatencyProfile,
    LedgerRecord,
    RecordIndex,
    check_index,
    message_id_for,
)
from ott_message import MAX_CREATE_LENGTH

logger = logging.getLogger(__name__)

HEX64 = re.compile(r"[0-9a-f]{64}")
LOG_FIELDS = ('seq', 'message_id_hex', 'index_hex', 'payload_base64', 'attached_at_ms')

# Lock files held by this process, so a second gateway in the same process
# is refused even though the PID in the file is alive.
_held_locks = set()
_held_locks_guard = threading.Lock()


@dataclass
class GatewayConfig:
    listen_address: str = DEFAULT_GATEWAY_LISTEN
    store_path: Union[str, Path] = DEFAULT_GATEWAY_STORE
    latency: LatencyProfile = field(default_factory=LatencyProfile.zero)
    max_payload: int = MAX_PAYLOAD_SIZE

    def __post_init__(self):
        if self.max_payload < MAX_CREATE_LENGTH:
            raise ValueError(
                f"max_payload {self.max_payload} cannot hold the largest create message ({MAX_CREATE_LENGTH})"
            )
        self.store_path = Path(self.store_path)
        self.host, self.port = parse_listen_address(self.listen_address)


# ---------------------------------------------------------------------------
# Append-only record store
# ---------------------------------------------------------------------------

def _line_checksum(body: Dict) -> str:
    compact = json.dumps(body, separators=(',', ':')).encode('utf-8')
    return f"{crc32c.crc32c(compact):08x}"


def encode_log_line(record: LedgerRecord) -> bytes:
    body = {
        'seq': record.sequence,
        'message_id_hex': record.message_id.hex(),
        'index_hex': record.index.hex(),
        'payload_base64': base64.b64encode(record.payload).decode('ascii'),
        'attached_at_ms': record.attached_at,
    }
    body['crc32c_hex'] = _line_checksum(body)
    return json.dumps(body, separators=(',', ':')).encode('utf-8') + b"\n"


def decode_log_line(line: bytes, line_number: int) -> LedgerRecord:
    try:
        obj = json.loads(line)
        body = {key: obj[key] for key in LOG_FIELDS}
        stored_crc = obj['crc32c_hex']
    except (ValueError, KeyError, TypeError) as e:
        raise StoreCorrupt(line_number, f"undecodable record: {e}") from e

    if _line_checksum(body) != stored_crc:
        raise StoreCorrupt(line_number, "checksum mismatch")

    try:
        record = LedgerRecord(
            message_id=bytes.fromhex(body['message_id_hex']),
            index=check_index(bytes.fromhex(body['index_hex'])),
            payload=base64.b64decode(body['payload_base64'], validate=True),
            attached_at=int(body['attached_at_ms']),
            sequence=int(body['seq']),
        )
    except (ValueError, TypeError, binascii.Error) as e:
        raise StoreCorrupt(line_number, f"bad field: {e}") from e

    if record.message_id != message_id_for(record.index, record.payload, record.sequence):
        raise StoreCorrupt(line_number, "message id does not match record contents")
    return record


class RecordStore:
    """RecordIndex backed by a fsync'd JSON-lines log"""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.lock_path = self.path.with_name(self.path.name + ".lock")
        self.records = RecordIndex()
        self._file = None
        self._failed = False

    def __len__(self) -> int:
        return len(self.records)

    @property
    def is_open(self) -> bool:
        return self._file is not None

    def open(self) -> "RecordStore":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._acquire_lock()
        try:
            self._replay()
            self._file = open(self.path, 'ab')
            self._failed = False
        except BaseException:
            self._release_lock()
            raise
        logger.info(f"Record store {self.path} open with {len(self.records)} record(s)")
        return self

    def close(self) -> None:
        if self._file is not None:
            with self.records.lock:
                self._file.flush()
                os.fsync(self._file.fileno())
                self._file.close()
                self._file = None
            self._release_lock()
            logger.info(f"Record store {self.path} closed")

    def __enter__(self):
        return self.open()

    def __exit__(self, exc_type, exc, tb):
        self.close()

    # -- lock ---------------------------------------------------------------

    def _lock_owner(self) -> Optional[int]:
        try:
            return int(self.lock_path.read_text().strip())
        except (OSError, ValueError):
            return None

    @staticmethod
    def _pid_alive(pid: int) -> bool:
        if not psutil.pid_exists(pid):
            return False
        try:
            return psutil.Process(pid).status() != psutil.STATUS_ZOMBIE
        except psutil.Error:
            return False

    def _acquire_lock(self) -> None:
        key = str(self.lock_path.resolve())
        with _held_locks_guard:
            if key in _held_locks:
                raise StoreLocked(f"{self.path} is already open in this process")

            try:
                fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o644)
            except FileExistsError:
                owner = self._lock_owner()
                if owner is not None and owner != os.getpid() and self._pid_alive(owner):
                    raise StoreLocked(f"{self.path} is locked by running process {owner}")
                logger.warning(f"Reclaiming stale lock {self.lock_path} (owner {owner})")
                self.lock_path.unlink(missing_ok=True)
                try:
                    fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o644)
                except FileExistsError as e:
                    raise StoreLocked(f"{self.path} was locked concurrently") from e

            with os.fdopen(fd, 'w') as f:
                f.write(str(os.getpid()))
            _held_locks.add(key)

    def _release_lock(self) -> None:
        key = str(self.lock_path.resolve())
        with _held_locks_guard:
            _held_locks.discard(key)
            if self._lock_owner() == os.getpid():
                self.lock_path.unlink(missing_ok=True)

    # -- log ----------------------------------------------------------------

    def _replay(self) -> None:
        if not self.path.exists():
            self.path.touch()
            return

        raw = self.path.read_bytes()
        complete_end = raw.rfind(b"\n") + 1
        if complete_end < len(raw):
            logger.warning(
                f"Truncating unterminated final line of {self.path} "
                f"({len(raw) - complete_end} byte(s), never acknowledged)"
            )
            with open(self.path, 'r+b') as f:
                f.truncate(complete_end)
                f.flush()
                os.fsync(f.fileno())
            raw = raw[:complete_end]

        with self.records.lock:
            for line_number, line in enumerate(raw.splitlines(), start=1):
                record = decode_log_line(line, line_number)
                try:
                    self.records.publish(record)
                except ValueError as e:
                    raise StoreCorrupt(line_number, str(e)) from e
        logger.info(f"Replayed {len(self.records)} record(s) from {self.path}")

    def append(self, index: bytes, payload: bytes) -> LedgerRecord:
        """Assign the next sequence, persist, then publish; all under the writer lock"""
        with self.records.lock:
            if self._file is None:
                raise OSError(f"record store {self.path} is not open")
            if self._failed:
                raise OSError(f"record store {self.path} refuses writes after an unrecoverable write error")
            record = self.records.next_record(index, payload)
            offset = self._file.tell()
            try:
                self._file.write(encode_log_line(record))
                self._file.flush()
                os.fsync(self._file.fileno())
            except BaseException as e:
                logger.error(f"Append of seq={record.sequence} to {self.path} failed: {e}")
                self._rollback(offset)
                raise
            self.records.publish(record)
        logger.debug(f"Persisted seq={record.sequence} under {index.hex()[:16]}...")
        return record

    def _rollback(self, offset: int) -> None:
        """Cut the log back to offset; caller holds the writer lock"""
        try:
            self._file.truncate(offset)
            self._file.seek(offset)
            self._file.flush()
            os.fsync(self._file.fileno())
        except (OSError, ValueError) as e:
            self._failed = True
            logger.critical(f"Could not roll {self.path} back to byte {offset}: {e}; further appends refused")
            return
        logger.warning(f"Rolled {self.path} back to byte {offset}")


# ---------------------------------------------------------------------------
# HTTP API
# ---------------------------------------------------------------------------

def _error(status: int, message: str):
    return jsonify({'error': message}), status


def create_app(store: RecordStore, latency: Optional[LatencyInjector] = None,
               max_payload: int = MAX_PAYLOAD_SIZE) -> Flask:
    """Flask app exposing the indexation API over an open RecordStore"""
    app = Flask(__name__)
    latency = latency or LatencyInjector()
    # base64 inflates by 4/3; leave room for the JSON envelope
    app.config['MAX_CONTENT_LENGTH'] = (max_payload * 4) // 3 + 4096
    app.config['OTT_STORE'] = store
    app.config['OTT_LATENCY'] = latency

    @app.errorhandler(HTTPException)
    def handle_http_error(e: HTTPException):
        return _error(e.code or 500, e.description or e.name)

    @app.errorhandler(OSError)
    def handle_storage_error(e: OSError):
        logger.error(f"Storage failure: {e}")
        return _error(500, f"storage failure: {e}")

    @app.post(f"{API_PREFIX}/messages")
    def attach_message():
        body = request.get_json(silent=True)
        if not isinstance(body, dict):
            return _error(400, "body must be a JSON object with 'index' and 'data'")
        index_hex = body.get('index')
        data = body.get('data')
        if not isinstance(index_hex, str) or not HEX64.fullmatch(index_hex):
            return _error(400, "index must be 64 lowercase hex characters")
        if not isinstance(data, str):
            return _error(400, "data must be a base64 string")
        try:
            payload = base64.b64decode(data, validate=True)
        except (binascii.Error, ValueError):
            return _error(400, "data is not valid base64")
        if not payload:
            return _error(400, "payload must be non-empty")
        if len(payload) > max_payload:
            return _error(413, f"payload is {len(payload)} bytes, cap is {max_payload}")

        latency.delay_attach()
        record = store.append(bytes.fromhex(index_hex), payload)
        return jsonify({'messageId': record.message_id.hex()}), 201

    @app.get(f"{API_PREFIX}/messages")
    def find_messages():
        index_hex = request.args.get('index', '')
        if not HEX64.fullmatch(index_hex):
            return _error(400, "index must be 64 lowercase hex characters")
        latency.delay_fetch()
        records = store.records.fetch(bytes.fromhex(index_hex))
        return jsonify({'messageIds': [r.message_id.hex() for r in records]})

    @app.get(f"{API_PREFIX}/messages/<message_id>")
    def get_message(message_id: str):
        if not HEX64.fullmatch(message_id):
            return _error(404, "unknown message id")
        record = store.records.get(bytes.fromhex(message_id))
        if record is None:
            return _error(404, "unknown message id")
        return jsonify({
            'index': record.index.hex(),
            'data': base64.b64encode(record.payload).decode('ascii'),
            'attachedAt': record.attached_at,
            'seq': record.sequence,
        })

    @app.get(f"{API_PREFIX}/health")
    def health():
        return jsonify({'status': 'ok', 'records': len(store)})

    return app


# ---------------------------------------------------------------------------
# Service lifecycle
# ---------------------------------------------------------------------------

class GatewayHandle:
    """A running gateway; shutdown() stops serving and closes the log"""

    def __init__(self, server, thread: threading.Thread, store: RecordStore):
        self._server = server
        self._thread = thread
        self.store = store

    @property
    def host(self) -> str:
        return self._server.host

    @property
    def port(self) -> int:
        return self._server.server_port

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    @property
    def record_count(self) -> int:
        return len(self.store)

    @property
    def running(self) -> bool:
        return self._thread.is_alive()

    def shutdown(self) -> None:
        if self._thread.is_alive():
            self._server.shutdown()
            self._thread.join()
        self._server.server_close()
        self.store.close()
        logger.info(f"Gateway on {self.url} stopped")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.shutdown()


def serve(config: GatewayConfig) -> GatewayHandle:
    """Open the store, bind the address and start serving on a background thread"""
    store = RecordStore(config.store_path).open()
    app = create_app(store, LatencyInjector(config.latency), config.max_payload)
    try:
        server = make_server(config.host, config.port, app, threaded=True)
    except (OSError, SystemExit) as e:
        # werkzeug exits instead of raising when the address is taken
        store.close()
        raise BindError(f"cannot bind {config.listen_address}: {e}") from None

    thread = threading.Thread(target=server.serve_forever, name="ott-gateway", daemon=True)
    thread.start()
    handle = GatewayHandle(server, thread, store)
    logger.info(f"✓ Gateway listening on {handle.url} (store {config.store_path}, {len(store)} record(s))")
    return handle


def run_gateway(config: GatewayConfig, ready: Optional[threading.Event] = None,
                stop: Optional[threading.Event] = None) -> int:
    """Serve until SIGINT/SIGTERM (or until `stop` is set), then shut down cleanly"""
    stop = stop or threading.Event()

    def _request_stop(signum, frame):
        logger.info(f"Received signal {signum}, shutting down")
        stop.set()

    # Installed before serving so an early signal still stops cleanly
    previous = {}
    if threading.current_thread() is threading.main_thread():
        for sig in (signal.SIGINT, signal.SIGTERM):
            previous[sig] = signal.signal(sig, _request_stop)

    try:
        handle = serve(config)
        if ready is not None:
            ready.set()
        try:
            while not stop.wait(0.5):
                pass
        finally:
            handle.shutdown()
    finally:
        for sig, handler in previous.items():
            signal.signal(sig, handler)
    return 0
