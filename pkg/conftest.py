"""
Shared pytest fixtures
"""

import json
import socket
from pathlib import Path

import pytest

from ott_crypto import keypair_from_seed, public_key_pem
from ott_gateway import GatewayConfig, serve
from ott_index import derive_index_material
from ott_ledger import HttpLedgerClient, SimulatedTangle

FIXTURES = Path(__file__).parent / "fixtures"
ZERO_SEED = bytes(32)
ONE_SEED = bytes([1]) * 32


@pytest.fixture(scope="session")
def golden():
    return json.loads((FIXTURES / "golden_vectors.json").read_text())


@pytest.fixture(scope="session")
def zero_zero_material():
    return derive_index_material(ZERO_SEED, ZERO_SEED)


@pytest.fixture(scope="session")
def zero_one_material():
    return derive_index_material(ZERO_SEED, ONE_SEED)


@pytest.fixture(scope="session")
def auth_key():
    """Raw Ed25519 identity public key (all-one seed)"""
    return keypair_from_seed(ONE_SEED).public


@pytest.fixture
def auth_pem_file(tmp_path, auth_key):
    path = tmp_path / "id_pub.pem"
    path.write_text(public_key_pem(auth_key))
    return path


@pytest.fixture
def keyring_path(tmp_path):
    return tmp_path / "keyring.json"


@pytest.fixture
def ledger():
    return SimulatedTangle()


@pytest.fixture
def store_path(tmp_path):
    return tmp_path / "gateway.jsonl"


@pytest.fixture
def gateway(store_path):
    handle = serve(GatewayConfig(listen_address="127.0.0.1:0", store_path=store_path))
    yield handle
    handle.shutdown()


@pytest.fixture
def http_ledger(gateway):
    client = HttpLedgerClient(gateway.url, timeout=5)
    yield client
    client.close()


def find_free_port() -> int:
    """Ask the OS for an unused TCP port"""
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        s.bind(('', 0))
        s.listen(1)
        return s.getsockname()[1]
