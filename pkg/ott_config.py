"""
OTT Configuration Module
Loads CLI/gateway settings from the environment (and a local .env file)
and sets up logging for the entry points
"""

import logging
import os
from dataclasses import dataclass, replace
from typing import Optional, Tuple
from urllib.parse import urlparse

from dotenv import find_dotenv, load_dotenv

DEFAULT_NODE_URL = "http://127.0.0.1:14265"
DEFAULT_KEYRING_PATH = "ott_keyring.json"
DEFAULT_GATEWAY_STORE = "ott_gateway.jsonl"
DEFAULT_GATEWAY_LISTEN = "127.0.0.1:14265"
DEFAULT_REQUEST_TIMEOUT = 30.0
OUTPUT_FORMATS = ("human", "json")

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_DATEFMT = '%Y-%m-%d %H:%M:%S'


@dataclass
class CliConfig:
    """Settings shared by the CLI, the HTTP ledger client and the gateway"""
    node_url: str = DEFAULT_NODE_URL
    keyring_path: str = DEFAULT_KEYRING_PATH
    output_format: str = "human"
    request_timeout: float = DEFAULT_REQUEST_TIMEOUT
    retries: int = 0
    gateway_store: str = DEFAULT_GATEWAY_STORE
    gateway_listen: str = DEFAULT_GATEWAY_LISTEN
    log_level: str = "INFO"

    @classmethod
    def from_env(cls, dotenv_path: Optional[str] = None) -> "CliConfig":
        """Load configuration from environment variables (.env file first, if present)"""
        load_dotenv(dotenv_path=dotenv_path or find_dotenv(usecwd=True), override=False)
        defaults = cls()

        return cls(
            node_url=os.getenv('OTT_NODE_URL', defaults.node_url),
            keyring_path=os.getenv('OTT_KEYRING', defaults.keyring_path),
            output_format=os.getenv('OTT_OUTPUT', defaults.output_format),
            request_timeout=float(os.getenv('OTT_TIMEOUT', defaults.request_timeout)),
            retries=int(os.getenv('OTT_RETRIES', defaults.retries)),
            gateway_store=os.getenv('OTT_GATEWAY_STORE', defaults.gateway_store),
            gateway_listen=os.getenv('OTT_GATEWAY_LISTEN', defaults.gateway_listen),
            log_level=os.getenv('OTT_LOG_LEVEL', defaults.log_level),
        )

    def with_overrides(self, **changes) -> "CliConfig":
        """Copy with the non-None values in changes applied"""
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def validate(self) -> None:
        """Raise ValueError naming the first invalid field"""
        parsed = urlparse(self.node_url)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise ValueError(f"node_url: not an http URL: {self.node_url!r}")
        if self.output_format not in OUTPUT_FORMATS:
            raise ValueError(f"output_format: expected one of {OUTPUT_FORMATS}, got {self.output_format!r}")
        if self.request_timeout <= 0:
            raise ValueError(f"request_timeout: must be positive, got {self.request_timeout}")
        if self.retries < 0:
            raise ValueError(f"retries: must be >= 0, got {self.retries}")
        parse_listen_address(self.gateway_listen)


def parse_listen_address(address: str) -> Tuple[str, int]:
    """Split 'host:port' into its parts; port 0 asks the OS for a free port"""
    host, sep, port_text = address.rpartition(':')
    if not sep or not host or not port_text.isdigit():
        raise ValueError(f"listen address must be host:port, got {address!r}")
    port = int(port_text)
    if port > 65535:
        raise ValueError(f"port out of range: {port}")
    return host.strip('[]'), port


def configure_logging(level: str = "INFO") -> None:
    """Configure root logging for an entry point"""
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format=LOG_FORMAT,
        datefmt=LOG_DATEFMT,
        force=True,
    )
