#!/usr/bin/env python3
"""
OTT DID Method - Command Line Interface
Create, resolve, revoke and update did:ott identifiers, benchmark the method
functions, and run the gateway node.

stdout carries data only; diagnostics and logs go to stderr. Exit codes:
0 ok, 1 failure, 2 usage, 3 ledger/gateway, 4 keyring exists,
5 DID not found, 6 DID invalid, 7 partial update.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from ott_config import CliConfig, OUTPUT_FORMATS, configure_logging
from ott_errors import (
    EXIT_INVALID,
    EXIT_KEYRING_EXISTS,
    EXIT_NOT_FOUND,
    EXIT_OK,
    EXIT_USAGE,
    KeyringExists,
    OttError,
    PartialUpdateError,
    exit_code_for,
)
from ott_ledger import HttpLedgerClient, LedgerClient, parse_latency
from ott_method import (
    DEFAULT_KEY_TYPE,
    KNOWN_KEY_TYPES,
    ResolutionStatus,
    check_keyring_destination,
    create,
    load_keyring,
    resolve,
    revoke,
    save_keyring,
    update,
)

logger = logging.getLogger(__name__)


# ANSI color codes for terminal output
class Colors:
    HEADER = '\033[95m'
    CYAN = '\033[96m'
    GREEN = '\033[92m'
    WARNING = '\033[93m'
    FAIL = '\033[91m'
    ENDC = '\033[0m'
    BOLD = '\033[1m'


def _paint(text: str, color: str) -> str:
    if sys.stderr.isatty():
        return f"{color}{text}{Colors.ENDC}"
    return text


def _diag(text: str, color: str = '') -> None:
    print(_paint(text, color) if color else text, file=sys.stderr)


def _emit(args: argparse.Namespace, payload: dict, human: str) -> None:
    if args.output == 'json':
        print(json.dumps(payload, sort_keys=False))
    else:
        print(human)


class UsageError(Exception):
    """Bad input detected after argument parsing"""


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _read_key(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise UsageError(f"cannot read key file {path}: {e}") from e


def _load_keyring(path: str):
    if not Path(path).exists():
        raise UsageError(f"keyring not found: {path}")
    return load_keyring(path)


def cmd_create(args: argparse.Namespace, config: CliConfig, ledger: LedgerClient) -> int:
    keyring_path = Path(config.keyring_path)
    if keyring_path.exists() and not args.force:
        raise KeyringExists(f"keyring already exists: {keyring_path} (use --force to replace it)")
    # Seeds live only in memory until saved; fail before attaching
    check_keyring_destination(keyring_path, overwrite=args.force)

    key_bytes = _read_key(args.key)
    keyring = create(key_bytes, args.key_type, ledger)
    save_keyring(keyring, keyring_path, overwrite=args.force)
    _diag(f"✓ Created {keyring.did}; keyring saved to {keyring_path}", Colors.GREEN)
    _emit(args, {'did': keyring.did.uri, 'keyring': str(keyring_path)}, keyring.did.uri)
    return EXIT_OK


def cmd_resolve(args: argparse.Namespace, config: CliConfig, ledger: LedgerClient) -> int:
    result = resolve(args.did, ledger)
    payload = result.to_dict()
    if args.output == 'json':
        print(json.dumps(payload))
    else:
        print(f"status: {result.status.value}")
        if result.document is not None:
            print(json.dumps(result.document_dict(), indent=2, ensure_ascii=False))

    if result.status is ResolutionStatus.NOT_FOUND:
        _diag(f"✗ {args.did} not found", Colors.FAIL)
        return EXIT_NOT_FOUND
    if result.status is ResolutionStatus.INVALID:
        _diag(f"✗ {args.did} has no valid create message", Colors.FAIL)
        return EXIT_INVALID
    return EXIT_OK


def cmd_revoke(args: argparse.Namespace, config: CliConfig, ledger: LedgerClient) -> int:
    keyring = _load_keyring(config.keyring_path)
    revoke(keyring, ledger, precheck=args.check)
    _diag(f"✓ Revoked {keyring.did}", Colors.GREEN)
    _emit(args, {'did': keyring.did.uri, 'status': ResolutionStatus.REVOKED.value}, keyring.did.uri)
    return EXIT_OK


def cmd_update(args: argparse.Namespace, config: CliConfig, ledger: LedgerClient) -> int:
    keyring = _load_keyring(config.keyring_path)
    key_bytes = _read_key(args.key)
    check_keyring_destination(config.keyring_path, overwrite=True)
    try:
        new_keyring = update(keyring, key_bytes, args.key_type, ledger)
    except PartialUpdateError:
        _diag(
            f"⚠ {keyring.did} is now revoked but no replacement DID was created. "
            f"The keyring at {config.keyring_path} still holds the revoked DID; "
            f"run 'ott create --key {args.key} --keyring <new path>' to issue a new one.",
            Colors.WARNING,
        )
        raise

    save_keyring(new_keyring, config.keyring_path, overwrite=True)
    _diag(f"✓ Updated {keyring.did} -> {new_keyring.did}", Colors.GREEN)
    _emit(args, {
        'oldDid': keyring.did.uri,
        'did': new_keyring.did.uri,
        'keyring': str(config.keyring_path),
    }, new_keyring.did.uri)
    return EXIT_OK


def cmd_bench(args: argparse.Namespace, config: CliConfig, ledger: LedgerClient) -> int:
    import ott_bench

    out = Path(args.out or f"bench_{args.op}.csv")
    if args.compare:
        series = {}
        summaries = []
        for name, runs in ott_bench.compare_profiles(args.op, args.n, seed=args.seed).items():
            csv_path, cdf_path = ott_bench.write_results(runs, out.with_name(f"{out.stem}.{name}{out.suffix}"))
            summary = ott_bench.summarize(runs, f"{args.op}[{name}]")
            summaries.append({**summary.to_dict(), 'profile': name, 'csv': str(csv_path), 'cdf': str(cdf_path)})
            series[name] = runs
            if args.output != 'json':
                print(summary.line())
    else:
        profile = parse_latency(args.latency, seed=args.seed)
        runs = ott_bench.run_benchmark(args.op, args.n, profile, parallel=args.parallel)
        csv_path, cdf_path = ott_bench.write_results(runs, out)
        summary = ott_bench.summarize(runs, args.op)
        summaries = [{**summary.to_dict(), 'profile': str(profile), 'csv': str(csv_path), 'cdf': str(cdf_path)}]
        series = {str(profile): runs}
        if args.output != 'json':
            print(summary.line())

    if args.plot:
        ott_bench.plot_cdfs(series, args.plot, title=f"OTT {args.op}")
    if args.output == 'json':
        print(json.dumps({'op': args.op, 'results': summaries}))
    return EXIT_OK


def cmd_node(args: argparse.Namespace, config: CliConfig, ledger: LedgerClient) -> int:
    from ott_gateway import GatewayConfig, run_gateway

    gateway_config = GatewayConfig(
        listen_address=args.listen or config.gateway_listen,
        store_path=args.store or config.gateway_store,
        latency=parse_latency(args.latency, seed=args.seed),
    )
    return run_gateway(gateway_config)


COMMANDS = {
    'create': cmd_create,
    'resolve': cmd_resolve,
    'revoke': cmd_revoke,
    'update': cmd_update,
    'bench': cmd_bench,
    'node': cmd_node,
}
LEDGER_COMMANDS = ('create', 'resolve', 'revoke', 'update')


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--node', help='Gateway URL (OTT_NODE_URL takes precedence)')
    common.add_argument('--output', choices=OUTPUT_FORMATS, help='Output format (default human)')
    common.add_argument('--timeout', type=float, help='HTTP request timeout in seconds')
    common.add_argument('--retries', type=int, help='HTTP retries on connection errors / 5xx')
    common.add_argument('--verbose', action='store_true', help='Verbose logging')

    key_types = ', '.join(KNOWN_KEY_TYPES)
    parser = argparse.ArgumentParser(
        prog='ott',
        description="OTT DID method - Command Line Interface",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Run a local gateway
  ott node --listen 127.0.0.1:14265 --store ott_gateway.jsonl

  # DID lifecycle
  ott create --key id_pub.pem --keyring alice.json
  ott resolve did:ott:<64 hex>
  ott update --keyring alice.json --key new_pub.pem
  ott revoke --keyring alice.json

  # Execution-time CDF under the private/public gateway presets
  ott bench --op resolve --n 1000 --compare --plot resolve_cdf.png
        """,
    )
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('create', parents=[common], help='Create a new DID')
    p.add_argument('--key', required=True, help='Identity public key (PEM, DER or raw Ed25519)')
    p.add_argument('--key-type', default=DEFAULT_KEY_TYPE, help=f'Verification method type ({key_types})')
    p.add_argument('--keyring', help='Keyring file to write')
    p.add_argument('--force', action='store_true', help='Replace an existing keyring file')

    p = sub.add_parser('resolve', parents=[common], help='Resolve a DID')
    p.add_argument('did', help='did:ott:<64 hex>')

    p = sub.add_parser('revoke', parents=[common], help='Revoke the DID held in a keyring')
    p.add_argument('--keyring', help='Keyring file')
    p.add_argument('--check', action='store_true', help='Refuse if the DID is already revoked')

    p = sub.add_parser('update', parents=[common], help='Revoke the DID and create a replacement')
    p.add_argument('--keyring', help='Keyring file (rewritten with the new DID)')
    p.add_argument('--key', required=True, help='Identity public key for the new DID')
    p.add_argument('--key-type', default=DEFAULT_KEY_TYPE, help=f'Verification method type ({key_types})')

    p = sub.add_parser('bench', parents=[common], help='Benchmark a method function on the simulated ledger')
    p.add_argument('--op', required=True, choices=('create', 'resolve', 'update', 'revoke'))
    p.add_argument('--n', type=_positive_int, default=100, help='Number of runs')
    p.add_argument('--latency', default='fixed:0',
                   help="fixed:<ms> | uniform:<lo>:<hi> | lognormal:<mu>:<sigma> | "
                        "attach=<delay>,fetch=<delay> | private | public")
    p.add_argument('--seed', type=int, help='Seed for latency sampling')
    p.add_argument('--out', help='Per-run CSV (CDF goes to <stem>.cdf.csv)')
    p.add_argument('--parallel', type=_positive_int, default=1, help='Concurrent runs')
    p.add_argument('--compare', action='store_true', help='Run under both the private and public presets')
    p.add_argument('--plot', help='Write the CDF figure to this PNG')

    p = sub.add_parser('node', parents=[common], help='Run the gateway node')
    p.add_argument('--listen', help='host:port (default 127.0.0.1:14265)')
    p.add_argument('--store', help='Append-only log path (overrides OTT_GATEWAY_STORE)')
    p.add_argument('--latency', default='fixed:0', help='Server-side latency profile')
    p.add_argument('--seed', type=int, help='Seed for latency sampling')

    return parser


def _resolve_config(args: argparse.Namespace) -> CliConfig:
    config = CliConfig.from_env()
    node_url = config.node_url if 'OTT_NODE_URL' in os.environ else args.node
    config = config.with_overrides(
        node_url=node_url,
        keyring_path=getattr(args, 'keyring', None),
        output_format=args.output,
        request_timeout=args.timeout,
        retries=args.retries,
        log_level='DEBUG' if args.verbose else None,
    )
    config.validate()
    return config


def main(argv: Optional[Sequence[str]] = None, ledger: Optional[LedgerClient] = None) -> int:
    """Entry point; `ledger` replaces the HTTP client (used by tests)"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        config = _resolve_config(args)
    except ValueError as e:
        _diag(f"✗ Configuration error: {e}", Colors.FAIL)
        return EXIT_USAGE
    args.output = config.output_format
    configure_logging(config.log_level)

    client = ledger
    if client is None and args.command in LEDGER_COMMANDS:
        client = HttpLedgerClient(config.node_url, timeout=config.request_timeout, retries=config.retries)

    try:
        return COMMANDS[args.command](args, config, client)
    except UsageError as e:
        _diag(f"✗ {e}", Colors.FAIL)
        return EXIT_USAGE
    except OttError as e:
        code = exit_code_for(e)
        if code != EXIT_KEYRING_EXISTS:
            logger.error(f"{args.command} failed: {e}")
        _diag(f"✗ {e}", Colors.FAIL)
        return code
    except ValueError as e:
        _diag(f"✗ {e}", Colors.FAIL)
        return EXIT_USAGE
    finally:
        if ledger is None and isinstance(client, HttpLedgerClient):
            client.close()


if __name__ == "__main__":
    sys.exit(main())
