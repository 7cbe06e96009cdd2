"""
notaria <keys|sim|verify|inspect> [flags]

Exit status: 0 accepted, 1 rejected, 2 malformed input or usage error.
"""
from __future__ import annotations

import argparse
import logging
import secrets
import sys
import typing
from pathlib import Path

from notaria import sim
from notaria.__version__ import __version__
from notaria.config import WorkspaceSettings, load_config
from notaria.crypto import KEY_SIZE, keygen
from notaria.exceptions import (
    InvalidConfig,
    MalformedEncoding,
    NotariaError,
    SerializerNotFound,
)
from notaria.ledger import MockLedger
from notaria.model import (
    AuxReceipt,
    Block,
    BlockHeader,
    FirstReceipt,
    PubData,
    Receipt,
    Transaction,
    Value,
    as_json,
    from_json,
    verify_seal,
)
from notaria.nodes import ChainLog
from notaria.registry import Registry, Role
from notaria.serializers import JSONSerializer, get_serializer
from notaria.verify import (
    TrustAssumptions,
    Verdict,
    verify_level1,
    verify_level2,
    verify_level3,
)
from notaria.workspace import Workspace

__all__ = ["main", "build_parser"]

logger = logging.getLogger(__name__)

EXIT_ACCEPTED = 0
EXIT_REJECTED = 1
EXIT_MALFORMED = 2

_JSON = JSONSerializer()


class UsageError(NotariaError):
    """
    Bad command-line input that argparse cannot catch by itself
    """


def _emit(document: typing.Any) -> None:
    sys.stdout.write(_JSON.encode(document).decode("utf8") + "\n")


def _hex_identity(value: str) -> bytes:
    text = value[2:] if value.lower().startswith("0x") else value
    try:
        return bytes.fromhex(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{value!r} is not hex") from None


def _read_message(path: typing.Union[str, Path], cls: typing.Type[Value]) -> Value:
    """
    Binary messages are decoded as they are; `.json` files are mirrors
    whose `encoded` field carries the canonical bytes.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exception:
        raise MalformedEncoding(f"cannot read {path}: {exception.strerror}") from exception
    if path.suffix == ".json":
        try:
            document = _JSON.decode(data)
        except ValueError as exception:
            raise MalformedEncoding(f"{path} is not JSON") from exception
        return from_json(document, cls)
    return cls.decode(data)


def _workspace(args: argparse.Namespace) -> Workspace:
    return Workspace.from_settings(WorkspaceSettings.resolve(args.workspace))


def _trusted_ca(args: argparse.Namespace) -> typing.Optional[bytes]:
    if args.trust_ca is not None:
        return args.trust_ca
    return _workspace(args).pinned_ca()


def _load_registry(args: argparse.Namespace, ca_identity: bytes) -> Registry:
    """
    The registry is only as good as the CA that signed it, so a pinned CA
    identity is required.
    """
    path = Path(args.registry) if args.registry else _workspace(args).registry_path
    try:
        return Registry.load(path, ca_identity)
    except OSError as exception:
        raise MalformedEncoding(f"cannot read registry {path}") from exception


def _load_ledger(args: argparse.Namespace) -> MockLedger:
    path = Path(args.ledger) if args.ledger else _workspace(args).ledger_path
    try:
        return MockLedger.load(path)
    except OSError as exception:
        raise MalformedEncoding(f"cannot read ledger {path}") from exception


# keys


def cmd_keys_gen(args: argparse.Namespace) -> int:
    workspace = _workspace(args)
    if args.seed is not None:
        seed = _hex_identity(args.seed)
        if len(seed) != KEY_SIZE:
            raise UsageError(f"--seed must be {KEY_SIZE} bytes of hex")
    else:
        seed = secrets.token_bytes(KEY_SIZE)
    ca = workspace.ensure_ca()
    registry = workspace.load_registry()
    keys = keygen(seed)
    entry = registry.register(keys, Role[args.role.upper()])
    workspace.save_key(keys)
    workspace.save_registry(registry, ca)
    _emit({"identity": entry.identity.hex(), "role": entry.role.name.lower()})
    return EXIT_ACCEPTED


def cmd_keys_list(args: argparse.Namespace) -> int:
    registry = _workspace(args).load_registry()
    entries = [
        {"identity": entry.identity.hex(), "role": entry.role.name.lower()}
        for entry in registry
    ]
    if args.json:
        _emit(entries)
    else:
        for entry in entries:
            print(f"{entry['identity']}  {entry['role']}")
    return EXIT_ACCEPTED


# sim


def cmd_sim(args: argparse.Namespace) -> int:
    file_values = None
    if args.config is not None:
        try:
            file_values = _JSON.decode(Path(args.config).read_bytes())
        except (OSError, ValueError) as exception:
            raise InvalidConfig(f"cannot read config file {args.config}") from exception
    config = load_config(
        file_values,
        scenario=args.scenario,
        seed=args.seed,
        num_clients=args.clients,
        num_nodes=args.nodes,
        txs_per_client=args.txs,
        m=args.m,
        block_interval_ms=args.block_interval,
        public_block_interval_ms=args.public_interval,
        drop_rate=args.drop_rate,
        rewrite_block=args.rewrite_block,
        rewrite_frequency=args.rewrite_frequency,
        forgery_attempts=args.forgery_attempts,
    )
    serializer = get_serializer(args.format)
    report = sim.run(config, trace=args.trace)
    summary = {
        "scenario": report.scenario,
        "seed": report.seed,
        "outcome": report.outcome.value if report.outcome is not None else None,
        "all_accepted": report.all_accepted(),
        "anomalies": dict(report.anomaly_kinds()),
    }
    if not args.no_export:
        written = _workspace(args).export(report, serializer)
        summary["report"] = str(written["report"])
    _emit(summary)
    return EXIT_ACCEPTED


# verify


def _bundle_files(args: argparse.Namespace) -> typing.Dict[str, Path]:
    files: typing.Dict[str, Path] = {}
    if args.bundle is not None:
        bundle = Path(args.bundle)
        manifest = _workspace(args).read_manifest(bundle)
        entries = [entry for entry in manifest["evidence"] if entry["index"] == args.index]
        if not entries:
            raise UsageError(f"bundle {bundle} has no evidence {args.index}")
        files.update({name: bundle / file for name, file in entries[0]["files"].items()})
    for name in ("tx", "first_receipt", "receipt", "header", "aux_receipt", "data"):
        explicit = getattr(args, name)
        if explicit is not None:
            files[name] = Path(explicit)
    return files


def _require(files: typing.Mapping[str, Path], *names: str) -> None:
    missing = [name for name in names if name not in files]
    if missing:
        flags = ", ".join("--" + name.replace("_", "-") for name in missing)
        raise UsageError(f"level needs {flags}")


def cmd_verify(args: argparse.Namespace) -> int:
    files = _bundle_files(args)
    data = None
    if "data" in files and not args.no_data:
        try:
            data = files["data"].read_bytes()
        except OSError as exception:
            raise MalformedEncoding(f"cannot read {files['data']}") from exception
    ca_identity = _trusted_ca(args)
    if ca_identity is None:
        raise UsageError("no trusted CA, pass --trust-ca or use a workspace that pins one")
    assumptions = TrustAssumptions(
        registry=_load_registry(args, ca_identity),
        trusted_validators=frozenset(args.trust_validator or ()),
        trust_proxy_consensus=args.trust_consensus,
        trusted_anchorer=args.trust_anchorer,
    )
    verdict: Verdict
    if args.level == 1:
        _require(files, "tx", "first_receipt")
        verdict = verify_level1(
            _read_message(files["tx"], Transaction),
            _read_message(files["first_receipt"], FirstReceipt),
            assumptions,
            data=data,
        )
    elif args.level == 2:
        _require(files, "receipt", "header")
        verdict = verify_level2(
            _read_message(files["receipt"], Receipt),
            _read_message(files["header"], BlockHeader),
            assumptions,
            data=data,
        )
    else:
        _require(files, "receipt", "aux_receipt")
        header = _read_message(files["header"], BlockHeader) if "header" in files else None
        verdict = verify_level3(
            _read_message(files["receipt"], Receipt),
            _read_message(files["aux_receipt"], AuxReceipt),
            _load_ledger(args),
            assumptions,
            header=header,
            data=data,
        )
    _emit(verdict.to_dict())
    return EXIT_ACCEPTED if verdict.accepted else EXIT_REJECTED


# inspect


def _block_summary(block: Block, node_view: bool) -> typing.Dict[str, typing.Any]:
    header = block.header
    document: typing.Dict[str, typing.Any] = {
        "index": header.index,
        "created_at": header.created_at,
        "committer": header.committer.hex(),
        "block_root": header.block_root.hex(),
        "digest": header.digest.hex(),
        "summaries": [summary.client_root.hex() for summary in block.summaries],
    }
    if node_view:
        document["phantom"] = [
            [as_json(tx)["fields"] for tx in group] for group in block.phantom
        ]
    else:
        document["phantom"] = f"redacted ({len(block.summaries)} clients)"
    return document


def cmd_inspect_chain(args: argparse.Namespace) -> int:
    if not Path(args.path).exists():
        raise MalformedEncoding(f"no chain at {args.path}")
    blocks = ChainLog(args.path).read()
    summaries = [_block_summary(block, args.node_view) for block in blocks]
    if args.json:
        _emit(
            {
                "blocks": [
                    as_json(block if args.node_view else block.public_view())
                    for block in blocks
                ]
            }
        )
    else:
        for summary in summaries:
            print(
                f"block {summary['index']} at {summary['created_at']}"
                f" by {summary['committer'][:16]}"
                f" root {summary['block_root'][:16]}"
                f" clients {len(summary['summaries'])}"
                f" phantom {summary['phantom']}"
            )
    return EXIT_ACCEPTED


def cmd_inspect_ledger(args: argparse.Namespace) -> int:
    try:
        ledger = MockLedger.load(args.path)
    except OSError as exception:
        raise MalformedEncoding(f"cannot read ledger {args.path}") from exception
    records = []
    for address, payload, timestamp in ledger.records():
        record: typing.Dict[str, typing.Any] = {
            "address": {
                "block_height": address.block_height,
                "tx_index": address.tx_index,
            },
            "time": timestamp,
        }
        try:
            record["pub_data"] = as_json(PubData.decode(payload))["fields"]
        except MalformedEncoding:
            record["payload"] = payload.hex()
        records.append(record)
    if args.json:
        _emit({"records": records})
    else:
        for record in records:
            address = record["address"]
            line = f"{address['block_height']}:{address['tx_index']} at {record['time']}"
            if "pub_data" in record:
                pub_data = record["pub_data"]
                line += (
                    f" anchorer {pub_data['anchorer'][:16]}"
                    f" after block {pub_data['last_anchor_index']}"
                    f" epoch {pub_data['epoch_length']}"
                    f" root {pub_data['aux_root'][:16]}"
                )
            print(line)
    return EXIT_ACCEPTED


def _tx_status(tx: Transaction, registry: typing.Optional[Registry]) -> str:
    if registry is None:
        return "unchecked"
    key = registry.key_for(tx.client, Role.CLIENT)
    if key is None:
        return "unknown client"
    return "valid" if verify_seal(tx, key) else "invalid"


def cmd_inspect_receipt(args: argparse.Namespace) -> int:
    receipt = _read_message(args.path, Receipt)
    registry: typing.Optional[Registry] = None
    ca_identity = _trusted_ca(args)
    if ca_identity is None:
        logger.warning("no trusted CA, signatures left unchecked")
    else:
        try:
            registry = _load_registry(args, ca_identity)
        except MalformedEncoding:
            logger.warning("no registry available, signatures left unchecked")
    committer = "unchecked"
    if registry is not None:
        key = registry.key_for(receipt.committer, Role.NODE)
        committer = "valid" if key is not None and verify_seal(receipt, key) else "invalid"
    transactions = [
        {
            "client": tx.client.hex(),
            "claimed_time": tx.claimed_time,
            "digest": tx.digest.hex(),
            "signature": _tx_status(tx, registry),
        }
        for tx in receipt.transactions
    ]
    if args.json:
        _emit(
            {
                "committer": receipt.committer.hex(),
                "committer_signature": committer,
                "client_root": receipt.client_root.hex(),
                "path_length": len(receipt.path),
                "transactions": transactions,
            }
        )
    else:
        print(f"receipt by {receipt.committer.hex()[:16]} ({committer})")
        for tx in transactions:
            print(f"  {tx['digest'][:16]} at {tx['claimed_time']}: {tx['signature']}")
    return EXIT_ACCEPTED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="notaria", description="Incremental-trust notarization toolkit"
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "--workspace", help="workspace directory (default $NOTARIA_WORKSPACE)"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    keys = commands.add_parser("keys", help="manage identities in the registry")
    keys_commands = keys.add_subparsers(dest="keys_command", required=True)
    gen = keys_commands.add_parser("gen", help="generate and register a key pair")
    gen.add_argument("--role", choices=[role.name.lower() for role in Role], required=True)
    gen.add_argument("--seed", help="32-byte hex seed for deterministic keys")
    gen.set_defaults(handler=cmd_keys_gen)
    listing = keys_commands.add_parser("list", help="list registered identities")
    listing.add_argument("--json", action="store_true")
    listing.set_defaults(handler=cmd_keys_list)

    run = commands.add_parser("sim", help="run a simulated scenario")
    run.add_argument("--scenario", help=f"one of {', '.join(sim.SCENARIOS.names())}")
    run.add_argument("--config", help="JSON file with SimConfig values")
    run.add_argument("--seed", type=int)
    run.add_argument("--clients", type=int)
    run.add_argument("--nodes", type=int)
    run.add_argument("--txs", type=int, help="transactions per client")
    run.add_argument("--m", type=int, help="proxy blocks per anchoring epoch")
    run.add_argument("--block-interval", type=int, help="milliseconds")
    run.add_argument("--public-interval", type=int, help="milliseconds")
    run.add_argument("--drop-rate", type=float)
    run.add_argument("--rewrite-block", type=int)
    run.add_argument("--rewrite-frequency", type=int)
    run.add_argument("--forgery-attempts", type=int)
    run.add_argument(
        "--format", default="json", help="report encoding: json, msgpack, cbor"
    )
    run.add_argument("--trace", action="store_true", help="also write the event trace")
    run.add_argument("--no-export", action="store_true", help="do not touch the workspace")
    run.set_defaults(handler=cmd_sim)

    verify = commands.add_parser("verify", help="verify evidence offline")
    verify.add_argument("--level", type=int, choices=(1, 2, 3), required=True)
    verify.add_argument("--bundle", help="client bundle directory")
    verify.add_argument(
        "--index", type=int, default=0, help="evidence index in the bundle"
    )
    verify.add_argument("--tx")
    verify.add_argument("--first-receipt")
    verify.add_argument("--receipt")
    verify.add_argument("--header")
    verify.add_argument("--aux-receipt")
    verify.add_argument("--data", help="the document the client claims")
    verify.add_argument(
        "--no-data", action="store_true", help="ignore the bundle's document"
    )
    verify.add_argument("--registry")
    verify.add_argument("--ledger")
    verify.add_argument(
        "--trust-validator", type=_hex_identity, action="append", metavar="IDENTITY"
    )
    verify.add_argument("--trust-consensus", action="store_true")
    verify.add_argument("--trust-anchorer", type=_hex_identity, metavar="IDENTITY")
    verify.add_argument(
        "--trust-ca",
        type=_hex_identity,
        metavar="IDENTITY",
        help="CA whose registry signature is accepted (default: the workspace pin)",
    )
    verify.set_defaults(handler=cmd_verify)

    inspect = commands.add_parser("inspect", help="dump chains, ledgers and receipts")
    targets = inspect.add_subparsers(dest="target", required=True)
    for name, handler in (
        ("chain", cmd_inspect_chain),
        ("ledger", cmd_inspect_ledger),
        ("receipt", cmd_inspect_receipt),
    ):
        target = targets.add_parser(name)
        target.add_argument("path")
        target.add_argument("--json", action="store_true")
        target.set_defaults(handler=handler)
        if name == "chain":
            target.add_argument(
                "--node-view", action="store_true", help="show phantom parts"
            )
        if name == "receipt":
            target.add_argument("--registry")
            target.add_argument("--trust-ca", type=_hex_identity, metavar="IDENTITY")
    return parser


def main(argv: typing.Optional[typing.Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exception:
        return EXIT_MALFORMED if exception.code else EXIT_ACCEPTED
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except (MalformedEncoding, InvalidConfig, SerializerNotFound, UsageError) as exception:
        sys.stderr.write(f"{exception.__class__.__qualname__}: {exception}\n")
        return EXIT_MALFORMED
    except NotariaError as exception:
        sys.stderr.write(f"{exception.__class__.__qualname__}: {exception}\n")
        return EXIT_REJECTED
