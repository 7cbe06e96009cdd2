"""
On-disk workspace: registry, keys, node chains, the mock ledger, exported
client bundles and simulator reports. Everything a verifier needs offline
is a plain file in here.
"""
from __future__ import annotations

import logging
import secrets
import typing
from pathlib import Path

from notaria.config import WorkspaceSettings
from notaria.crypto import DIGEST_SIZE, KEY_SIZE, KeyPair, keygen
from notaria.exceptions import MalformedEncoding
from notaria.ledger import MockLedger
from notaria.model import Encodable, as_json
from notaria.nodes import ChainLog
from notaria.registry import Registry
from notaria.serializers import NDJSON, BaseSerializer, JSONSerializer

if typing.TYPE_CHECKING:  # pragma: no cover
    from notaria.sim import SimClient, SimReport

__all__ = ["Workspace", "BUNDLE_MANIFEST"]

logger = logging.getLogger(__name__)

BUNDLE_MANIFEST = "manifest.json"

_JSON = JSONSerializer()


class Workspace:
    def __init__(self, directory: typing.Union[str, Path]) -> None:
        self.directory = Path(directory)

    def __repr__(self) -> str:
        return f"Workspace({str(self.directory)!r})"

    @classmethod
    def from_settings(cls, settings: WorkspaceSettings) -> "Workspace":
        return cls(settings.directory)

    @property
    def registry_path(self) -> Path:
        return self.directory / "registry.bin"

    @property
    def ca_path(self) -> Path:
        return self.directory / "ca.key"

    @property
    def ca_pin_path(self) -> Path:
        return self.directory / "ca.id"

    @property
    def keys_dir(self) -> Path:
        return self.directory / "keys"

    @property
    def nodes_dir(self) -> Path:
        return self.directory / "nodes"

    @property
    def ledger_path(self) -> Path:
        return self.directory / "ledger.bin"

    @property
    def bundles_dir(self) -> Path:
        return self.directory / "bundles"

    @property
    def reports_dir(self) -> Path:
        return self.directory / "reports"

    def init(self) -> None:
        for directory in (
            self.directory,
            self.keys_dir,
            self.nodes_dir,
            self.bundles_dir,
            self.reports_dir,
        ):
            directory.mkdir(parents=True, exist_ok=True)

    # keys and registry

    def _read_seed(self, path: Path) -> KeyPair:
        seed = path.read_bytes()
        if len(seed) != KEY_SIZE:
            raise MalformedEncoding(f"{path} does not hold a {KEY_SIZE}-byte seed")
        return keygen(seed)

    def ensure_ca(self, seed: typing.Optional[bytes] = None) -> KeyPair:
        """
        The workspace's certificate authority, created on first use.
        """
        if self.ca_path.exists():
            ca = self._read_seed(self.ca_path)
        else:
            self.init()
            seed = seed if seed is not None else secrets.token_bytes(KEY_SIZE)
            self.ca_path.write_bytes(seed)
            ca = keygen(seed)
        self.pin_ca(ca.identity)
        return ca

    def pin_ca(self, identity: bytes) -> None:
        self.init()
        self.ca_pin_path.write_text(bytes(identity).hex() + "\n", encoding="ascii")

    def pinned_ca(self) -> typing.Optional[bytes]:
        """
        Identity of the CA whose registry signatures this workspace trusts:
        the `ca.id` pin, else the identity of the CA key held here.
        """
        if self.ca_pin_path.exists():
            try:
                pinned = bytes.fromhex(self.ca_pin_path.read_text(encoding="ascii"))
            except ValueError as exception:
                raise MalformedEncoding(f"{self.ca_pin_path} is not hex") from exception
            if len(pinned) != DIGEST_SIZE:
                raise MalformedEncoding(f"{self.ca_pin_path} does not hold an identity")
            return pinned
        if self.ca_path.exists():
            return self._read_seed(self.ca_path).identity
        return None

    def load_registry(self) -> Registry:
        """
        Read-only: a workspace without a registry yields an empty one and
        no key material is created.
        """
        if not self.registry_path.exists():
            ca_public = None
            if self.ca_path.exists():
                ca_public = self._read_seed(self.ca_path).public_key
            return Registry(ca_public=ca_public)
        return Registry.load(self.registry_path, self.pinned_ca())

    def save_registry(self, registry: Registry, ca: KeyPair) -> Path:
        self.init()
        registry.save(self.registry_path, ca)
        return self.registry_path

    def key_path(self, identity: bytes) -> Path:
        return self.keys_dir / f"{bytes(identity).hex()}.key"

    def save_key(self, keys: KeyPair) -> Path:
        self.init()
        path = self.key_path(keys.identity)
        path.write_bytes(keys.secret_key)
        return path

    def load_key(self, identity: bytes) -> KeyPair:
        return self._read_seed(self.key_path(identity))

    # ledger and chains

    def load_ledger(self) -> MockLedger:
        return MockLedger.load(self.ledger_path)

    def chain_path(self, label: str) -> Path:
        return self.nodes_dir / f"{label}.chain"

    # simulator output

    def report_path(self, report: "SimReport", serializer: BaseSerializer) -> Path:
        return self.reports_dir / f"{report.scenario}-{report.seed}{serializer.suffix}"

    def write_report(
        self, report: "SimReport", serializer: BaseSerializer = _JSON
    ) -> Path:
        self.init()
        path = self.report_path(report, serializer)
        path.write_bytes(report.encode(serializer))
        return path

    def write_trace(self, report: "SimReport") -> typing.Optional[Path]:
        simulation = report.simulation
        if simulation is None or simulation.trace is None:
            return None
        path = self.reports_dir / f"{report.scenario}-{report.seed}.trace.ndjson"
        with path.open("wb") as file:
            for event in simulation.trace:
                file.write(NDJSON.encode(event) + b"\n")
        return path

    def _write_message(
        self, directory: Path, stem: str, value: Encodable, **metadata: typing.Any
    ) -> str:
        (directory / f"{stem}.bin").write_bytes(value.encode())
        (directory / f"{stem}.json").write_bytes(_JSON.encode(as_json(value, **metadata)))
        return f"{stem}.bin"

    def write_bundle(self, client: "SimClient") -> Path:
        """
        Everything the client can hand to a verifier, evidence by evidence,
        with the notarized documents alongside.
        """
        directory = self.bundles_dir / client.label
        directory.mkdir(parents=True, exist_ok=True)
        entries = []
        for n, evidence in enumerate(client.evidence):
            if evidence.first_receipt is None:
                continue
            files = {
                "data": f"data-{n}.bin",
                "tx": self._write_message(directory, f"tx-{n}", evidence.tx),
                "first_receipt": self._write_message(
                    directory, f"first-{n}", evidence.first_receipt
                ),
            }
            (directory / files["data"]).write_bytes(evidence.data)
            if evidence.receipt is not None and evidence.header is not None:
                files["receipt"] = self._write_message(
                    directory, f"receipt-{n}", evidence.receipt, block=evidence.block
                )
                files["header"] = self._write_message(
                    directory, f"header-{n}", evidence.header
                )
            if evidence.aux_receipt is not None:
                files["aux_receipt"] = self._write_message(
                    directory, f"aux-{n}", evidence.aux_receipt, block=evidence.block
                )
            entries.append(
                {
                    "index": n,
                    "tx": evidence.tx.digest.hex(),
                    "status": evidence.status.value,
                    "block": evidence.block,
                    "t1": evidence.t1,
                    "t2": evidence.t2,
                    "t3": evidence.t3,
                    "validator": evidence.validator.hex(),
                    "files": files,
                }
            )
        manifest = {
            "client": client.label,
            "identity": client.identity.hex(),
            "evidence": entries,
        }
        (directory / BUNDLE_MANIFEST).write_bytes(_JSON.encode(manifest))
        return directory

    def read_manifest(
        self, bundle: typing.Union[str, Path]
    ) -> typing.Dict[str, typing.Any]:
        path = Path(bundle) / BUNDLE_MANIFEST
        try:
            manifest = _JSON.decode(path.read_bytes())
        except OSError as exception:
            raise MalformedEncoding(
                f"cannot read {path}: {exception.strerror}"
            ) from exception
        except ValueError as exception:
            raise MalformedEncoding(f"{path} is not a bundle manifest") from exception
        if not isinstance(manifest, dict) or not isinstance(
            manifest.get("evidence"), list
        ):
            raise MalformedEncoding(f"{path} lists no evidence")
        for entry in manifest["evidence"]:
            if (
                not isinstance(entry, dict)
                or not isinstance(entry.get("index"), int)
                or not isinstance(entry.get("files"), dict)
                or not all(isinstance(file, str) for file in entry["files"].values())
            ):
                raise MalformedEncoding(f"{path} has a malformed evidence entry")
        return manifest

    def export(
        self, report: "SimReport", serializer: BaseSerializer = _JSON
    ) -> typing.Dict[str, Path]:
        """
        Persist a finished run: registry signed by the run's CA, node
        chains, the ledger, one bundle per client, the report and the trace.
        """
        simulation = report.simulation
        if simulation is None:
            raise ValueError("report carries no simulation to export")
        self.init()
        written = {"registry": self.save_registry(simulation.registry, simulation.ca)}
        self.ca_path.write_bytes(simulation.ca.secret_key)
        self.pin_ca(simulation.ca.identity)
        simulation.ledger.save(self.ledger_path)
        written["ledger"] = self.ledger_path
        for node in simulation.nodes:
            path = self.chain_path(simulation.labels[node.identity])
            path.unlink(missing_ok=True)
            ChainLog(path).rewrite(node.chain)
        for client in simulation.clients:
            written[client.label] = self.write_bundle(client)
        written["report"] = self.write_report(report, serializer)
        trace = self.write_trace(report)
        if trace is not None:
            written["trace"] = trace
        logger.info("exported %s run to %s", report.scenario, self.directory)
        return written
