import pytest

from notaria import sim
from notaria.config import SimConfig, WorkspaceSettings
from notaria.exceptions import BadRegistrySignature, MalformedEncoding
from notaria.model import Receipt, as_json
from notaria.nodes import ChainLog
from notaria.registry import Registry, Role
from notaria.serializers import JSONSerializer, MsgpackSerializer
from notaria.workspace import BUNDLE_MANIFEST, Workspace

from .conftest import make_keys


@pytest.fixture
def workspace(tmp_path):
    return Workspace(tmp_path / "ws")


def test_from_settings(tmp_path, monkeypatch):
    monkeypatch.setenv("NOTARIA_WORKSPACE", str(tmp_path))
    assert Workspace.from_settings(WorkspaceSettings.resolve()).directory == tmp_path
    explicit = WorkspaceSettings.resolve(tmp_path / "other")
    assert Workspace.from_settings(explicit).directory == tmp_path / "other"


def test_ensure_ca_is_stable(workspace):
    ca = workspace.ensure_ca()
    assert workspace.ca_path.exists()
    assert workspace.ensure_ca().identity == ca.identity
    assert workspace.ensure_ca(seed=bytes(32)).identity == ca.identity


def test_ca_pin(workspace):
    assert workspace.pinned_ca() is None
    ca = workspace.ensure_ca(seed=bytes(32))
    assert workspace.pinned_ca() == ca.identity
    assert workspace.ca_pin_path.read_text().strip() == ca.identity.hex()
    workspace.save_registry(workspace.load_registry(), ca)

    workspace.ca_pin_path.unlink()
    assert workspace.pinned_ca() == ca.identity
    assert len(workspace.load_registry()) == 0

    workspace.pin_ca(make_keys("other-ca").identity)
    with pytest.raises(BadRegistrySignature):
        workspace.load_registry()

    workspace.ca_pin_path.write_text("zz")
    with pytest.raises(MalformedEncoding):
        workspace.pinned_ca()


def test_load_registry_creates_nothing(workspace):
    registry = workspace.load_registry()
    assert len(registry) == 0
    assert registry.ca_public is None
    assert not workspace.directory.exists()


def test_bad_manifest_entries(tmp_path, workspace):
    with pytest.raises(MalformedEncoding, match="cannot read"):
        workspace.read_manifest(tmp_path / "missing")
    (tmp_path / BUNDLE_MANIFEST).write_text('{"evidence": [{"index": 0}]}')
    with pytest.raises(MalformedEncoding, match="malformed evidence entry"):
        workspace.read_manifest(tmp_path)


def test_short_ca_seed(workspace):
    workspace.init()
    workspace.ca_path.write_bytes(b"short")
    with pytest.raises(MalformedEncoding):
        workspace.ensure_ca()


def test_keys_and_registry(workspace):
    ca = workspace.ensure_ca(seed=bytes(32))
    registry = workspace.load_registry()
    assert len(registry) == 0
    keys = make_keys("client-0")
    registry.register(keys, Role.CLIENT)
    workspace.save_key(keys)
    workspace.save_registry(registry, ca)

    assert workspace.load_key(keys.identity).public_key == keys.public_key
    loaded = workspace.load_registry()
    assert loaded.key_for(keys.identity, Role.CLIENT) == keys.public_key
    assert loaded.ca_public == ca.public_key


def test_export(workspace):
    report = sim.run(SimConfig(num_clients=2, m=2, seed=9), trace=True)
    written = workspace.export(report)

    assert written["report"] == workspace.reports_dir / "happy_path-9.json"
    assert JSONSerializer().decode(written["report"].read_bytes()) == report.to_dict()
    assert written["trace"].read_text().count("\n") == len(report.simulation.trace)

    assert workspace.pinned_ca() == report.simulation.ca.identity
    registry = Registry.load(workspace.registry_path, workspace.pinned_ca())
    assert len(registry) == len(report.simulation.registry)
    ledger = workspace.load_ledger()
    assert len(ledger) == len(report.simulation.ledger)

    chain = ChainLog(workspace.chain_path("node-0")).read()
    assert [block.header for block in chain] == [
        block.header for block in report.simulation.nodes[0].chain
    ]

    bundle = workspace.bundles_dir / "client-0"
    manifest = workspace.read_manifest(bundle)
    assert manifest["client"] == "client-0"
    entry = manifest["evidence"][0]
    assert entry["status"] == "anchored"
    assert set(entry["files"]) == {
        "data",
        "tx",
        "first_receipt",
        "receipt",
        "header",
        "aux_receipt",
    }
    evidence = report.simulation.clients[0].evidence[0]
    assert (bundle / entry["files"]["data"]).read_bytes() == evidence.data
    receipt = Receipt.decode((bundle / entry["files"]["receipt"]).read_bytes())
    assert receipt == evidence.receipt
    mirror = JSONSerializer().decode((bundle / "receipt-0.json").read_bytes())
    assert mirror == JSONSerializer().decode(
        JSONSerializer().encode(as_json(evidence.receipt, block=evidence.block))
    )


def test_export_is_repeatable(workspace):
    report = sim.run(SimConfig(seed=2))
    first = workspace.export(report)["report"].read_bytes()
    assert workspace.export(sim.run(SimConfig(seed=2)))["report"].read_bytes() == first
    chain = ChainLog(workspace.chain_path("node-0")).read()
    assert len(chain) == report.chain_height


def test_report_suffix_follows_serializer(workspace):
    pytest.importorskip("msgpack")
    report = sim.run(SimConfig(seed=3))
    path = workspace.write_report(report, MsgpackSerializer())
    assert path.suffix == ".msgpack"


def test_bad_manifest(workspace, tmp_path):
    (tmp_path / BUNDLE_MANIFEST).write_text("not json")
    with pytest.raises(MalformedEncoding):
        workspace.read_manifest(tmp_path)
