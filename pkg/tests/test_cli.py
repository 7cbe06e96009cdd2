import json
import shutil

import pytest

from notaria.cli import EXIT_ACCEPTED, EXIT_MALFORMED, EXIT_REJECTED, main
from notaria.model import make_transaction
from notaria.nodes import assemble_block
from notaria.registry import Registry, Role

from .conftest import make_keys

NOW = 1_700_000_000_000


@pytest.fixture
def workspace(tmp_path):
    return tmp_path / "ws"


def run(capsys, *argv):
    capsys.readouterr()
    code = main([str(arg) for arg in argv])
    return code, capsys.readouterr()


def output(captured):
    return json.loads(captured.out)


@pytest.fixture
def simulated(workspace, capsys):
    code, captured = run(
        capsys,
        "--workspace",
        workspace,
        "sim",
        "--scenario",
        "happy_path",
        "--clients",
        "3",
        "--m",
        "2",
        "--seed",
        "7",
    )
    assert code == EXIT_ACCEPTED
    return output(captured)


def manifest(workspace, client="client-0"):
    return json.loads((workspace / "bundles" / client / "manifest.json").read_text())


def test_version(capsys):
    assert main(["--version"]) == EXIT_ACCEPTED
    assert capsys.readouterr().out.strip() == "0.1.0"


def test_usage_errors(capsys):
    assert main([]) == EXIT_MALFORMED
    assert main(["verify"]) == EXIT_MALFORMED
    assert main(["keys", "gen", "--role", "wizard"]) == EXIT_MALFORMED


def test_keys_gen_and_list(workspace, capsys):
    seed = "00" * 32
    code, captured = run(
        capsys, "--workspace", workspace, "keys", "gen", "--role", "node", "--seed", seed
    )
    assert code == EXIT_ACCEPTED
    generated = output(captured)
    assert generated["role"] == "node"

    code, captured = run(
        capsys, "--workspace", workspace, "keys", "gen", "--role", "node", "--seed", seed
    )
    assert code == EXIT_REJECTED
    assert "DuplicateIdentity" in captured.err

    code, captured = run(
        capsys, "--workspace", workspace, "keys", "gen", "--role", "client"
    )
    assert code == EXIT_ACCEPTED
    client = output(captured)["identity"]

    code, captured = run(capsys, "--workspace", workspace, "keys", "list", "--json")
    assert code == EXIT_ACCEPTED
    assert {(e["identity"], e["role"]) for e in output(captured)} == {
        (generated["identity"], "node"),
        (client, "client"),
    }
    assert (workspace / "keys" / f"{client}.key").exists()


def test_keys_gen_bad_seed(workspace, capsys):
    code, _ = run(
        capsys,
        "--workspace",
        workspace,
        "keys",
        "gen",
        "--role",
        "client",
        "--seed",
        "abcd",
    )
    assert code == EXIT_MALFORMED


def test_sim_happy_path(workspace, simulated):
    assert simulated["scenario"] == "happy_path"
    assert simulated["all_accepted"] is True
    assert simulated["outcome"] is None
    assert simulated["anomalies"] == {}
    report = json.loads((workspace / "reports" / "happy_path-7.json").read_text())
    assert report["seed"] == 7
    assert all(level["rejected"] == 0 for level in report["verification"].values())
    for client in ("client-0", "client-1", "client-2"):
        assert manifest(workspace, client)["evidence"]


def test_sim_rerun_is_identical(workspace, simulated, capsys):
    first = (workspace / "reports" / "happy_path-7.json").read_bytes()
    code, _ = run(
        capsys,
        "--workspace",
        workspace,
        "sim",
        "--scenario",
        "happy_path",
        "--clients",
        "3",
        "--m",
        "2",
        "--seed",
        "7",
    )
    assert code == EXIT_ACCEPTED
    assert (workspace / "reports" / "happy_path-7.json").read_bytes() == first


def test_sim_config_file(workspace, tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"scenario": "fake_owner", "seed": 1, "num_clients": 2}))
    code, captured = run(
        capsys, "--workspace", workspace, "sim", "--config", config, "--no-export"
    )
    assert code == EXIT_ACCEPTED
    assert output(captured)["outcome"] == "failed"
    assert not workspace.exists()


@pytest.mark.parametrize(
    "flags",
    [
        ["--scenario", "nope"],
        ["--m", "1"],
        ["--scenario", "fake_owner", "--clients", "1"],
        ["--format", "yaml"],
        ["--config", "missing.json"],
    ],
)
def test_sim_bad_input(workspace, capsys, flags):
    code, _ = run(capsys, "--workspace", workspace, "sim", "--no-export", *flags)
    assert code == EXIT_MALFORMED


def test_verify_level3_bundle(workspace, simulated, capsys):
    bundle = workspace / "bundles" / "client-0"
    code, captured = run(
        capsys, "--workspace", workspace, "verify", "--level", "3", "--bundle", bundle
    )
    assert code == EXIT_ACCEPTED
    verdict = output(captured)
    assert verdict["accepted"] is True
    assert verdict["level"] == 3
    assert verdict["reason"] is None
    entry = manifest(workspace)["evidence"][0]
    assert verdict["established_time"] >= entry["t2"]


def test_verify_level1_needs_trusted_validator(workspace, simulated, capsys):
    bundle = workspace / "bundles" / "client-1"
    code, captured = run(
        capsys, "--workspace", workspace, "verify", "--level", "1", "--bundle", bundle
    )
    assert code == EXIT_REJECTED
    assert output(captured)["reason"] == "UntrustedValidator"

    validator = manifest(workspace, "client-1")["evidence"][0]["validator"]
    code, captured = run(
        capsys,
        "--workspace",
        workspace,
        "verify",
        "--level",
        "1",
        "--bundle",
        bundle,
        "--trust-validator",
        validator,
    )
    assert code == EXIT_ACCEPTED
    assert output(captured)["established_time"] is not None


def test_verify_level2_needs_consensus_trust(workspace, simulated, capsys):
    bundle = workspace / "bundles" / "client-2"
    code, captured = run(
        capsys, "--workspace", workspace, "verify", "--level", "2", "--bundle", bundle
    )
    assert code == EXIT_REJECTED
    assert output(captured)["reason"] == "ConsensusUntrusted"
    code, _ = run(
        capsys,
        "--workspace",
        workspace,
        "verify",
        "--level",
        "2",
        "--bundle",
        bundle,
        "--trust-consensus",
    )
    assert code == EXIT_ACCEPTED


def test_verify_json_mirrors(workspace, simulated, capsys):
    bundle = workspace / "bundles" / "client-0"
    code, _ = run(
        capsys,
        "--workspace",
        workspace,
        "verify",
        "--level",
        "3",
        "--receipt",
        bundle / "receipt-0.json",
        "--aux-receipt",
        bundle / "aux-0.json",
        "--header",
        bundle / "header-0.json",
        "--data",
        bundle / "data-0.bin",
    )
    assert code == EXIT_ACCEPTED


def test_verify_wrong_document(workspace, simulated, tmp_path, capsys):
    other = tmp_path / "other.bin"
    other.write_bytes(b"not the notarized document")
    bundle = workspace / "bundles" / "client-0"
    code, captured = run(
        capsys,
        "--workspace",
        workspace,
        "verify",
        "--level",
        "3",
        "--bundle",
        bundle,
        "--data",
        other,
    )
    assert code == EXIT_REJECTED
    assert output(captured)["reason"] == "BadTxSig"


def test_verify_malformed_input(workspace, simulated, tmp_path, capsys):
    bundle = workspace / "bundles" / "client-0"
    truncated = tmp_path / "receipt.bin"
    truncated.write_bytes((bundle / "receipt-0.bin").read_bytes()[:-10])
    code, _ = run(
        capsys,
        "--workspace",
        workspace,
        "verify",
        "--level",
        "3",
        "--bundle",
        bundle,
        "--receipt",
        truncated,
    )
    assert code == EXIT_MALFORMED

    code, _ = run(
        capsys, "--workspace", workspace, "verify", "--level", "3", "--tx", truncated
    )
    assert code == EXIT_MALFORMED

    code, _ = run(
        capsys,
        "--workspace",
        workspace,
        "verify",
        "--level",
        "3",
        "--bundle",
        bundle,
        "--index",
        "9",
    )
    assert code == EXIT_MALFORMED


def test_verify_offline(workspace, simulated, tmp_path, capsys):
    offline = tmp_path / "offline"
    shutil.copytree(workspace / "bundles" / "client-1", offline / "bundle")
    shutil.copy(workspace / "registry.bin", offline / "registry.bin")
    shutil.copy(workspace / "ledger.bin", offline / "ledger.bin")
    ca = (workspace / "ca.id").read_text().strip()
    shutil.rmtree(workspace)

    argv = [
        "--workspace",
        tmp_path / "empty",
        "verify",
        "--level",
        "3",
        "--bundle",
        offline / "bundle",
        "--registry",
        offline / "registry.bin",
        "--ledger",
        offline / "ledger.bin",
    ]
    code, captured = run(capsys, *argv)
    assert code == EXIT_MALFORMED
    assert "no trusted CA" in captured.err

    code, captured = run(capsys, *argv, "--trust-ca", ca)
    assert code == EXIT_ACCEPTED, captured.err
    assert output(captured)["accepted"] is True


def test_verify_foreign_registry(workspace, simulated, tmp_path, capsys):
    rogue_ca = make_keys("rogue-ca")
    node, client = make_keys("rogue-node"), make_keys("rogue-client")
    registry = Registry(ca_public=rogue_ca.public_key)
    registry.register(node, Role.NODE)
    registry.register(client, Role.CLIENT)
    registry.save(tmp_path / "rogue.bin", rogue_ca)

    data = b"never notarized"
    tx = make_transaction(client, data, NOW)
    block, receipts = assemble_block(
        node, None, 1, NOW + 10, {client.identity: [tx]}, make_keys("rogue-aux").box_public
    )
    (tmp_path / "receipt.bin").write_bytes(receipts[client.identity].encode())
    (tmp_path / "header.bin").write_bytes(block.header.encode())
    (tmp_path / "data.bin").write_bytes(data)
    evidence = [
        "verify",
        "--level",
        "2",
        "--receipt",
        tmp_path / "receipt.bin",
        "--header",
        tmp_path / "header.bin",
        "--data",
        tmp_path / "data.bin",
        "--registry",
        tmp_path / "rogue.bin",
        "--trust-consensus",
    ]

    code, captured = run(capsys, "--workspace", workspace, *evidence)
    assert code == EXIT_REJECTED
    assert "BadRegistrySignature" in captured.err
    assert captured.out == ""

    code, captured = run(capsys, "--workspace", tmp_path / "bare", *evidence)
    assert code == EXIT_MALFORMED

    code, captured = run(
        capsys,
        "--workspace",
        tmp_path / "bare",
        *evidence,
        "--trust-ca",
        rogue_ca.identity.hex(),
    )
    assert code == EXIT_ACCEPTED


@pytest.mark.parametrize(
    "manifest_text",
    [
        None,
        "not json",
        "[]",
        json.dumps({"client": "client-0"}),
        json.dumps({"evidence": [{"index": 0}]}),
        json.dumps({"evidence": [{"index": "0", "files": {}}]}),
        json.dumps({"evidence": [{"index": 0, "files": {"tx": 7}}]}),
    ],
)
def test_verify_bad_bundle(workspace, tmp_path, capsys, manifest_text):
    bundle = tmp_path / "bundle"
    if manifest_text is not None:
        bundle.mkdir()
        (bundle / "manifest.json").write_text(manifest_text)
    code, captured = run(
        capsys, "--workspace", workspace, "verify", "--level", "1", "--bundle", bundle
    )
    assert code == EXIT_MALFORMED
    assert "MalformedEncoding" in captured.err


def test_keys_list_is_read_only(workspace, capsys):
    code, captured = run(capsys, "--workspace", workspace, "keys", "list", "--json")
    assert code == EXIT_ACCEPTED
    assert output(captured) == []
    assert not (workspace / "ca.key").exists()
    assert not (workspace / "ca.id").exists()


def test_inspect_chain(workspace, simulated, capsys):
    chain = workspace / "nodes" / "node-0.chain"
    code, captured = run(capsys, "inspect", "chain", chain)
    assert code == EXIT_ACCEPTED
    lines = captured.out.splitlines()
    assert lines and all("redacted" in line for line in lines)

    code, captured = run(capsys, "inspect", "chain", chain, "--json")
    assert code == EXIT_ACCEPTED
    public = output(captured)["blocks"]

    code, captured = run(capsys, "inspect", "chain", chain, "--node-view")
    assert code == EXIT_ACCEPTED
    assert "redacted" not in captured.out

    code, captured = run(capsys, "inspect", "chain", chain, "--json", "--node-view")
    assert len(output(captured)["blocks"]) == len(public)
    assert output(captured) != {"blocks": public}

    assert run(
        capsys, "inspect", "chain", workspace / "missing.chain"
    )[0] == EXIT_MALFORMED


def test_inspect_ledger(workspace, simulated, capsys):
    code, captured = run(capsys, "inspect", "ledger", workspace / "ledger.bin", "--json")
    assert code == EXIT_ACCEPTED
    records = output(captured)["records"]
    assert records
    assert [r["pub_data"]["last_anchor_index"] for r in records] == [
        2 * i for i in range(len(records))
    ]
    assert all(r["pub_data"]["epoch_length"] == 2 for r in records)


def test_inspect_receipt(workspace, simulated, capsys):
    receipt = workspace / "bundles" / "client-0" / "receipt-0.bin"
    code, captured = run(
        capsys, "--workspace", workspace, "inspect", "receipt", receipt, "--json"
    )
    assert code == EXIT_ACCEPTED
    document = output(captured)
    assert document["committer_signature"] == "valid"
    assert {tx["signature"] for tx in document["transactions"]} == {"valid"}

    code, captured = run(
        capsys,
        "--workspace",
        workspace / "nowhere",
        "inspect",
        "receipt",
        receipt,
        "--json",
    )
    assert code == EXIT_ACCEPTED
    assert output(captured)["committer_signature"] == "unchecked"
