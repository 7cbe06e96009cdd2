import random

from notaria import merkle
from notaria.adversary import (
    DroppingValidator,
    ForgingNode,
    OmittingAnchorer,
    SilentValidator,
    forge_owner,
    forgery_search,
    mutate_path,
    rewrite_chain,
)
from notaria.ledger import MockLedger
from notaria.model import make_transaction, verify_seal
from notaria.nodes import ServiceNode, make_first_receipt
from notaria.verify import (
    Reason,
    TrustAssumptions,
    verify_level1,
    verify_level2,
    verify_level3,
)

from .conftest import NOW


def test_dropping_validator(actors):
    node = DroppingValidator(actors.nodes[0], actors.registry)
    tx = make_transaction(actors.clients[0], b"doc", NOW)
    assert node.handle_submission(tx, NOW) is None
    assert node.pending() == 0 and node.drain_outbox() == []


def test_silent_validator(actors, pipeline):
    node = SilentValidator(actors.nodes[1], actors.registry)
    tx = make_transaction(actors.clients[0], b"doc", NOW)
    first_receipt = node.handle_submission(tx, NOW)
    assert first_receipt is not None
    assumptions = pipeline.assumptions(trusted_validators=frozenset([node.identity]))
    assert verify_level1(tx, first_receipt, assumptions)
    assert node.pending() == 0 and node.drain_outbox() == []


def test_forge_owner_is_caught_by_data_check(actors):
    victim, colluder = actors.clients[0], actors.clients[1]
    data = b"victim's document"
    victim_tx = make_transaction(victim, data, NOW)
    forged = forge_owner(victim_tx, colluder)
    assert forged.client == colluder.identity
    assert forged.data_sig == victim_tx.data_sig
    assert verify_seal(forged, colluder.public_key)

    validator = ServiceNode(actors.nodes[0], actors.registry)
    first_receipt = validator.validate_transaction(forged, NOW)
    assert first_receipt == make_first_receipt(validator.keys, forged)
    assumptions = TrustAssumptions(
        actors.registry, trusted_validators=frozenset([validator.identity])
    )
    assert verify_level1(forged, first_receipt, assumptions)
    verdict = verify_level1(forged, first_receipt, assumptions, data=data)
    assert verdict.reason == Reason.BAD_CLIENT_SIG
    guessed = forge_owner(victim_tx, colluder, bytes(64))
    assert guessed.data_sig == bytes(64)


def test_forging_node_blocks_pass_consensus(actors):
    victim, colluder = actors.clients[0], actors.clients[1]
    forged = []

    def forge(groups):
        extra = [forge_owner(tx, colluder) for tx in groups.get(victim.identity, [])]
        forged.extend(extra)
        return {**groups, colluder.identity: extra}

    node = ForgingNode(actors.nodes[0], actors.registry, forge=forge)
    peer = ServiceNode(actors.nodes[1], actors.registry)
    node.validate_transaction(make_transaction(victim, b"doc", NOW), NOW)
    block, receipts = node.build_block(NOW + 10, actors.anchorer.box_public)
    assert peer.accept_block(block)
    assert receipts[colluder.identity].transactions == tuple(forged)


def test_omitting_anchorer(actors, pipeline):
    ledger = MockLedger(clock=lambda: 1)
    anchorer = OmittingAnchorer(actors.anchorer, actors.registry, 2, ledger, omit=(0,))
    for k in (1, 2):
        anchorer.monitor(pipeline.node.header(k))
    anchoring = anchorer.anchor()
    assert anchoring.blocks == (2,)
    assert len(anchoring.tree) == 2
    assert anchoring.pub_data.epoch_length == 2
    assert anchoring.pub_data.aux_root != pipeline.anchoring.pub_data.aux_root


def test_rewrite_chain(actors, pipeline):
    chain = pipeline.node.chain
    committers = {keys.identity: keys for keys in actors.nodes}
    ghost = make_transaction(actors.clients[0], b"ghost", chain[1].header.created_at - 1)
    rewritten, receipts = rewrite_chain(
        chain, 2, {2: [ghost]}, committers, actors.anchorer.box_public
    )
    assert rewritten[0] is chain[0]
    assert rewritten[1].header != chain[1].header
    assert rewritten[1].header.created_at == chain[1].header.created_at
    assert rewritten[1].header.prev_hash == chain[0].header.digest
    receipt = receipts[2][actors.clients[0].identity]
    assert receipt.transactions == (ghost,)
    header = rewritten[1].header
    assert verify_level2(receipt, header, pipeline.assumptions(), data=b"ghost")
    old = pipeline.evidence["client-2"]
    verdict = verify_level2(old.receipt, header, pipeline.assumptions())
    assert verdict.reason == Reason.PATH_MISMATCH


def test_mutate_path_always_changes_it():
    rng = random.Random(5)
    tree = merkle.build([merkle.leaf_digest(bytes([i])) for i in range(6)])
    path = merkle.path(tree, 3)
    for _ in range(200):
        assert mutate_path(rng, path) != path
    assert len(mutate_path(rng, merkle.MerklePath())) == 1


def test_forgery_search_finds_nothing(pipeline):
    evidence = pipeline.evidence["client-0"]
    assumptions = pipeline.assumptions()
    accepted = forgery_search(
        random.Random(9),
        evidence.receipt,
        evidence.aux_receipt,
        pipeline.node.keys,
        pipeline.actors.anchorer,
        300,
        lambda r, a: bool(
            verify_level3(r, a, pipeline.ledger, assumptions, data=evidence.data)
        ),
    )
    assert accepted == 0
