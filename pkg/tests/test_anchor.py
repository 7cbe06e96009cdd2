import dataclasses

import pytest

from notaria import merkle
from notaria.anchor import AuxiliaryNode, aux_leaves, build_aux_tree
from notaria.exceptions import ClientNotInEpoch, MissingHeader, RoleViolation
from notaria.ledger import MockLedger
from notaria.model import PubData, make_transaction
from notaria.nodes import ServiceNode

from .conftest import NOW


def test_requires_auxiliary_role(actors):
    with pytest.raises(RoleViolation):
        AuxiliaryNode(actors.nodes[0], actors.registry, 2, MockLedger())
    with pytest.raises(ValueError):
        AuxiliaryNode(actors.anchorer, actors.registry, 1, MockLedger())


def test_anchoring(pipeline):
    anchoring = pipeline.anchoring
    headers = [pipeline.node.header(1), pipeline.node.header(2)]
    assert anchoring.first_k == 1 and anchoring.last_k == 2
    assert anchoring.blocks == (1, 2)
    assert len(anchoring.tree) == 4
    assert anchoring.tree.leaves == tuple(aux_leaves(headers))
    assert anchoring.pub_data == PubData(
        pipeline.anchorer.identity, 0, 2, anchoring.tree.root
    )
    payload, _ = pipeline.ledger.get(anchoring.address)
    assert PubData.decode(payload) == anchoring.pub_data
    assert pipeline.anchorer.epoch == (3, 4)


def test_aux_receipts_point_at_block_root_leaves(pipeline):
    tree = pipeline.anchoring.tree
    for name, position in (("client-0", 0), ("client-1", 0), ("client-2", 2)):
        evidence = pipeline.evidence[name]
        assert evidence.aux_receipt.path == merkle.path(tree, position)
        assert merkle.verify_path(
            evidence.header.block_root, evidence.aux_receipt.path, tree.root
        )


def test_membership(pipeline):
    clients = [keys.identity for keys in pipeline.actors.clients]
    members = pipeline.anchorer.epoch_membership(pipeline.anchoring)
    assert members == {clients[0]: {1}, clients[1]: {1}, clients[2]: {2}}


def test_additional_aux_receipt(pipeline):
    client = pipeline.actors.clients[2].identity
    receipt = pipeline.anchorer.additional_aux_receipt(pipeline.anchoring, client, 2)
    assert receipt == pipeline.evidence["client-2"].aux_receipt
    with pytest.raises(ClientNotInEpoch):
        pipeline.anchorer.additional_aux_receipt(pipeline.anchoring, client, 1)
    with pytest.raises(ClientNotInEpoch):
        pipeline.anchorer.issue_aux_receipts(pipeline.anchoring, {client: [5]})


def test_build_aux_tree_missing_header(pipeline):
    headers = {1: pipeline.node.header(1)}
    with pytest.raises(MissingHeader):
        build_aux_tree(headers, 1, 2)


def test_monitor_reports_rewrites_and_gaps(pipeline):
    anchorer = pipeline.anchorer
    header = pipeline.node.header(2)
    assert anchorer.monitor(header) == []
    rewritten = dataclasses.replace(header, created_at=header.created_at + 1)
    assert [a.kind for a in anchorer.monitor(rewritten)] == ["HeaderRewrite"]
    far = dataclasses.replace(header, index=5)
    assert [(a.kind, a.k) for a in anchorer.monitor(far)] == [
        ("MissingBlock", 3),
        ("MissingBlock", 4),
    ]
    assert len(anchorer.state.anomalies) == 3


def test_epoch_ready(actors):
    node = ServiceNode(actors.nodes[0], actors.registry)
    ledger = MockLedger(clock=lambda: 1)
    anchorer = AuxiliaryNode(actors.anchorer, actors.registry, 3, ledger)
    for i in range(3):
        assert not anchorer.epoch_ready()
        t = NOW + 20 * i
        node.validate_transaction(make_transaction(actors.clients[0], bytes([i]), t), t)
        block, _ = node.build_block(t + 10, actors.anchorer.box_public)
        anchorer.observe_block(block)
    assert anchorer.epoch_ready()
    anchoring = anchorer.anchor()
    assert anchoring.pub_data.epoch_length == 3
    assert len(anchoring.tree) == 6
    receipts = anchorer.issue_aux_receipts(anchoring)
    assert receipts[actors.clients[0].identity].path == merkle.path(anchoring.tree, 0)
