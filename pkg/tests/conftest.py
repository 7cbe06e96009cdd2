import typing

import pytest

from notaria.anchor import Anchoring, AuxiliaryNode
from notaria.crypto import KeyPair, digest, keygen
from notaria.ledger import MockLedger
from notaria.model import (
    AuxReceipt,
    BlockHeader,
    FirstReceipt,
    Receipt,
    Transaction,
    make_transaction,
)
from notaria.nodes import ServiceNode
from notaria.registry import Registry, Role
from notaria.verify import TrustAssumptions


def make_keys(label: str) -> KeyPair:
    return keygen(digest(label.encode("utf8")))


class Actors(typing.NamedTuple):
    ca: KeyPair
    registry: Registry
    clients: typing.List[KeyPair]
    nodes: typing.List[KeyPair]
    anchorer: KeyPair


@pytest.fixture
def actors() -> Actors:
    ca = make_keys("ca")
    registry = Registry(ca_public=ca.public_key)
    clients = [make_keys(f"client-{i}") for i in range(3)]
    nodes = [make_keys(f"node-{i}") for i in range(3)]
    anchorer = make_keys("anchor")
    for keys in clients:
        registry.register(keys, Role.CLIENT)
    for keys in nodes:
        registry.register(keys, Role.NODE)
    registry.register(anchorer, Role.AUXILIARY)
    return Actors(ca, registry, clients, nodes, anchorer)


class Evidence(typing.NamedTuple):
    data: bytes
    tx: Transaction
    first_receipt: FirstReceipt
    receipt: Receipt
    header: BlockHeader
    aux_receipt: AuxReceipt


class Pipeline(typing.NamedTuple):
    actors: Actors
    node: ServiceNode
    anchorer: AuxiliaryNode
    ledger: MockLedger
    anchoring: Anchoring
    evidence: typing.Dict[str, Evidence]

    def assumptions(self, **kwargs: typing.Any) -> TrustAssumptions:
        kwargs.setdefault("trusted_validators", frozenset([self.node.identity]))
        kwargs.setdefault("trust_proxy_consensus", True)
        kwargs.setdefault("trusted_ledger", self.ledger)
        return TrustAssumptions(registry=self.actors.registry, **kwargs)


NOW = 1_000_000
LEDGER_TIME = 2_000_000


@pytest.fixture
def pipeline(actors: Actors) -> Pipeline:
    """
    Two proxy blocks, one anchoring epoch: client-0 and client-1 transact in
    block 1, client-2 in block 2.
    """
    node = ServiceNode(actors.nodes[0], actors.registry)
    ledger = MockLedger(clock=lambda: LEDGER_TIME)
    anchorer = AuxiliaryNode(actors.anchorer, actors.registry, 2, ledger)
    plan = {0: (0, NOW), 1: (0, NOW + 1), 2: (1, NOW + 20)}
    submitted = {}
    blocks = []
    for block_number, t_k in ((0, NOW + 10), (1, NOW + 30)):
        for i, (b, claimed) in plan.items():
            if b == block_number:
                data = f"document {i}".encode("utf8")
                tx = make_transaction(actors.clients[i], data, claimed)
                submitted[i] = (data, tx, node.validate_transaction(tx, claimed))
        block, receipts = node.build_block(t_k, actors.anchorer.box_public)
        anchorer.observe_block(block)
        blocks.append((block, receipts))
    anchoring = anchorer.anchor()
    aux_receipts = anchorer.issue_aux_receipts(anchoring)
    evidence = {}
    for i, (data, tx, first_receipt) in submitted.items():
        block, receipts = blocks[plan[i][0]]
        client = actors.clients[i].identity
        evidence[f"client-{i}"] = Evidence(
            data, tx, first_receipt, receipts[client], block.header, aux_receipts[client]
        )
    return Pipeline(actors, node, anchorer, ledger, anchoring, evidence)
