import random

import pytest

from notaria import merkle
from notaria.crypto import digest, verify_sig
from notaria.exceptions import MalformedEncoding
from notaria.model import (
    AuxReceipt,
    Block,
    BlockHeader,
    LedgerAddress,
    PubData,
    Receipt,
    Transaction,
    as_json,
    from_json,
    make_transaction,
    seal,
    verify_seal,
)
from notaria.nodes import assemble_block

from .conftest import make_keys


def test_transaction_layout():
    client = make_keys("client")
    tx = make_transaction(client, b"document", 1234)
    data = tx.encode()
    assert len(data) == Transaction.SIZE == 168
    assert data[64:72] == (1234).to_bytes(8, "big")
    assert data[72:104] == client.identity
    assert verify_sig(client.public_key, digest(b"document"), tx.data_sig)
    assert verify_seal(tx, client.public_key)
    assert Transaction.decode(data) == tx


def test_seal_overwrites_previous_signature():
    client = make_keys("client")
    tx = make_transaction(client, b"document", 1)
    assert seal(tx, client) == tx
    other = seal(tx, make_keys("other"))
    assert not verify_seal(other, client.public_key)


def test_transaction_field_widths():
    with pytest.raises(MalformedEncoding, match="client must be 32 bytes"):
        Transaction(data_sig=bytes(64), claimed_time=1, client=b"short")


def test_header_layout():
    node = make_keys("node")
    header = seal(
        BlockHeader(
            prev_hash=bytes(32),
            index=7,
            created_at=99,
            block_root=b"r" * 32,
            committer=node.identity,
        ),
        node,
    )
    assert len(header.encode()) == BlockHeader.SIZE == 176
    assert BlockHeader.decode(header.encode()) == header
    assert verify_seal(header, node.public_key)


def test_pub_data_is_eighty_bytes():
    pub_data = PubData(b"a" * 32, 3, 2, b"r" * 32)
    assert len(pub_data.encode()) == PubData.SIZE == 80
    assert PubData.decode(pub_data.encode()) == pub_data


@pytest.fixture
def block_and_receipts():
    node, anchorer = make_keys("node"), make_keys("anchor")
    clients = [make_keys(f"client-{i}") for i in range(3)]
    groups = {
        client.identity: [
            make_transaction(client, bytes([i, j]), 10 + j) for j in range(i + 1)
        ]
        for i, client in enumerate(clients)
    }
    return assemble_block(node, None, 1, 100, groups, anchorer.box_public)


def test_block_and_receipt_decode(block_and_receipts):
    block, receipts = block_and_receipts
    assert Block.decode(block.encode()) == block
    public = block.public_view()
    assert public.phantom == ()
    assert Block.decode(public.encode()) == public
    for receipt in receipts.values():
        assert Receipt.decode(receipt.encode()) == receipt


def test_aux_receipt_decode():
    anchorer = make_keys("anchor")
    tree = merkle.build([merkle.leaf_digest(bytes([i])) for i in range(4)])
    aux = seal(
        AuxReceipt(
            first_k=1,
            last_k=2,
            pub_data=PubData(anchorer.identity, 0, 2, tree.root),
            address=LedgerAddress(5, 0),
            path=merkle.path(tree, 2),
        ),
        anchorer,
    )
    assert AuxReceipt.decode(aux.encode()) == aux
    assert verify_seal(aux, anchorer.public_key)


@pytest.mark.parametrize("cls", [Transaction, BlockHeader, PubData, LedgerAddress])
def test_truncated(cls):
    with pytest.raises(MalformedEncoding):
        cls.decode(b"\x00" * 5)


def test_trailing_bytes():
    with pytest.raises(MalformedEncoding, match="trailing bytes"):
        PubData.decode(bytes(81))


def test_receipt_truncation_is_malformed(block_and_receipts):
    _, receipts = block_and_receipts
    data = next(iter(receipts.values())).encode()
    for cut in (1, 10, 64, len(data) - 1):
        with pytest.raises(MalformedEncoding):
            Receipt.decode(data[:cut])


def test_single_byte_mutations_break_the_seal():
    rng = random.Random(3)
    client = make_keys("client")
    tx = make_transaction(client, b"document", 42)
    data = tx.encode()
    for _ in range(500):
        mutated = bytearray(data)
        mutated[rng.randrange(len(data))] ^= 1 << rng.randrange(8)
        assert not verify_seal(Transaction.decode(bytes(mutated)), client.public_key)


def test_json_mirror(block_and_receipts):
    _, receipts = block_and_receipts
    receipt = next(iter(receipts.values()))
    document = as_json(receipt, block=1)
    assert document["type"] == "Receipt"
    assert document["metadata"] == {"block": 1}
    assert document["fields"]["committer"] == receipt.committer.hex()
    assert from_json(document, Receipt) == receipt
    with pytest.raises(MalformedEncoding, match="expected Transaction"):
        from_json(document, Transaction)
    with pytest.raises(MalformedEncoding):
        from_json({"type": "Receipt"}, Receipt)
