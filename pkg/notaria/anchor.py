"""
The auxiliary node: every `m` proxy blocks it builds the auxiliary tree,
commits pub_data to the public ledger and issues auxiliary receipts.
"""
from __future__ import annotations

import logging
import typing
from dataclasses import dataclass, field

from notaria import merkle
from notaria.crypto import Digest, Identity, KeyPair, decrypt
from notaria.exceptions import (
    ClientNotInEpoch,
    DecryptionFailure,
    MissingHeader,
    RoleViolation,
)
from notaria.ledger import PublicLedger
from notaria.model import (
    AuxReceipt,
    Block,
    BlockHeader,
    LedgerAddress,
    PubData,
    seal,
)
from notaria.registry import Registry, Role

__all__ = [
    "AnchorState",
    "Anomaly",
    "Anchoring",
    "AuxiliaryNode",
    "aux_leaves",
    "build_aux_tree",
    "commit",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Anomaly:
    kind: str
    k: int
    details: str = ""


def aux_leaves(headers: typing.Sequence[BlockHeader]) -> typing.List[Digest]:
    leaves: typing.List[Digest] = []
    for header in headers:
        leaves.extend((header.block_root, header.digest))
    return leaves


def build_aux_tree(
    headers: typing.Mapping[int, BlockHeader], first_k: int, last_k: int
) -> merkle.MerkleTree:
    """
    Auxiliary tree over (block root, header hash) of blocks first_k..last_k,
    interleaved in ascending k.
    """
    ordered = []
    for k in range(first_k, last_k + 1):
        if k not in headers:
            raise MissingHeader(k)
        ordered.append(headers[k])
    return merkle.build(aux_leaves(ordered))


def commit(ledger: PublicLedger, pub_data: PubData) -> LedgerAddress:
    return ledger.append(pub_data.encode())


@dataclass(frozen=True)
class Anchoring:
    """
    One committed epoch. `blocks` lists the k whose leaves are in `tree`, in
    leaf order.
    """

    pub_data: PubData
    address: LedgerAddress
    tree: merkle.MerkleTree
    blocks: typing.Tuple[int, ...]

    @property
    def first_k(self) -> int:
        return self.pub_data.last_anchor_index + 1

    @property
    def last_k(self) -> int:
        return self.pub_data.last_anchor_index + self.pub_data.epoch_length


@dataclass
class AnchorState:
    keys: KeyPair
    epoch_length: int
    last_anchor: int = 0
    observed_headers: typing.Dict[int, BlockHeader] = field(default_factory=dict)
    membership: typing.Dict[int, typing.FrozenSet[Identity]] = field(default_factory=dict)
    anomalies: typing.List[Anomaly] = field(default_factory=list)


class AuxiliaryNode:
    def __init__(
        self,
        keys: KeyPair,
        registry: Registry,
        epoch_length: int,
        ledger: PublicLedger,
    ) -> None:
        if epoch_length < 2:
            raise ValueError(f"epoch length must be at least 2, got {epoch_length}")
        if registry.key_for(keys.identity, Role.AUXILIARY) is None:
            raise RoleViolation(
                f"{keys.identity.hex()} is not the registered auxiliary node"
            )
        self.state = AnchorState(keys, epoch_length)
        self.registry = registry
        self.ledger = ledger
        self.anchorings: typing.List[Anchoring] = []

    @property
    def identity(self) -> Identity:
        return self.state.keys.identity

    @property
    def epoch(self) -> typing.Tuple[int, int]:
        first = self.state.last_anchor + 1
        return first, self.state.last_anchor + self.state.epoch_length

    def monitor(self, header: BlockHeader) -> typing.List[Anomaly]:
        """
        Record a header and report rewrites of known heights and gaps.
        """
        observed = self.state.observed_headers
        found = []
        previous = observed.get(header.index)
        if previous is not None and previous != header:
            found.append(Anomaly("HeaderRewrite", header.index, previous.digest.hex()))
        elif previous is None and observed:
            highest = max(observed)
            found.extend(
                Anomaly("MissingBlock", k) for k in range(highest + 1, header.index)
            )
        observed[header.index] = header
        for anomaly in found:
            logger.warning("anchorer saw %s at block %d", anomaly.kind, anomaly.k)
        self.state.anomalies.extend(found)
        return found

    def observe_block(self, block: Block) -> typing.List[Anomaly]:
        """
        Monitor the header and learn which clients transacted, by opening
        the summary identities.
        """
        found = self.monitor(block.header)
        clients = set()
        for summary in block.summaries:
            try:
                opened = decrypt(self.state.keys.box_secret, summary.enc_identity)
                clients.add(Identity(opened))
            except DecryptionFailure:
                logger.warning("undecryptable summary in block %d", block.index)
        self.state.membership[block.index] = frozenset(clients)
        return found

    def epoch_ready(self) -> bool:
        first, last = self.epoch
        return all(k in self.state.observed_headers for k in range(first, last + 1))

    def epoch_blocks(self) -> typing.Tuple[int, ...]:
        first, last = self.epoch
        return tuple(range(first, last + 1))

    def build_aux_tree(self) -> merkle.MerkleTree:
        first, last = self.epoch
        return build_aux_tree(self.state.observed_headers, first, last)

    def make_pub_data(self, aux_root: Digest) -> PubData:
        return PubData(
            anchorer=self.identity,
            last_anchor_index=self.state.last_anchor,
            epoch_length=self.state.epoch_length,
            aux_root=aux_root,
        )

    def anchor(self) -> Anchoring:
        """
        Build the tree for the current epoch and commit it. The epoch only
        advances once the ledger accepted the payload.
        """
        tree = self.build_aux_tree()
        pub_data = self.make_pub_data(tree.root)
        address = commit(self.ledger, pub_data)
        anchoring = Anchoring(pub_data, address, tree, self.epoch_blocks())
        self.anchorings.append(anchoring)
        self.state.last_anchor += self.state.epoch_length
        logger.debug(
            "anchored blocks %d..%d at %s", anchoring.first_k, anchoring.last_k, address
        )
        return anchoring

    def epoch_membership(
        self, anchoring: Anchoring
    ) -> typing.Dict[Identity, typing.Set[int]]:
        members: typing.Dict[Identity, typing.Set[int]] = {}
        for k in anchoring.blocks:
            for client in sorted(self.state.membership.get(k, ())):
                members.setdefault(client, set()).add(k)
        return members

    def _receipt(self, anchoring: Anchoring, k: int) -> AuxReceipt:
        position = 2 * anchoring.blocks.index(k)
        return seal(
            AuxReceipt(
                first_k=anchoring.first_k,
                last_k=anchoring.last_k,
                pub_data=anchoring.pub_data,
                address=anchoring.address,
                path=merkle.path(anchoring.tree, position),
            ),
            self.state.keys,
        )

    def issue_aux_receipts(
        self,
        anchoring: Anchoring,
        membership: typing.Optional[typing.Mapping[Identity, typing.Iterable[int]]] = None,
    ) -> typing.Dict[Identity, AuxReceipt]:
        """
        One receipt per client, anchored at the earliest epoch block the
        client transacted in.
        """
        if membership is None:
            membership = self.epoch_membership(anchoring)
        receipts = {}
        for client, ks in membership.items():
            included = sorted(set(ks) & set(anchoring.blocks))
            if not included:
                raise ClientNotInEpoch(
                    f"client {client.hex()} has no block in"
                    f" {anchoring.first_k}..{anchoring.last_k}"
                )
            receipts[client] = self._receipt(anchoring, included[0])
        return receipts

    def additional_aux_receipt(
        self, anchoring: Anchoring, client: Identity, k: int
    ) -> AuxReceipt:
        if k not in anchoring.blocks or client not in self.state.membership.get(k, ()):
            raise ClientNotInEpoch(f"client {client.hex()} did not transact in block {k}")
        return self._receipt(anchoring, k)
