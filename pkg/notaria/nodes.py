"""
Service nodes: transaction validation, first receipts, proxy block
construction, node receipts and block acceptance.
"""
from __future__ import annotations

import logging
import math
import struct
import typing
from dataclasses import dataclass, field
from pathlib import Path

from notaria import merkle
from notaria.crypto import Digest, Identity, KeyPair, encrypt, sign
from notaria.exceptions import (
    BadSignature,
    CAUnavailable,
    ClockRegression,
    EmptyMempool,
    EmptyTransactionSet,
    FutureTime,
    MalformedEncoding,
    RoleViolation,
    StaleTime,
    UnknownClient,
    UnknownIdentity,
)
from notaria.model import (
    ZERO_DIGEST,
    Block,
    BlockHeader,
    FirstReceipt,
    Receipt,
    SummaryTransaction,
    Timestamp,
    Transaction,
    seal,
    verify_seal,
)
from notaria.registry import Registry, Role

__all__ = [
    "DEFAULT_CLOCK_SKEW",
    "Acceptance",
    "ConsensusStub",
    "NodeState",
    "ServiceNode",
    "ChainLog",
    "client_root",
    "assemble_block",
    "make_first_receipt",
    "committer_for",
]

logger = logging.getLogger(__name__)

DEFAULT_CLOCK_SKEW = 2000

EphemeralSource = typing.Callable[[], bytes]


def canonical_order(
    transactions: typing.Iterable[Transaction],
) -> typing.List[Transaction]:
    """
    Order by the integer value of `data_sig`; ties (same data signed twice)
    fall back to the full encoding.
    """
    return sorted(transactions, key=lambda tx: (tx.sort_key, tx.encode()))


def client_root(transactions: typing.Sequence[Transaction]) -> Digest:
    if not transactions:
        raise EmptyTransactionSet("client root of an empty transaction set")
    leaves = [merkle.leaf_digest(tx.encode()) for tx in canonical_order(transactions)]
    return merkle.build(leaves).root


def make_first_receipt(validator: KeyPair, tx: Transaction) -> FirstReceipt:
    return FirstReceipt(
        tx_digest=tx.digest,
        validator=validator.identity,
        sig=sign(validator.secret_key, tx.encode()),
    )


def committer_for(k: int, node_identities: typing.Iterable[bytes]) -> Identity:
    """
    Round-robin over node identities in byte order; block 1 goes to the
    smallest identity.
    """
    ordered = sorted(node_identities)
    if not ordered:
        raise ValueError("no service nodes registered")
    return Identity(ordered[(k - 1) % len(ordered)])


def assemble_block(
    committer: KeyPair,
    prev_header: typing.Optional[BlockHeader],
    k: int,
    t_k: int,
    groups: typing.Mapping[Identity, typing.Sequence[Transaction]],
    aux_box_public: bytes,
    ephemeral: typing.Optional[EphemeralSource] = None,
) -> typing.Tuple[Block, typing.Dict[Identity, Receipt]]:
    """
    Build and sign block `k` over the given per-client transaction sets and
    issue one receipt per transacting client.
    """
    entries = []
    for client, transactions in groups.items():
        ordered = canonical_order(transactions)
        entries.append((client_root(ordered), client, ordered))
    entries.sort(key=lambda entry: entry[0])

    tree = merkle.build([root for root, _, _ in entries]) if entries else None
    header = seal(
        BlockHeader(
            prev_hash=prev_header.digest if prev_header is not None else ZERO_DIGEST,
            index=k,
            created_at=Timestamp(t_k),
            block_root=tree.root if tree is not None else ZERO_DIGEST,
            committer=committer.identity,
        ),
        committer,
    )
    summaries = tuple(
        SummaryTransaction(
            enc_identity=encrypt(
                aux_box_public, client, ephemeral() if ephemeral is not None else None
            ),
            client_root=root,
        )
        for root, client, _ in entries
    )
    block = Block(header, summaries, tuple(tuple(txs) for _, _, txs in entries))

    receipts: typing.Dict[Identity, Receipt] = {}
    for position, (root, client, transactions) in enumerate(entries):
        assert tree is not None
        receipts[client] = seal(
            Receipt(
                transactions=tuple(transactions),
                client_root=root,
                path=merkle.path(tree, position),
                committer=committer.identity,
            ),
            committer,
        )
    return block, receipts


@dataclass
class Acceptance:
    accepted: bool
    reason: typing.Optional[str] = None

    def __bool__(self) -> bool:
        return self.accepted


@dataclass
class ConsensusStub:
    """
    Stand-in for the proxy chain's consensus: a block is final when at least
    `quorum` of the contacted nodes accept it.
    """

    quorum: float = 1.0

    def __post_init__(self) -> None:
        if not 0 < self.quorum <= 1:
            raise ValueError(f"quorum must be in (0, 1], got {self.quorum}")

    def reached(self, acks: int, total: int) -> bool:
        if total == 0:
            return True
        return acks >= math.ceil(self.quorum * total - 1e-9)

    def run(self, block: Block, nodes: typing.Iterable["ServiceNode"]) -> bool:
        verdicts = [node.accept_block(block) for node in nodes]
        return self.reached(sum(map(bool, verdicts)), len(verdicts))


@dataclass
class NodeState:
    keys: KeyPair
    chain: typing.List[Block] = field(default_factory=list)
    mempool: typing.Dict[Identity, typing.List[Transaction]] = field(default_factory=dict)
    current_interval_start: Timestamp = Timestamp(0)


class ServiceNode:
    """
    One service node. Not thread safe: feed it one message at a time.
    """

    def __init__(
        self,
        keys: KeyPair,
        registry: Registry,
        *,
        clock_skew: int = DEFAULT_CLOCK_SKEW,
        skip_empty_intervals: bool = True,
        log: typing.Optional["ChainLog"] = None,
    ) -> None:
        if registry.key_for(keys.identity, Role.NODE) is None:
            raise RoleViolation(f"{keys.identity.hex()} is not a registered service node")
        self.state = NodeState(keys)
        self.registry = registry
        self.clock_skew = clock_skew
        self.skip_empty_intervals = skip_empty_intervals
        self.log = log
        self.outbox: typing.List[Transaction] = []

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.identity.hex()[:8]}>"

    @property
    def keys(self) -> KeyPair:
        return self.state.keys

    @property
    def identity(self) -> Identity:
        return self.state.keys.identity

    @property
    def chain(self) -> typing.List[Block]:
        return self.state.chain

    @property
    def tip(self) -> typing.Optional[BlockHeader]:
        return self.state.chain[-1].header if self.state.chain else None

    @property
    def tip_time(self) -> Timestamp:
        return self.state.current_interval_start

    @property
    def next_index(self) -> int:
        return self.tip.index + 1 if self.tip is not None else 1

    def pending(self) -> int:
        return sum(len(group) for group in self.state.mempool.values())

    def header(self, k: int) -> BlockHeader:
        for block in self.state.chain:
            if block.index == k:
                return block.header
        raise KeyError(k)

    def check_transaction(self, tx: Transaction, now: typing.Optional[int]) -> None:
        try:
            entry = self.registry.check_status(tx.client)
        except UnknownIdentity:
            raise UnknownClient(f"client {tx.client.hex()} not registered") from None
        if entry.role != Role.CLIENT:
            raise UnknownClient(f"{tx.client.hex()} is registered as {entry.role.name}")
        if not verify_seal(tx, entry.public_key):
            raise BadSignature(f"transaction {tx.digest.hex()} signature invalid")
        floor = self.tip_time
        if tx.claimed_time <= floor:
            raise StaleTime(f"claimed time {tx.claimed_time} <= interval start {floor}")
        if now is not None and tx.claimed_time > now + self.clock_skew:
            raise FutureTime(f"claimed time {tx.claimed_time} > {now} + {self.clock_skew}")

    def _queue(self, tx: Transaction) -> bool:
        group = self.state.mempool.setdefault(tx.client, [])
        if tx in group:
            return False
        group.append(tx)
        group[:] = canonical_order(group)
        return True

    def validate_transaction(self, tx: Transaction, now: int) -> FirstReceipt:
        """
        Check a transaction submitted directly by its client, queue it for
        broadcast and answer with the first receipt.
        """
        self.check_transaction(tx, now)
        if self._queue(tx):
            self.outbox.append(tx)
        logger.debug("%r validated %s", self, tx.digest.hex()[:16])
        return make_first_receipt(self.keys, tx)

    def handle_submission(
        self, tx: Transaction, now: int
    ) -> typing.Optional[FirstReceipt]:
        """
        Entry point for a client submission. Honest nodes always answer;
        `None` means the submission was swallowed.
        """
        return self.validate_transaction(tx, now)

    def accept_broadcast(self, tx: Transaction, now: typing.Optional[int] = None) -> None:
        self.check_transaction(tx, now)
        self._queue(tx)

    def drain_outbox(self) -> typing.List[Transaction]:
        outgoing, self.outbox = self.outbox, []
        return outgoing

    def build_block(
        self,
        t_k: int,
        aux_box_public: bytes,
        *,
        k: typing.Optional[int] = None,
        prev_header: typing.Optional[BlockHeader] = None,
        allow_empty: typing.Optional[bool] = None,
        ephemeral: typing.Optional[EphemeralSource] = None,
    ) -> typing.Tuple[Block, typing.Dict[Identity, Receipt]]:
        """
        Commit the current interval. Transactions claiming a time at or after
        `t_k` stay queued for the next interval.
        """
        prev_header = self.tip if prev_header is None else prev_header
        k = self.next_index if k is None else k
        if t_k <= self.tip_time:
            raise ClockRegression(f"block time {t_k} <= previous {self.tip_time}")
        groups = self.select_transactions(t_k)
        if allow_empty is None:
            allow_empty = not self.skip_empty_intervals
        if not groups and not allow_empty:
            raise EmptyMempool(f"nothing to commit in interval {k}")

        block, receipts = assemble_block(
            self.keys, prev_header, k, t_k, groups, aux_box_public, ephemeral
        )
        self._append(block)
        logger.debug(
            "%r committed block %d with %d clients", self, k, len(block.summaries)
        )
        return block, receipts

    def select_transactions(
        self, t_k: int
    ) -> typing.Dict[Identity, typing.List[Transaction]]:
        groups = {
            client: [tx for tx in group if tx.claimed_time < t_k]
            for client, group in self.state.mempool.items()
        }
        return {client: txs for client, txs in groups.items() if txs}

    def accept_block(self, block: Block) -> Acceptance:
        acceptance = self._examine(block)
        if acceptance:
            self._append(block)
        else:
            logger.warning(
                "%r rejected block %d: %s", self, block.index, acceptance.reason
            )
        return acceptance

    def _examine(self, block: Block) -> Acceptance:
        header = block.header
        committer_key = self.registry.key_for(header.committer, Role.NODE)
        if committer_key is None:
            return Acceptance(False, "UnknownCommitter")
        if not verify_seal(header, committer_key):
            return Acceptance(False, "BadHeaderSig")
        expected_prev = self.tip.digest if self.tip is not None else ZERO_DIGEST
        if header.prev_hash != expected_prev:
            return Acceptance(False, "PrevHashMismatch")
        if header.index != self.next_index:
            return Acceptance(False, "IndexMismatch")
        if header.created_at <= self.tip_time:
            return Acceptance(False, "ClockRegression")
        if len(block.phantom) != len(block.summaries):
            return Acceptance(False, "PhantomMissing")

        roots = []
        seen: typing.Set[Identity] = set()
        for summary, group in zip(block.summaries, block.phantom):
            if not group or len({tx.client for tx in group}) != 1:
                return Acceptance(False, "PhantomMalformed")
            # one summary per transacting client
            if group[0].client in seen:
                return Acceptance(False, "DuplicateClient")
            seen.add(group[0].client)
            for tx in group:
                try:
                    self.check_transaction(tx, None)
                except CAUnavailable:
                    return Acceptance(False, "CAUnavailable")
                except (BadSignature, UnknownClient, StaleTime, FutureTime) as exception:
                    return Acceptance(False, f"InvalidTransaction:{exception.reason}")
                if tx.claimed_time >= header.created_at:
                    return Acceptance(False, "InvalidTransaction:FutureTime")
            root = client_root(group)
            if root != summary.client_root:
                return Acceptance(False, "ClientRootMismatch")
            roots.append(root)
        if roots != sorted(roots):
            return Acceptance(False, "SummaryOrder")
        expected_root = merkle.build(roots).root if roots else ZERO_DIGEST
        if expected_root != header.block_root:
            return Acceptance(False, "BlockRootMismatch")
        return Acceptance(True)

    def _append(self, block: Block) -> None:
        self.state.chain.append(block)
        self.state.current_interval_start = block.header.created_at
        for tx in block.transactions():
            group = self.state.mempool.get(tx.client)
            if group and tx in group:
                group.remove(tx)
                if not group:
                    del self.state.mempool[tx.client]
        self._purge_stale()
        if self.log is not None:
            self.log.append(block)

    def _purge_stale(self) -> None:
        floor = self.state.current_interval_start
        for client in list(self.state.mempool):
            group = self.state.mempool[client]
            stale = [tx for tx in group if tx.claimed_time <= floor]
            if stale:
                logger.warning(
                    "%r dropped %d transactions that can no longer be committed",
                    self,
                    len(stale),
                )
                group[:] = [tx for tx in group if tx.claimed_time > floor]
            if not group:
                del self.state.mempool[client]

    def replace_chain(self, blocks: typing.Sequence[Block]) -> None:
        """
        Swap in a different chain wholesale. Only colluding nodes do this.
        """
        self.state.chain = list(blocks)
        self.state.current_interval_start = (
            self.tip.created_at if self.tip is not None else Timestamp(0)
        )
        if self.log is not None:
            self.log.rewrite(self.state.chain)

    def rollback(self) -> Block:
        """
        Undo the last block (consensus refused it) and requeue its
        transactions.
        """
        block = self.state.chain.pop()
        self.state.current_interval_start = (
            self.tip.created_at if self.tip is not None else Timestamp(0)
        )
        for tx in block.transactions():
            self._queue(tx)
        if self.log is not None:
            self.log.rewrite(self.state.chain)
        return block


class ChainLog:
    """
    Append-only node-local chain file: per block a 4-byte length and the full
    block encoding, phantom part included.
    """

    _LENGTH = struct.Struct(">I")

    def __init__(self, path: typing.Union[str, Path]) -> None:
        self.path = Path(path)

    def append(self, block: Block) -> None:
        data = block.encode()
        with self.path.open("ab") as file:
            file.write(self._LENGTH.pack(len(data)) + data)

    def rewrite(self, blocks: typing.Iterable[Block]) -> None:
        self.path.write_bytes(b"")
        for block in blocks:
            self.append(block)

    def read(self) -> typing.List[Block]:
        data = self.path.read_bytes() if self.path.exists() else b""
        blocks, offset = [], 0
        while offset < len(data):
            if offset + self._LENGTH.size > len(data):
                raise MalformedEncoding("truncated chain record length")
            (size,) = self._LENGTH.unpack_from(data, offset)
            offset += self._LENGTH.size
            if offset + size > len(data):
                raise MalformedEncoding("truncated chain record")
            blocks.append(Block.decode(data[offset : offset + size]))
            offset += size
        return blocks
