"""
Classic timestamping schemes kept as independent oracles: a trusted
authority signing (hash, time), with or without an extra hashing step, and
tree-linked rounds chained into a public repository of roots.
"""
from __future__ import annotations

import enum
import struct
import typing
from dataclasses import dataclass, field
from pathlib import Path

from notaria import merkle
from notaria.crypto import (
    DIGEST_SIZE,
    SIGNATURE_SIZE,
    ZERO_SIGNATURE,
    Digest,
    KeyPair,
    Signature,
    digest,
)
from notaria.exceptions import EmptyRound, MalformedEncoding, UnknownRound
from notaria.merkle import MerklePath
from notaria.model import (
    ZERO_DIGEST,
    Encodable,
    Reader,
    Signed,
    Timestamp,
    seal,
    verify_seal,
)

__all__ = [
    "AuthorityVariant",
    "AuthorityReceipt",
    "authority_payload",
    "authority_timestamp",
    "verify_authority_receipt",
    "LinkedRound",
    "LinkedReceipt",
    "LinkedRepository",
    "chain_root",
    "linked_round",
    "verify_linked_receipt",
]

_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")


class AuthorityVariant(enum.IntEnum):
    PLAIN = 0
    RFC3161 = 1


def authority_payload(h_d: bytes, t: int, variant: AuthorityVariant) -> bytes:
    statement = bytes(h_d) + _U64.pack(t)
    if variant == AuthorityVariant.PLAIN:
        return statement
    return digest(statement)


@dataclass(frozen=True)
class AuthorityReceipt(Signed):
    variant: AuthorityVariant
    payload: bytes
    sig: Signature = ZERO_SIGNATURE

    def write(self) -> bytes:
        return bytes([self.variant]) + self.payload + self.sig

    @classmethod
    def read(cls, reader: Reader) -> "AuthorityReceipt":
        try:
            variant = AuthorityVariant(reader.take(1)[0])
        except ValueError:
            raise MalformedEncoding("unknown authority receipt variant") from None
        size = DIGEST_SIZE
        if variant == AuthorityVariant.PLAIN:
            size += _U64.size
        return cls(variant, reader.take(size), Signature(reader.take(SIGNATURE_SIZE)))


def authority_timestamp(
    authority: KeyPair,
    h_d: bytes,
    t: int,
    variant: AuthorityVariant = AuthorityVariant.PLAIN,
) -> AuthorityReceipt:
    return seal(AuthorityReceipt(variant, authority_payload(h_d, t, variant)), authority)


def verify_authority_receipt(
    receipt: AuthorityReceipt, authority_public: bytes, h_d: bytes, t: int
) -> bool:
    return verify_seal(receipt, authority_public) and receipt.payload == authority_payload(
        h_d, t, receipt.variant
    )


def chain_root(previous: bytes, interval_root: bytes) -> Digest:
    return digest(bytes(previous) + bytes(interval_root))


@dataclass(frozen=True)
class LinkedReceipt(Encodable):
    """
    What a requester gets back: its request, the round and its time, and
    the path from its leaf to the round's interval root.
    """

    round: int
    created_at: Timestamp
    request: bytes
    path: MerklePath
    interval_root: Digest

    def write(self) -> bytes:
        return (
            _U64.pack(self.round)
            + _U64.pack(self.created_at)
            + _U32.pack(len(self.request))
            + self.request
            + self.path.encode()
            + self.interval_root
        )

    @classmethod
    def read(cls, reader: Reader) -> "LinkedReceipt":
        round_index = reader.u64()
        created_at = Timestamp(reader.u64())
        request = reader.take(reader.u32())
        path = reader.path()
        interval_root = Digest(reader.take(DIGEST_SIZE))
        return cls(round_index, created_at, request, path, interval_root)


@dataclass(frozen=True)
class LinkedRound:
    index: int
    created_at: Timestamp
    requests: typing.Tuple[bytes, ...]
    interval_root: Digest
    chained_root: Digest
    tree: merkle.MerkleTree = field(repr=False, compare=False)


def linked_round(
    requests: typing.Sequence[bytes],
    previous: bytes = ZERO_DIGEST,
    *,
    index: int = 1,
    created_at: int = 0,
) -> typing.Tuple[LinkedRound, typing.List[LinkedReceipt]]:
    if not requests:
        raise EmptyRound(f"round {index} has no requests")
    tree = merkle.build([merkle.leaf_digest(request) for request in requests])
    linked = LinkedRound(
        index=index,
        created_at=Timestamp(created_at),
        requests=tuple(bytes(request) for request in requests),
        interval_root=tree.root,
        chained_root=chain_root(previous, tree.root),
        tree=tree,
    )
    receipts = [
        LinkedReceipt(
            index, Timestamp(created_at), bytes(request), merkle.path(tree, i), tree.root
        )
        for i, request in enumerate(requests)
    ]
    return linked, receipts


def verify_linked_receipt(
    receipt: LinkedReceipt, repository: typing.Sequence[bytes]
) -> bool:
    """
    `repository[l]` holds the chained root of round l, `repository[0]` the
    all-zero start value.
    """
    if not 1 <= receipt.round < len(repository):
        raise UnknownRound(
            f"round {receipt.round} not in a repository of {len(repository) - 1}"
        )
    leaf = merkle.leaf_digest(receipt.request)
    if not merkle.verify_path(leaf, receipt.path, receipt.interval_root):
        return False
    expected = chain_root(repository[receipt.round - 1], receipt.interval_root)
    return expected == repository[receipt.round]


class LinkedRepository:
    """
    The widely published list of chained roots, plus the rounds that built
    it so the chain can be replayed.
    """

    def __init__(self, roots: typing.Optional[typing.Iterable[bytes]] = None) -> None:
        self.roots: typing.List[Digest] = [Digest(bytes(root)) for root in roots or ()]
        if not self.roots:
            self.roots.append(ZERO_DIGEST)
        if self.roots[0] != ZERO_DIGEST:
            raise MalformedEncoding("repository must start from the all-zero root")
        self.rounds: typing.List[LinkedRound] = []

    def __len__(self) -> int:
        return len(self.roots) - 1

    @property
    def head(self) -> Digest:
        return self.roots[-1]

    def append(
        self, requests: typing.Sequence[bytes], created_at: int = 0
    ) -> typing.Tuple[LinkedRound, typing.List[LinkedReceipt]]:
        linked, receipts = linked_round(
            requests, self.head, index=len(self.roots), created_at=created_at
        )
        self.rounds.append(linked)
        self.roots.append(linked.chained_root)
        return linked, receipts

    def replay(self) -> bool:
        """
        Recompute every chained root from the stored rounds.
        """
        previous: bytes = ZERO_DIGEST
        for linked, stored in zip(self.rounds, self.roots[1:]):
            leaves = [merkle.leaf_digest(request) for request in linked.requests]
            previous = chain_root(previous, merkle.build(leaves).root)
            if previous != stored:
                return False
        return len(self.rounds) == len(self)

    def verify(self, receipt: LinkedReceipt) -> bool:
        return verify_linked_receipt(receipt, self.roots)

    def encode(self) -> bytes:
        return b"".join(self.roots)

    @classmethod
    def decode(cls, data: bytes) -> "LinkedRepository":
        if not data or len(data) % DIGEST_SIZE:
            raise MalformedEncoding("repository length is not a whole number of digests")
        return cls(data[i : i + DIGEST_SIZE] for i in range(0, len(data), DIGEST_SIZE))

    def save(self, path: typing.Union[str, Path]) -> None:
        Path(path).write_bytes(self.encode())

    @classmethod
    def load(cls, path: typing.Union[str, Path]) -> "LinkedRepository":
        return cls.decode(Path(path).read_bytes())
