"""
Merkle trees with domain-separated hashing.

Leaves are hashed as H(0x00 || item) and internal nodes as
H(0x01 || left || right). An unpaired node at the end of a level is promoted
unchanged to the next level.
"""
from __future__ import annotations

import enum
import struct
import typing
from dataclasses import dataclass

from notaria.crypto import DIGEST_SIZE, Digest, digest
from notaria.exceptions import EmptyLeaves, IndexOutOfRange, MalformedEncoding

__all__ = [
    "LEAF_PREFIX",
    "NODE_PREFIX",
    "Side",
    "Step",
    "MerklePath",
    "MerkleTree",
    "leaf_digest",
    "node_digest",
    "build",
    "path",
    "verify_path",
    "fold_path",
]

LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"

_COUNT = struct.Struct(">I")
_STEP_SIZE = 1 + DIGEST_SIZE


class Side(enum.IntEnum):
    """
    Which side of the running hash the sibling sits on.
    """

    LEFT = 0
    RIGHT = 1


class Step(typing.NamedTuple):
    sibling: Digest
    side: Side


def leaf_digest(item: bytes) -> Digest:
    return digest(LEAF_PREFIX + item)


def node_digest(left: bytes, right: bytes) -> Digest:
    return digest(NODE_PREFIX + left + right)


@dataclass(frozen=True)
class MerklePath:
    steps: typing.Tuple[Step, ...] = ()

    def __len__(self) -> int:
        return len(self.steps)

    def encode(self) -> bytes:
        return _COUNT.pack(len(self.steps)) + b"".join(
            bytes([step.side]) + step.sibling for step in self.steps
        )

    @classmethod
    def read(cls, data: bytes, offset: int = 0) -> typing.Tuple["MerklePath", int]:
        """
        Parse a path starting at `offset`, return it with the offset just
        past it.
        """
        if offset + _COUNT.size > len(data):
            raise MalformedEncoding("truncated path count")
        (count,) = _COUNT.unpack_from(data, offset)
        offset += _COUNT.size
        end = offset + count * _STEP_SIZE
        if end > len(data):
            raise MalformedEncoding("truncated path steps")
        steps = []
        for start in range(offset, end, _STEP_SIZE):
            side = data[start]
            if side not in (Side.LEFT, Side.RIGHT):
                raise MalformedEncoding(f"invalid path side byte {side}")
            steps.append(
                Step(Digest(data[start + 1 : start + _STEP_SIZE]), Side(side))
            )
        return cls(tuple(steps)), end

    @classmethod
    def decode(cls, data: bytes) -> "MerklePath":
        value, end = cls.read(data)
        if end != len(data):
            raise MalformedEncoding("trailing bytes after path")
        return value

    def position(self, leaf_count: int) -> typing.Optional[int]:
        """
        Leaf index this path starts from in a tree of `leaf_count` leaves,
        or None when no index has this shape.
        """
        if leaf_count < 1:
            return None
        widths = _level_widths(leaf_count)
        if len(self.steps) > len(widths):
            return None
        # walk down from the root, consuming steps from the top of the path
        pending = list(self.steps)
        index = 0
        for width in reversed(widths):
            index *= 2
            if index == width - 1:
                continue
            if not pending:
                return None
            if pending.pop().side == Side.LEFT:
                index += 1
        return None if pending else index


@dataclass(frozen=True)
class MerkleTree:
    levels: typing.Tuple[typing.Tuple[Digest, ...], ...]

    @property
    def leaves(self) -> typing.Tuple[Digest, ...]:
        return self.levels[0]

    @property
    def root(self) -> Digest:
        return self.levels[-1][0]

    def __len__(self) -> int:
        return len(self.levels[0])


def build(leaves: typing.Sequence[bytes]) -> MerkleTree:
    if not leaves:
        raise EmptyLeaves("cannot build a Merkle tree without leaves")
    level = tuple(Digest(bytes(leaf)) for leaf in leaves)
    levels = [level]
    while len(level) > 1:
        paired = [
            node_digest(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)
        ]
        if len(level) % 2:
            paired.append(level[-1])
        level = tuple(paired)
        levels.append(level)
    return MerkleTree(tuple(levels))


def path(tree: MerkleTree, leaf_index: int) -> MerklePath:
    if not 0 <= leaf_index < len(tree):
        raise IndexOutOfRange(f"leaf {leaf_index} not in a tree of {len(tree)}")
    steps = []
    index = leaf_index
    for level in tree.levels[:-1]:
        if index % 2:
            steps.append(Step(level[index - 1], Side.LEFT))
        elif index + 1 < len(level):
            steps.append(Step(level[index + 1], Side.RIGHT))
        index //= 2
    return MerklePath(tuple(steps))


def fold_path(leaf: bytes, merkle_path: MerklePath) -> Digest:
    current = Digest(bytes(leaf))
    for sibling, side in merkle_path.steps:
        if side == Side.LEFT:
            current = node_digest(sibling, current)
        else:
            current = node_digest(current, sibling)
    return current


def verify_path(leaf: bytes, merkle_path: MerklePath, root: bytes) -> bool:
    return fold_path(leaf, merkle_path) == root


def _level_widths(leaf_count: int) -> typing.List[int]:
    """
    Node count of every level below the root, leaves first.
    """
    widths = []
    width = leaf_count
    while width > 1:
        widths.append(width)
        width = (width + 1) // 2
    return widths
