"""
Public ledger interface and an append-only mock used as the reference clock.
"""
from __future__ import annotations

import logging
import struct
import time
import typing
from abc import ABCMeta, abstractmethod
from dataclasses import dataclass
from pathlib import Path

from notaria.exceptions import AddressUnresolvable, LedgerUnavailable, MalformedEncoding
from notaria.model import LedgerAddress, Timestamp

__all__ = ["DEFAULT_BLOCK_INTERVAL", "PublicLedger", "LedgerBlock", "MockLedger"]

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_INTERVAL = 600_000

_TIMESTAMP = struct.Struct(">Q")
_COUNT = struct.Struct(">I")


class PublicLedger(metaclass=ABCMeta):
    """
    What the auxiliary node and verifiers need from a public blockchain.
    """

    @abstractmethod
    def append(self, payload: bytes) -> LedgerAddress:
        raise NotImplementedError()

    @abstractmethod
    def get(self, address: LedgerAddress) -> typing.Tuple[bytes, Timestamp]:
        raise NotImplementedError()

    @abstractmethod
    def tip_time(self) -> Timestamp:
        raise NotImplementedError()


@dataclass(frozen=True)
class LedgerBlock:
    timestamp: Timestamp
    payloads: typing.Tuple[bytes, ...]

    def write(self) -> bytes:
        return (
            _TIMESTAMP.pack(self.timestamp)
            + _COUNT.pack(len(self.payloads))
            + b"".join(_COUNT.pack(len(payload)) + payload for payload in self.payloads)
        )


def _wall_clock() -> int:
    return int(time.time() * 1000)


class MockLedger(PublicLedger):
    """
    Single-writer, append-only ledger. Payloads wait in a pending block until
    `mine` seals it; the address handed out by `append` is final from the
    start. With `auto_mine` every append is sealed immediately.
    """

    def __init__(
        self,
        *,
        block_interval: int = DEFAULT_BLOCK_INTERVAL,
        clock: typing.Callable[[], int] = _wall_clock,
        genesis_height: int = 0,
        auto_mine: bool = True,
        path: typing.Optional[typing.Union[str, Path]] = None,
    ) -> None:
        self.block_interval = block_interval
        self.clock = clock
        self.genesis_height = genesis_height
        self.auto_mine = auto_mine
        self.path = Path(path) if path is not None else None
        self.blocks: typing.List[LedgerBlock] = []
        self.pending: typing.List[bytes] = []
        self.outage = False

    def __len__(self) -> int:
        return len(self.blocks)

    def append(self, payload: bytes) -> LedgerAddress:
        if self.outage:
            raise LedgerUnavailable("public ledger outage")
        address = LedgerAddress(
            block_height=self.genesis_height + len(self.blocks),
            tx_index=len(self.pending),
        )
        self.pending.append(bytes(payload))
        if self.auto_mine:
            self.mine()
        return address

    def next_block_time(self, now: int) -> int:
        return (now // self.block_interval + 1) * self.block_interval

    def mine(self, now: typing.Optional[int] = None) -> typing.Optional[LedgerBlock]:
        if not self.pending:
            return None
        timestamp = max(self.clock() if now is None else now, self.tip_time())
        block = LedgerBlock(Timestamp(timestamp), tuple(self.pending))
        self.blocks.append(block)
        self.pending = []
        if self.path is not None:
            with self.path.open("ab") as file:
                file.write(block.write())
        logger.debug(
            "mined public block %d at %d with %d payloads",
            self.genesis_height + len(self.blocks) - 1,
            timestamp,
            len(block.payloads),
        )
        return block

    def get(self, address: LedgerAddress) -> typing.Tuple[bytes, Timestamp]:
        position = address.block_height - self.genesis_height
        if not 0 <= position < len(self.blocks):
            raise AddressUnresolvable(f"no mined block at height {address.block_height}")
        block = self.blocks[position]
        if address.tx_index >= len(block.payloads):
            raise AddressUnresolvable(
                f"block {address.block_height} has no payload {address.tx_index}"
            )
        return block.payloads[address.tx_index], block.timestamp

    def tip_time(self) -> Timestamp:
        return self.blocks[-1].timestamp if self.blocks else Timestamp(0)

    def records(self) -> typing.Iterator[typing.Tuple[LedgerAddress, bytes, Timestamp]]:
        for position, block in enumerate(self.blocks):
            for index, payload in enumerate(block.payloads):
                address = LedgerAddress(self.genesis_height + position, index)
                yield address, payload, block.timestamp

    def save(self, path: typing.Union[str, Path]) -> None:
        Path(path).write_bytes(b"".join(block.write() for block in self.blocks))

    @classmethod
    def load(cls, path: typing.Union[str, Path], **kwargs: typing.Any) -> "MockLedger":
        ledger = cls(**kwargs)
        ledger.blocks = list(_read_blocks(Path(path).read_bytes()))
        return ledger


def _read_blocks(data: bytes) -> typing.Iterator[LedgerBlock]:
    offset = 0

    def take(size: int) -> bytes:
        nonlocal offset
        if offset + size > len(data):
            raise MalformedEncoding("truncated ledger record")
        chunk = data[offset : offset + size]
        offset += size
        return chunk

    while offset < len(data):
        (timestamp,) = _TIMESTAMP.unpack(take(_TIMESTAMP.size))
        (count,) = _COUNT.unpack(take(_COUNT.size))
        payloads = []
        for _ in range(count):
            (size,) = _COUNT.unpack(take(_COUNT.size))
            payloads.append(take(size))
        yield LedgerBlock(Timestamp(timestamp), tuple(payloads))
