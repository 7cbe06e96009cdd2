"""
Protocol messages and their canonical binary encodings.

All integers are big-endian and fixed-width; variable-length lists carry a
4-byte count. The encodings defined here are the exact bytes that get
hashed and signed. Signed types end in a 64-byte signature slot.
"""
from __future__ import annotations

import dataclasses
import enum
import struct
import typing
from dataclasses import dataclass

from notaria.crypto import (
    DIGEST_SIZE,
    SIGNATURE_SIZE,
    ZERO_SIGNATURE,
    Ciphertext,
    Digest,
    Identity,
    KeyPair,
    Signature,
    digest,
    sign,
    sign_container,
    verify_container,
)
from notaria.exceptions import MalformedEncoding
from notaria.merkle import MerklePath

__all__ = [
    "Timestamp",
    "Reader",
    "Encodable",
    "Signed",
    "Identity",
    "ZERO_DIGEST",
    "Transaction",
    "FirstReceipt",
    "BlockHeader",
    "SummaryTransaction",
    "Block",
    "Receipt",
    "PubData",
    "LedgerAddress",
    "AuxReceipt",
    "encode",
    "decode",
    "seal",
    "verify_seal",
    "make_transaction",
    "as_json",
    "from_json",
]

Timestamp = typing.NewType("Timestamp", int)

ZERO_DIGEST = Digest(bytes(DIGEST_SIZE))

_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")

Value = typing.TypeVar("Value", bound="Encodable")


class Reader:
    def __init__(self, data: bytes, offset: int = 0) -> None:
        self.data = data
        self.offset = offset

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise MalformedEncoding(
                f"need {size} bytes at offset {self.offset},"
                f" have {len(self.data) - self.offset}"
            )
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(_U32.size))[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(_U64.size))[0]

    def path(self) -> MerklePath:
        value, self.offset = MerklePath.read(self.data, self.offset)
        return value

    def done(self) -> None:
        if self.offset != len(self.data):
            raise MalformedEncoding(
                f"{len(self.data) - self.offset} trailing bytes after message"
            )


def _check_width(name: str, value: bytes, size: int) -> None:
    if len(value) != size:
        raise MalformedEncoding(f"{name} must be {size} bytes, got {len(value)}")


class Encodable:
    """
    Mixin giving a message `encode`/`decode` over `write`/`read`.
    """

    def write(self) -> bytes:
        raise NotImplementedError()

    @classmethod
    def read(cls: typing.Type[Value], reader: Reader) -> Value:
        raise NotImplementedError()

    def encode(self) -> bytes:
        return self.write()

    @classmethod
    def decode(cls: typing.Type[Value], data: bytes) -> Value:
        reader = Reader(bytes(data))
        value = cls.read(reader)
        reader.done()
        return value

    @property
    def digest(self) -> Digest:
        return digest(self.encode())


class Signed(Encodable):
    """
    A container whose trailing 64 bytes are the signature slot.
    """

    signature_field: typing.ClassVar[str] = "sig"

    @property
    def signature(self) -> Signature:
        return getattr(self, self.signature_field)


@dataclass(frozen=True)
class Transaction(Signed):
    """
    A client's self-signed claim of knowing some data at `claimed_time`.
    `data_sig` signs the hash of the data, never the data itself.
    """

    data_sig: Signature
    claimed_time: Timestamp
    client: Identity
    self_sig: Signature = ZERO_SIGNATURE

    SIZE: typing.ClassVar[int] = SIGNATURE_SIZE + 8 + DIGEST_SIZE + SIGNATURE_SIZE
    signature_field: typing.ClassVar[str] = "self_sig"

    def __post_init__(self) -> None:
        _check_width("data_sig", self.data_sig, SIGNATURE_SIZE)
        _check_width("client", self.client, DIGEST_SIZE)
        _check_width("self_sig", self.self_sig, SIGNATURE_SIZE)

    @property
    def sort_key(self) -> int:
        return int.from_bytes(self.data_sig, "big")

    def write(self) -> bytes:
        return (
            self.data_sig + _U64.pack(self.claimed_time) + self.client + self.self_sig
        )

    @classmethod
    def read(cls, reader: Reader) -> "Transaction":
        return cls(
            data_sig=Signature(reader.take(SIGNATURE_SIZE)),
            claimed_time=Timestamp(reader.u64()),
            client=Identity(reader.take(DIGEST_SIZE)),
            self_sig=Signature(reader.take(SIGNATURE_SIZE)),
        )


@dataclass(frozen=True)
class FirstReceipt(Encodable):
    """
    The validator's signature over the full transaction bytes.
    """

    tx_digest: Digest
    validator: Identity
    sig: Signature

    SIZE: typing.ClassVar[int] = DIGEST_SIZE * 2 + SIGNATURE_SIZE

    def write(self) -> bytes:
        return self.tx_digest + self.validator + self.sig

    @classmethod
    def read(cls, reader: Reader) -> "FirstReceipt":
        return cls(
            tx_digest=Digest(reader.take(DIGEST_SIZE)),
            validator=Identity(reader.take(DIGEST_SIZE)),
            sig=Signature(reader.take(SIGNATURE_SIZE)),
        )


@dataclass(frozen=True)
class BlockHeader(Signed):
    prev_hash: Digest
    index: int
    created_at: Timestamp
    block_root: Digest
    committer: Identity
    sig: Signature = ZERO_SIGNATURE

    SIZE: typing.ClassVar[int] = DIGEST_SIZE + 8 + 8 + DIGEST_SIZE * 2 + SIGNATURE_SIZE

    def __post_init__(self) -> None:
        _check_width("prev_hash", self.prev_hash, DIGEST_SIZE)
        _check_width("block_root", self.block_root, DIGEST_SIZE)
        _check_width("committer", self.committer, DIGEST_SIZE)

    def write(self) -> bytes:
        return (
            self.prev_hash
            + _U64.pack(self.index)
            + _U64.pack(self.created_at)
            + self.block_root
            + self.committer
            + self.sig
        )

    @classmethod
    def read(cls, reader: Reader) -> "BlockHeader":
        return cls(
            prev_hash=Digest(reader.take(DIGEST_SIZE)),
            index=reader.u64(),
            created_at=Timestamp(reader.u64()),
            block_root=Digest(reader.take(DIGEST_SIZE)),
            committer=Identity(reader.take(DIGEST_SIZE)),
            sig=Signature(reader.take(SIGNATURE_SIZE)),
        )


@dataclass(frozen=True)
class SummaryTransaction(Encodable):
    enc_identity: Ciphertext
    client_root: Digest

    def write(self) -> bytes:
        return _U32.pack(len(self.enc_identity)) + self.enc_identity + self.client_root

    @classmethod
    def read(cls, reader: Reader) -> "SummaryTransaction":
        size = reader.u32()
        return cls(
            enc_identity=Ciphertext(reader.take(size)),
            client_root=Digest(reader.take(DIGEST_SIZE)),
        )


@dataclass(frozen=True)
class Block(Encodable):
    """
    A proxy-chain block. `phantom` holds one transaction list per summary,
    in summary order; it is empty in any client-facing view.
    """

    header: BlockHeader
    summaries: typing.Tuple[SummaryTransaction, ...]
    phantom: typing.Tuple[typing.Tuple[Transaction, ...], ...] = ()

    @property
    def index(self) -> int:
        return self.header.index

    def public_view(self) -> "Block":
        return dataclasses.replace(self, phantom=())

    def transactions(self) -> typing.Iterator[Transaction]:
        for group in self.phantom:
            yield from group

    def write(self) -> bytes:
        parts = [self.header.write(), _U32.pack(len(self.summaries))]
        parts.extend(summary.write() for summary in self.summaries)
        parts.append(_U32.pack(len(self.phantom)))
        for group in self.phantom:
            parts.append(_U32.pack(len(group)))
            parts.extend(tx.write() for tx in group)
        return b"".join(parts)

    @classmethod
    def read(cls, reader: Reader) -> "Block":
        header = BlockHeader.read(reader)
        summaries = tuple(SummaryTransaction.read(reader) for _ in range(reader.u32()))
        phantom = tuple(
            tuple(Transaction.read(reader) for _ in range(reader.u32()))
            for _ in range(reader.u32())
        )
        if phantom and len(phantom) != len(summaries):
            raise MalformedEncoding("phantom groups do not match summaries")
        return cls(header, summaries, phantom)


@dataclass(frozen=True)
class Receipt(Signed):
    """
    Committer-signed evidence that T_C hashes to R_C and R_C sits under the
    block root along `path`.
    """

    transactions: typing.Tuple[Transaction, ...]
    client_root: Digest
    path: MerklePath
    committer: Identity
    sig: Signature = ZERO_SIGNATURE

    def write(self) -> bytes:
        return b"".join(
            [
                _U32.pack(len(self.transactions)),
                *(tx.write() for tx in self.transactions),
                self.client_root,
                self.path.encode(),
                self.committer,
                self.sig,
            ]
        )

    @classmethod
    def read(cls, reader: Reader) -> "Receipt":
        transactions = tuple(Transaction.read(reader) for _ in range(reader.u32()))
        return cls(
            transactions=transactions,
            client_root=Digest(reader.take(DIGEST_SIZE)),
            path=reader.path(),
            committer=Identity(reader.take(DIGEST_SIZE)),
            sig=Signature(reader.take(SIGNATURE_SIZE)),
        )


@dataclass(frozen=True)
class PubData(Encodable):
    anchorer: Identity
    last_anchor_index: int
    epoch_length: int
    aux_root: Digest

    SIZE: typing.ClassVar[int] = DIGEST_SIZE + 8 + 8 + DIGEST_SIZE

    def write(self) -> bytes:
        return (
            self.anchorer
            + _U64.pack(self.last_anchor_index)
            + _U64.pack(self.epoch_length)
            + self.aux_root
        )

    @classmethod
    def read(cls, reader: Reader) -> "PubData":
        return cls(
            anchorer=Identity(reader.take(DIGEST_SIZE)),
            last_anchor_index=reader.u64(),
            epoch_length=reader.u64(),
            aux_root=Digest(reader.take(DIGEST_SIZE)),
        )


@dataclass(frozen=True, order=True)
class LedgerAddress(Encodable):
    block_height: int
    tx_index: int

    SIZE: typing.ClassVar[int] = 12

    def write(self) -> bytes:
        return _U64.pack(self.block_height) + _U32.pack(self.tx_index)

    @classmethod
    def read(cls, reader: Reader) -> "LedgerAddress":
        return cls(block_height=reader.u64(), tx_index=reader.u32())


@dataclass(frozen=True)
class AuxReceipt(Signed):
    first_k: int
    last_k: int
    pub_data: PubData
    address: LedgerAddress
    path: MerklePath
    sig: Signature = ZERO_SIGNATURE

    def write(self) -> bytes:
        return (
            _U64.pack(self.first_k)
            + _U64.pack(self.last_k)
            + self.pub_data.write()
            + self.address.write()
            + self.path.encode()
            + self.sig
        )

    @classmethod
    def read(cls, reader: Reader) -> "AuxReceipt":
        return cls(
            first_k=reader.u64(),
            last_k=reader.u64(),
            pub_data=PubData.read(reader),
            address=LedgerAddress.read(reader),
            path=reader.path(),
            sig=Signature(reader.take(SIGNATURE_SIZE)),
        )


def encode(value: Encodable) -> bytes:
    return value.encode()


def decode(data: bytes, cls: typing.Type[Value]) -> Value:
    return cls.decode(data)


SignedValue = typing.TypeVar("SignedValue", bound=Signed)


def seal(value: SignedValue, keys: KeyPair) -> SignedValue:
    """
    Zero the signature slot of `value`, sign it and return the signed copy.
    """
    slot = {value.signature_field: ZERO_SIGNATURE}
    blank = dataclasses.replace(value, **slot)  # type: ignore
    return type(value).decode(sign_container(keys.secret_key, blank.encode()))


def verify_seal(value: Signed, public_key: bytes) -> bool:
    return verify_container(public_key, value.encode())


def make_transaction(client: KeyPair, data: bytes, claimed_time: int) -> Transaction:
    unsigned = Transaction(
        data_sig=sign(client.secret_key, digest(data)),
        claimed_time=Timestamp(claimed_time),
        client=client.identity,
    )
    return seal(unsigned, client)


def _jsonable(value: typing.Any) -> typing.Any:
    if isinstance(value, bytes):
        return value.hex()
    if isinstance(value, enum.Enum):
        return value.name.lower()
    if isinstance(value, MerklePath):
        return [
            {"side": step.side.name.lower(), "sibling": step.sibling.hex()}
            for step in value.steps
        ]
    if dataclasses.is_dataclass(value):
        return {
            field.name: _jsonable(getattr(value, field.name))
            for field in dataclasses.fields(value)
        }
    if isinstance(value, (tuple, list)):
        return [_jsonable(item) for item in value]
    return value


def as_json(value: Encodable, **metadata: typing.Any) -> typing.Dict[str, typing.Any]:
    """
    Human-readable mirror of a message. The canonical bytes travel along in
    `encoded`; unsigned extras (such as a receipt's block index) go under
    `metadata`.
    """
    document = {
        "type": type(value).__name__,
        "fields": _jsonable(value),
        "encoded": value.encode().hex(),
    }
    if metadata:
        document["metadata"] = _jsonable(metadata)
    return document


def from_json(document: typing.Mapping[str, typing.Any], cls: typing.Type[Value]) -> Value:
    try:
        if document["type"] != cls.__name__:
            raise MalformedEncoding(f"expected {cls.__name__}, got {document['type']}")
        return cls.decode(bytes.fromhex(document["encoded"]))
    except (KeyError, TypeError, ValueError) as exception:
        raise MalformedEncoding(f"invalid JSON {cls.__name__}") from exception
