"""
The certificate authority, modelled as a static key registry signed by the
CA key.
"""
from __future__ import annotations

import enum
import struct
import typing
from dataclasses import dataclass
from pathlib import Path

from notaria.crypto import (
    DIGEST_SIZE,
    KEY_SIZE,
    SIGNATURE_SIZE,
    ZERO_SIGNATURE,
    Identity,
    KeyPair,
    digest,
    sign_container,
    verify_container,
)
from notaria.exceptions import (
    BadRegistrySignature,
    CAUnavailable,
    DuplicateIdentity,
    MalformedEncoding,
    UnknownIdentity,
)

__all__ = ["Role", "RegistryEntry", "Registry", "registry_lookup"]

_COUNT = struct.Struct(">I")
_ENTRY_SIZE = DIGEST_SIZE + 1 + KEY_SIZE * 2


class Role(enum.IntEnum):
    CLIENT = 0
    NODE = 1
    AUXILIARY = 2


@dataclass(frozen=True)
class RegistryEntry:
    identity: Identity
    role: Role
    public_key: bytes
    box_public: bytes

    def write(self) -> bytes:
        return self.identity + bytes([self.role]) + self.public_key + self.box_public

    @classmethod
    def parse(cls, data: bytes) -> "RegistryEntry":
        try:
            role = Role(data[DIGEST_SIZE])
        except ValueError as exception:
            raise MalformedEncoding(
                f"unknown role byte {data[DIGEST_SIZE]}"
            ) from exception
        entry = cls(
            identity=Identity(data[:DIGEST_SIZE]),
            role=role,
            public_key=data[DIGEST_SIZE + 1 : DIGEST_SIZE + 1 + KEY_SIZE],
            box_public=data[DIGEST_SIZE + 1 + KEY_SIZE : _ENTRY_SIZE],
        )
        if digest(entry.public_key) != entry.identity:
            raise MalformedEncoding(
                f"identity {entry.identity.hex()} does not match its key"
            )
        return entry


class Registry:
    """
    Identity → (key, role) map. Looking up an already-known key always works
    from the local snapshot; registering new keys and fresh status checks
    need the CA to be `online`.
    """

    def __init__(
        self,
        entries: typing.Iterable[RegistryEntry] = (),
        ca_public: typing.Optional[bytes] = None,
    ) -> None:
        self.entries: typing.Dict[Identity, RegistryEntry] = {}
        self.ca_public = ca_public
        self.online = True
        for entry in entries:
            self._add(entry)

    def __contains__(self, identity: object) -> bool:
        return identity in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> typing.Iterator[RegistryEntry]:
        return iter(sorted(self.entries.values(), key=lambda entry: entry.identity))

    def _add(self, entry: RegistryEntry) -> None:
        if entry.identity in self.entries:
            raise DuplicateIdentity(f"identity {entry.identity.hex()} already registered")
        self.entries[entry.identity] = entry

    def register(self, keys: KeyPair, role: Role) -> RegistryEntry:
        if not self.online:
            raise CAUnavailable("certificate authority unreachable, cannot register")
        entry = RegistryEntry(keys.identity, Role(role), keys.public_key, keys.box_public)
        self._add(entry)
        return entry

    def revoke(self, identity: Identity) -> None:
        self.lookup(identity)
        del self.entries[identity]

    def lookup(self, identity: bytes) -> RegistryEntry:
        try:
            return self.entries[Identity(bytes(identity))]
        except KeyError:
            raise UnknownIdentity(
                f"identity {bytes(identity).hex()} not registered"
            ) from None

    def check_status(self, identity: bytes) -> RegistryEntry:
        """
        Lookup that needs a live CA, as done before admitting new data.
        """
        if not self.online:
            raise CAUnavailable("certificate authority unreachable, cannot check status")
        return self.lookup(identity)

    def key_for(self, identity: bytes, role: Role) -> typing.Optional[bytes]:
        entry = self.entries.get(Identity(bytes(identity)))
        if entry is None or entry.role != role:
            return None
        return entry.public_key

    def with_role(self, role: Role) -> typing.List[RegistryEntry]:
        return [entry for entry in self if entry.role == role]

    def encode(self, ca: KeyPair) -> bytes:
        entries = list(self)
        body = (
            _COUNT.pack(len(entries))
            + b"".join(entry.write() for entry in entries)
            + ca.public_key
            + ZERO_SIGNATURE
        )
        self.ca_public = ca.public_key
        return sign_container(ca.secret_key, body)

    @classmethod
    def decode(
        cls, data: bytes, ca_identity: typing.Optional[bytes] = None
    ) -> "Registry":
        if len(data) < _COUNT.size + KEY_SIZE + SIGNATURE_SIZE:
            raise MalformedEncoding("registry file too short")
        (count,) = _COUNT.unpack_from(data)
        if len(data) != _COUNT.size + count * _ENTRY_SIZE + KEY_SIZE + SIGNATURE_SIZE:
            raise MalformedEncoding("registry length does not match its entry count")
        ca_public = data[-(KEY_SIZE + SIGNATURE_SIZE) : -SIGNATURE_SIZE]
        if ca_identity is not None and digest(ca_public) != ca_identity:
            raise BadRegistrySignature("registry signed by an unexpected authority")
        if not verify_container(ca_public, data):
            raise BadRegistrySignature("registry signature does not verify")
        entries = (
            RegistryEntry.parse(data[start : start + _ENTRY_SIZE])
            for start in range(_COUNT.size, _COUNT.size + count * _ENTRY_SIZE, _ENTRY_SIZE)
        )
        return cls(entries, ca_public=ca_public)

    def save(self, path: typing.Union[str, Path], ca: KeyPair) -> None:
        Path(path).write_bytes(self.encode(ca))

    @classmethod
    def load(
        cls, path: typing.Union[str, Path], ca_identity: typing.Optional[bytes] = None
    ) -> "Registry":
        return cls.decode(Path(path).read_bytes(), ca_identity)


def registry_lookup(registry: Registry, identity: bytes) -> RegistryEntry:
    return registry.lookup(identity)
