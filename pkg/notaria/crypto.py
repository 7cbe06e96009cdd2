"""
Signature, hash and public-key encryption primitives.

Every signed message in notaria is a *container*: the contents followed by a
64-byte signature slot. The signature is computed over the contents with the
slot zeroed and then written into the slot.
"""
from __future__ import annotations

import hashlib
import os
import typing
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from notaria.exceptions import (
    CryptoError,
    DecryptionFailure,
    SlotNotZeroed,
    SlotOutOfBounds,
)

__all__ = [
    "DIGEST_SIZE",
    "SIGNATURE_SIZE",
    "KEY_SIZE",
    "Digest",
    "Signature",
    "Ciphertext",
    "Identity",
    "KeyPair",
    "keygen",
    "sign",
    "verify_sig",
    "sign_container",
    "verify_container",
    "digest",
    "encrypt",
    "decrypt",
]

DIGEST_SIZE = 32
SIGNATURE_SIZE = 64
KEY_SIZE = 32

Digest = typing.NewType("Digest", bytes)
Signature = typing.NewType("Signature", bytes)
Ciphertext = typing.NewType("Ciphertext", bytes)
Identity = typing.NewType("Identity", bytes)

ZERO_SIGNATURE = bytes(SIGNATURE_SIZE)

_BOX_KEY_LABEL = b"notaria/box-key"
_BOX_INFO = b"notaria/summary"
_BOX_NONCE = bytes(12)


def digest(msg: bytes) -> Digest:
    return Digest(hashlib.sha256(msg).digest())


def _raw_public(key: typing.Union[Ed25519PrivateKey, X25519PrivateKey]) -> bytes:
    return key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)


@dataclass(frozen=True)
class KeyPair:
    """
    Signing key material of one participant, plus the box key used to
    receive encrypted summary identities.
    """

    public_key: bytes
    secret_key: bytes = field(repr=False)
    box_public: bytes
    box_secret: bytes = field(repr=False)

    @property
    def identity(self) -> Identity:
        return Identity(digest(self.public_key))


def keygen(seed: bytes) -> KeyPair:
    """
    Derive a key pair from 32 bytes of entropy. The same seed always yields
    the same keys.
    """
    if len(seed) != KEY_SIZE:
        raise ValueError(f"seed must be {KEY_SIZE} bytes, got {len(seed)}")
    signing = Ed25519PrivateKey.from_private_bytes(seed)
    box_secret = digest(_BOX_KEY_LABEL + seed)
    box = X25519PrivateKey.from_private_bytes(box_secret)
    return KeyPair(
        public_key=_raw_public(signing),
        secret_key=bytes(seed),
        box_public=_raw_public(box),
        box_secret=bytes(box_secret),
    )


def sign(sk: bytes, msg: bytes) -> Signature:
    return Signature(Ed25519PrivateKey.from_private_bytes(sk).sign(msg))


def verify_sig(pk: bytes, msg: bytes, sig: bytes) -> bool:
    if len(sig) != SIGNATURE_SIZE:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(pk).verify(sig, msg)
    except (InvalidSignature, ValueError):
        return False
    return True


def _slot(length: int, slot_offset: typing.Optional[int]) -> int:
    offset = length - SIGNATURE_SIZE if slot_offset is None else slot_offset
    if offset < 0 or offset + SIGNATURE_SIZE > length:
        raise SlotOutOfBounds(
            f"slot at {offset} does not fit a {length}-byte container"
        )
    return offset


def sign_container(
    sk: bytes, body: bytes, slot_offset: typing.Optional[int] = None
) -> bytes:
    """
    Sign `body` whose signature slot (the trailing 64 bytes unless
    `slot_offset` says otherwise) is zeroed, and write the signature into
    the slot.
    """
    offset = _slot(len(body), slot_offset)
    if body[offset : offset + SIGNATURE_SIZE] != ZERO_SIGNATURE:
        raise SlotNotZeroed("signature slot must be zeroed before signing")
    sig = sign(sk, body)
    return body[:offset] + sig + body[offset + SIGNATURE_SIZE :]


def verify_container(
    pk: bytes, container: bytes, slot_offset: typing.Optional[int] = None
) -> bool:
    offset = _slot(len(container), slot_offset)
    sig = container[offset : offset + SIGNATURE_SIZE]
    zeroed = container[:offset] + ZERO_SIGNATURE + container[offset + SIGNATURE_SIZE :]
    return verify_sig(pk, zeroed, sig)


def _box_key(shared: bytes, ephemeral_public: bytes, recipient: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(),
        length=32,
        salt=None,
        info=_BOX_INFO + ephemeral_public + recipient,
    ).derive(shared)


def encrypt(
    pk: bytes, msg: bytes, ephemeral: typing.Optional[bytes] = None
) -> Ciphertext:
    """
    Seal `msg` to the box key `pk`. A fresh ephemeral key is drawn for every
    call unless the caller supplies one (the simulator does, to stay
    reproducible).
    """
    secret = X25519PrivateKey.from_private_bytes(
        ephemeral if ephemeral is not None else os.urandom(KEY_SIZE)
    )
    try:
        shared = secret.exchange(X25519PublicKey.from_public_bytes(pk))
    except ValueError as exception:
        raise CryptoError(f"cannot encrypt to key {pk.hex()}") from exception
    ephemeral_public = _raw_public(secret)
    key = _box_key(shared, ephemeral_public, pk)
    return Ciphertext(
        ephemeral_public + ChaCha20Poly1305(key).encrypt(_BOX_NONCE, msg, None)
    )


def decrypt(sk: bytes, ct: bytes) -> bytes:
    if len(ct) < KEY_SIZE + 16:
        raise DecryptionFailure("ciphertext too short")
    secret = X25519PrivateKey.from_private_bytes(sk)
    ephemeral_public = ct[:KEY_SIZE]
    try:
        shared = secret.exchange(X25519PublicKey.from_public_bytes(ephemeral_public))
        key = _box_key(shared, ephemeral_public, _raw_public(secret))
        return ChaCha20Poly1305(key).decrypt(_BOX_NONCE, ct[KEY_SIZE:], None)
    except (InvalidTag, ValueError) as exception:
        raise DecryptionFailure("cannot open ciphertext") from exception
