import random

import pytest

from notaria.crypto import (
    SIGNATURE_SIZE,
    decrypt,
    digest,
    encrypt,
    keygen,
    sign,
    sign_container,
    verify_container,
    verify_sig,
)
from notaria.exceptions import DecryptionFailure, SlotNotZeroed, SlotOutOfBounds

from .conftest import make_keys


def test_keygen_is_deterministic():
    seed = bytes(range(32))
    assert keygen(seed) == keygen(seed)
    assert keygen(seed).identity == digest(keygen(seed).public_key)


def test_keygen_rejects_short_seed():
    with pytest.raises(ValueError, match="32 bytes"):
        keygen(b"short")


def test_digest_known_value():
    assert (
        digest(b"abc").hex()
        == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    )


def test_sign_and_verify():
    keys = make_keys("signer")
    sig = sign(keys.secret_key, b"message")
    assert len(sig) == SIGNATURE_SIZE
    assert verify_sig(keys.public_key, b"message", sig)
    assert not verify_sig(keys.public_key, b"messagf", sig)
    assert not verify_sig(make_keys("other").public_key, b"message", sig)
    assert not verify_sig(keys.public_key, b"message", sig[:-1])


def test_container_round_trip_over_random_bodies():
    rng = random.Random(1)
    keys = make_keys("container")
    for _ in range(50):
        body = rng.randbytes(rng.randrange(0, 200)) + bytes(SIGNATURE_SIZE)
        container = sign_container(keys.secret_key, body)
        assert container[: -SIGNATURE_SIZE] == body[: -SIGNATURE_SIZE]
        assert verify_container(keys.public_key, container)
        with pytest.raises(SlotNotZeroed):
            sign_container(keys.secret_key, container)


def test_container_with_inner_slot():
    keys = make_keys("inner")
    body = b"head" + bytes(SIGNATURE_SIZE) + b"tail"
    container = sign_container(keys.secret_key, body, slot_offset=4)
    assert container.endswith(b"tail")
    assert verify_container(keys.public_key, container, slot_offset=4)
    assert not verify_container(keys.public_key, container[:-1] + b"X", slot_offset=4)


def test_container_slot_out_of_bounds():
    keys = make_keys("bounds")
    with pytest.raises(SlotOutOfBounds):
        sign_container(keys.secret_key, b"too short")
    with pytest.raises(SlotOutOfBounds):
        verify_container(keys.public_key, bytes(SIGNATURE_SIZE), slot_offset=1)


def test_container_mutation_breaks_signature():
    rng = random.Random(2)
    keys = make_keys("mutate")
    container = sign_container(keys.secret_key, b"payload" * 8 + bytes(SIGNATURE_SIZE))
    for _ in range(100):
        i = rng.randrange(len(container))
        mutated = bytearray(container)
        mutated[i] ^= 1 << rng.randrange(8)
        assert not verify_container(keys.public_key, bytes(mutated))


def test_box_round_trip():
    recipient = make_keys("recipient")
    ct = encrypt(recipient.box_public, b"identity")
    assert decrypt(recipient.box_secret, ct) == b"identity"


def test_box_is_randomized_unless_ephemeral_given():
    recipient = make_keys("recipient")
    assert encrypt(recipient.box_public, b"x") != encrypt(recipient.box_public, b"x")
    ephemeral = bytes(range(32))
    assert encrypt(recipient.box_public, b"x", ephemeral) == encrypt(
        recipient.box_public, b"x", ephemeral
    )


def test_box_wrong_key_or_tampering():
    recipient = make_keys("recipient")
    ct = encrypt(recipient.box_public, b"identity")
    with pytest.raises(DecryptionFailure):
        decrypt(make_keys("intruder").box_secret, ct)
    with pytest.raises(DecryptionFailure):
        decrypt(recipient.box_secret, ct[:-1] + bytes([ct[-1] ^ 1]))
    with pytest.raises(DecryptionFailure):
        decrypt(recipient.box_secret, b"short")
