from __future__ import annotations


class NotariaError(Exception):
    """
    Base class of every error raised by notaria
    """


# crypto


class CryptoError(NotariaError):
    """
    Signature, container or encryption failure
    """


class SlotNotZeroed(CryptoError):
    """
    The signature slot of a container must be zeroed before signing
    """


class SlotOutOfBounds(CryptoError):
    """
    The signature slot does not fit inside the container
    """


class DecryptionFailure(CryptoError):
    """
    Wrong key or tampered ciphertext
    """


# merkle


class MerkleError(NotariaError):
    """
    Merkle tree construction error
    """


class EmptyLeaves(MerkleError):
    """
    A Merkle tree needs at least one leaf
    """


class IndexOutOfRange(MerkleError):
    """
    Leaf index outside the tree
    """


# model / registry


class MalformedEncoding(NotariaError):
    """
    Length or framing violation while decoding
    """


class RegistryError(NotariaError):
    """
    Key registry error
    """


class UnknownIdentity(RegistryError):
    """
    Identity not present in the key registry
    """


class DuplicateIdentity(RegistryError):
    """
    Identity already present in the key registry
    """


class BadRegistrySignature(RegistryError):
    """
    Registry file does not verify under its certificate authority key
    """


# nodes


class TransactionRejected(NotariaError):
    """
    A service node refused a transaction
    """

    reason = "Rejected"


class BadSignature(TransactionRejected):
    """
    Transaction container signature is invalid
    """

    reason = "BadSignature"


class UnknownClient(TransactionRejected):
    """
    Transaction issued by an identity that is not a registered client
    """

    reason = "UnknownClient"


class StaleTime(TransactionRejected):
    """
    Claimed time is not after the last block time
    """

    reason = "StaleTime"


class FutureTime(TransactionRejected):
    """
    Claimed time is too far ahead of the node clock
    """

    reason = "FutureTime"


class CAUnavailable(TransactionRejected, RegistryError):
    """
    The certificate authority cannot be reached
    """

    reason = "CAUnavailable"


class BlockError(NotariaError):
    """
    Block construction error
    """


class EmptyMempool(BlockError):
    """
    No transactions to put in a block
    """


class ClockRegression(BlockError):
    """
    Block time is not after the previous block time
    """


class EmptyTransactionSet(BlockError):
    """
    A client root needs at least one transaction
    """


class RoleViolation(NotariaError):
    """
    A participant acted outside its registered role
    """


# anchor / ledger


class AnchorError(NotariaError):
    """
    Auxiliary node error
    """


class MissingHeader(AnchorError):
    """
    A header of the anchoring epoch is missing
    """

    def __init__(self, k: int) -> None:
        super().__init__(f"Missing header for block {k}")
        self.k = k


class ClientNotInEpoch(AnchorError):
    """
    The client did not transact in the anchoring epoch
    """


class LedgerError(NotariaError):
    """
    Public ledger error
    """


class LedgerUnavailable(LedgerError):
    """
    Public ledger cannot accept payloads right now
    """


class AddressUnresolvable(LedgerError):
    """
    No mined payload at this address
    """


# baselines


class BaselineError(NotariaError):
    """
    Reference timestamping error
    """


class EmptyRound(BaselineError):
    """
    A linked round needs at least one request
    """


class UnknownRound(BaselineError):
    """
    Round not present in the repository
    """


# sim / cli


class InvalidConfig(NotariaError):
    """
    Simulator or workspace configuration is invalid
    """


class UnknownScenario(InvalidConfig):
    """
    Scenario name not registered
    """


class SerializerNotFound(NotariaError):
    """
    Serializer not found
    """
