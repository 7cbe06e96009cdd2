"""
Third-party verification of the three evidence levels.

Level 1 trusts the validator, level 2 trusts the proxy chain's consensus,
level 3 trusts only the public ledger. Verification never raises on bad
evidence: it returns a `Verdict` carrying the reason.
"""
from __future__ import annotations

import enum
import typing
from dataclasses import dataclass, field

from notaria import merkle
from notaria.crypto import Identity, digest, verify_sig
from notaria.exceptions import LedgerError
from notaria.ledger import PublicLedger
from notaria.model import (
    AuxReceipt,
    BlockHeader,
    FirstReceipt,
    Receipt,
    Timestamp,
    Transaction,
    verify_seal,
)
from notaria.nodes import client_root
from notaria.registry import Registry, Role

__all__ = [
    "Reason",
    "Verdict",
    "TrustAssumptions",
    "verify_level1",
    "verify_level2",
    "verify_level3",
]


class Reason(str, enum.Enum):
    BAD_CLIENT_SIG = "BadClientSig"
    BAD_VALIDATOR_SIG = "BadValidatorSig"
    UNTRUSTED_VALIDATOR = "UntrustedValidator"
    BAD_HEADER_SIG = "BadHeaderSig"
    BAD_RECEIPT_SIG = "BadReceiptSig"
    BAD_TX_SIG = "BadTxSig"
    ROOT_MISMATCH = "RootMismatch"
    PATH_MISMATCH = "PathMismatch"
    TIME_INCONSISTENT = "TimeInconsistent"
    CONSENSUS_UNTRUSTED = "ConsensusUntrusted"
    BAD_AUX_SIG = "BadAuxSig"
    UNTRUSTED_ANCHORER = "UntrustedAnchorer"
    LEDGER_MISMATCH = "LedgerMismatch"
    AUX_PATH_MISMATCH = "AuxPathMismatch"
    PROXY_PATH_MISMATCH = "ProxyPathMismatch"
    ADDRESS_UNRESOLVABLE = "AddressUnresolvable"


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    level: int
    established_time: typing.Optional[Timestamp] = None
    reason: typing.Optional[Reason] = None

    def __bool__(self) -> bool:
        return self.accepted

    @classmethod
    def accept(cls, level: int, established_time: int) -> "Verdict":
        return cls(True, level, Timestamp(established_time))

    @classmethod
    def reject(cls, level: int, reason: Reason) -> "Verdict":
        return cls(False, level, None, reason)

    def to_dict(self) -> typing.Dict[str, typing.Any]:
        return {
            "level": self.level,
            "accepted": self.accepted,
            "established_time": self.established_time,
            "reason": self.reason.value if self.reason is not None else None,
        }


@dataclass
class TrustAssumptions:
    """
    What Tom is willing to trust. Each level only consults the part it
    needs: validators for level 1, consensus for level 2, the ledger (and
    optionally a pinned anchorer) for level 3.
    """

    registry: Registry
    trusted_validators: typing.FrozenSet[Identity] = field(default_factory=frozenset)
    trust_proxy_consensus: bool = False
    trusted_ledger: typing.Optional[PublicLedger] = None
    trusted_anchorer: typing.Optional[Identity] = None


def _client_tx_valid(
    tx: Transaction, registry: Registry, data: typing.Optional[bytes]
) -> bool:
    key = registry.key_for(tx.client, Role.CLIENT)
    if key is None or not verify_seal(tx, key):
        return False
    if data is not None and not verify_sig(key, digest(data), tx.data_sig):
        return False
    return True


def verify_level1(
    tx: Transaction,
    first_receipt: FirstReceipt,
    assumptions: TrustAssumptions,
    *,
    data: typing.Optional[bytes] = None,
) -> Verdict:
    registry = assumptions.registry
    if not _client_tx_valid(tx, registry, data):
        return Verdict.reject(1, Reason.BAD_CLIENT_SIG)
    validator_key = registry.key_for(first_receipt.validator, Role.NODE)
    if (
        validator_key is None
        or first_receipt.tx_digest != tx.digest
        or not verify_sig(validator_key, tx.encode(), first_receipt.sig)
    ):
        return Verdict.reject(1, Reason.BAD_VALIDATOR_SIG)
    if first_receipt.validator not in assumptions.trusted_validators:
        return Verdict.reject(1, Reason.UNTRUSTED_VALIDATOR)
    return Verdict.accept(1, tx.claimed_time)


def _receipt_transactions_valid(
    receipt: Receipt, registry: Registry, data: typing.Optional[bytes]
) -> bool:
    if not receipt.transactions:
        return False
    if len({tx.client for tx in receipt.transactions}) != 1:
        return False
    if not all(_client_tx_valid(tx, registry, None) for tx in receipt.transactions):
        return False
    if data is not None:
        return any(
            _client_tx_valid(tx, registry, data) for tx in receipt.transactions
        )
    return True


def verify_level2(
    receipt: Receipt,
    header: BlockHeader,
    assumptions: TrustAssumptions,
    *,
    data: typing.Optional[bytes] = None,
) -> Verdict:
    """
    Check a node receipt against its block header only; the phantom part of
    the block is never needed.
    """
    registry = assumptions.registry
    committer_key = registry.key_for(header.committer, Role.NODE)
    if committer_key is None or not verify_seal(header, committer_key):
        return Verdict.reject(2, Reason.BAD_HEADER_SIG)
    if receipt.committer != header.committer or not verify_seal(receipt, committer_key):
        return Verdict.reject(2, Reason.BAD_RECEIPT_SIG)
    if not _receipt_transactions_valid(receipt, registry, data):
        return Verdict.reject(2, Reason.BAD_TX_SIG)
    if client_root(receipt.transactions) != receipt.client_root:
        return Verdict.reject(2, Reason.ROOT_MISMATCH)
    if not merkle.verify_path(receipt.client_root, receipt.path, header.block_root):
        return Verdict.reject(2, Reason.PATH_MISMATCH)
    if any(tx.claimed_time >= header.created_at for tx in receipt.transactions):
        return Verdict.reject(2, Reason.TIME_INCONSISTENT)
    if not assumptions.trust_proxy_consensus:
        return Verdict.reject(2, Reason.CONSENSUS_UNTRUSTED)
    return Verdict.accept(2, header.created_at)


def verify_level3(
    receipt: Receipt,
    aux_receipt: AuxReceipt,
    ledger: typing.Optional[PublicLedger],
    assumptions: TrustAssumptions,
    *,
    header: typing.Optional[BlockHeader] = None,
    data: typing.Optional[bytes] = None,
) -> Verdict:
    """
    Follow the hash chain ledger → auxiliary root → block root → client
    root → transactions. When the client also holds the block header it is
    tied in through its leaf in the auxiliary tree, which lets a bad node
    path be told apart from a bad auxiliary path.
    """
    registry = assumptions.registry
    ledger = ledger if ledger is not None else assumptions.trusted_ledger
    pub_data = aux_receipt.pub_data

    anchorer_key = registry.key_for(pub_data.anchorer, Role.AUXILIARY)
    if anchorer_key is None or not verify_seal(aux_receipt, anchorer_key):
        return Verdict.reject(3, Reason.BAD_AUX_SIG)
    if (
        assumptions.trusted_anchorer is not None
        and pub_data.anchorer != assumptions.trusted_anchorer
    ):
        return Verdict.reject(3, Reason.UNTRUSTED_ANCHORER)
    if (
        pub_data.epoch_length < 2
        or aux_receipt.first_k != pub_data.last_anchor_index + 1
        or aux_receipt.last_k != pub_data.last_anchor_index + pub_data.epoch_length
    ):
        return Verdict.reject(3, Reason.LEDGER_MISMATCH)
    if ledger is None:
        return Verdict.reject(3, Reason.ADDRESS_UNRESOLVABLE)
    try:
        payload, public_time = ledger.get(aux_receipt.address)
    except LedgerError:
        return Verdict.reject(3, Reason.ADDRESS_UNRESOLVABLE)
    if payload != pub_data.encode():
        return Verdict.reject(3, Reason.LEDGER_MISMATCH)

    committer_key = registry.key_for(receipt.committer, Role.NODE)
    if committer_key is None or not verify_seal(receipt, committer_key):
        return Verdict.reject(3, Reason.BAD_RECEIPT_SIG)
    if not _receipt_transactions_valid(receipt, registry, data):
        return Verdict.reject(3, Reason.BAD_TX_SIG)
    if client_root(receipt.transactions) != receipt.client_root:
        return Verdict.reject(3, Reason.ROOT_MISMATCH)

    position = aux_receipt.path.position(2 * pub_data.epoch_length)
    if position is None or position % 2:
        return Verdict.reject(3, Reason.AUX_PATH_MISMATCH)
    block_root = merkle.fold_path(receipt.client_root, receipt.path)
    if header is not None:
        first_step = aux_receipt.path.steps[0]
        if (
            header.index != aux_receipt.first_k + position // 2
            or first_step.sibling != header.digest
        ):
            return Verdict.reject(3, Reason.AUX_PATH_MISMATCH)
        if block_root != header.block_root:
            return Verdict.reject(3, Reason.PROXY_PATH_MISMATCH)
    if not merkle.verify_path(block_root, aux_receipt.path, pub_data.aux_root):
        return Verdict.reject(3, Reason.AUX_PATH_MISMATCH)
    return Verdict.accept(3, public_time)
