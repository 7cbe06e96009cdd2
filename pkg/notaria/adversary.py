"""
Malicious participants and the forging moves of colluding parties. Each
class overrides exactly one step of its honest counterpart.
"""
from __future__ import annotations

import dataclasses
import logging
import random
import typing

from notaria import merkle
from notaria.anchor import AuxiliaryNode, aux_leaves
from notaria.crypto import DIGEST_SIZE, Identity, KeyPair, Signature
from notaria.merkle import MerklePath, Side, Step
from notaria.model import (
    AuxReceipt,
    Block,
    BlockHeader,
    FirstReceipt,
    Receipt,
    Transaction,
    seal,
)
from notaria.nodes import EphemeralSource, ServiceNode, assemble_block, make_first_receipt

__all__ = [
    "DroppingValidator",
    "SilentValidator",
    "ForgingNode",
    "OmittingAnchorer",
    "forge_owner",
    "rewrite_chain",
    "mutate_path",
    "forgery_search",
]

logger = logging.getLogger(__name__)

Groups = typing.Dict[Identity, typing.List[Transaction]]


class DroppingValidator(ServiceNode):
    """
    Swallows every direct submission: no first receipt, no broadcast.
    """

    def handle_submission(
        self, tx: Transaction, now: int
    ) -> typing.Optional[FirstReceipt]:
        logger.info("%r dropped submission %s", self, tx.digest.hex()[:16])
        return None


class SilentValidator(ServiceNode):
    """
    Answers with a valid first receipt but never queues nor broadcasts the
    transaction.
    """

    def handle_submission(
        self, tx: Transaction, now: int
    ) -> typing.Optional[FirstReceipt]:
        self.check_transaction(tx, now)
        logger.info("%r silently discarded %s", self, tx.digest.hex()[:16])
        return make_first_receipt(self.keys, tx)


class ForgingNode(ServiceNode):
    """
    Lets `forge` add transactions to each block it commits, bypassing
    validation.
    """

    def __init__(
        self,
        *args: typing.Any,
        forge: typing.Optional[typing.Callable[[Groups], Groups]] = None,
        **kwargs: typing.Any,
    ) -> None:
        super().__init__(*args, **kwargs)
        self.forge = forge

    def select_transactions(self, t_k: int) -> Groups:
        groups = super().select_transactions(t_k)
        if self.forge is None:
            return groups
        return self.forge(groups)


class OmittingAnchorer(AuxiliaryNode):
    """
    Leaves the blocks at the given offsets of every epoch out of the
    auxiliary tree while still claiming a full epoch in pub_data.
    """

    def __init__(
        self, *args: typing.Any, omit: typing.Iterable[int] = (0,), **kwargs: typing.Any
    ) -> None:
        super().__init__(*args, **kwargs)
        self.omit = frozenset(omit)

    def epoch_blocks(self) -> typing.Tuple[int, ...]:
        first, _ = self.epoch
        return tuple(k for k in super().epoch_blocks() if k - first not in self.omit)

    def build_aux_tree(self) -> merkle.MerkleTree:
        headers = self.state.observed_headers
        kept = self.epoch_blocks()
        logger.info(
            "anchorer omits %d headers from its tree", self.state.epoch_length - len(kept)
        )
        return merkle.build(aux_leaves([headers[k] for k in kept]))


def forge_owner(
    victim_tx: Transaction,
    colluder: KeyPair,
    data_sig: typing.Optional[bytes] = None,
) -> Transaction:
    """
    Credit the victim's data to the colluder. Without a key over the data
    the colluder can only reuse the victim's data signature or guess one.
    """
    return seal(
        Transaction(
            data_sig=Signature(data_sig) if data_sig is not None else victim_tx.data_sig,
            claimed_time=victim_tx.claimed_time,
            client=colluder.identity,
        ),
        colluder,
    )


def rewrite_chain(
    chain: typing.Sequence[Block],
    from_k: int,
    inserted: typing.Mapping[int, typing.Sequence[Transaction]],
    committers: typing.Mapping[Identity, KeyPair],
    aux_box_public: bytes,
    ephemeral: typing.Optional[EphemeralSource] = None,
) -> typing.Tuple[typing.List[Block], typing.Dict[int, typing.Dict[Identity, Receipt]]]:
    """
    Discard blocks from `from_k` on and reassemble them, same times and same
    committers, with `inserted` transactions added. Returns the new chain
    and the receipts of every rebuilt block.
    """
    kept = [block for block in chain if block.index < from_k]
    prev: typing.Optional[BlockHeader] = kept[-1].header if kept else None
    receipts: typing.Dict[int, typing.Dict[Identity, Receipt]] = {}
    for block in chain:
        if block.index < from_k:
            continue
        groups: Groups = {}
        for tx in block.transactions():
            groups.setdefault(tx.client, []).append(tx)
        for tx in inserted.get(block.index, ()):
            groups.setdefault(tx.client, []).append(tx)
        rebuilt, issued = assemble_block(
            committers[block.header.committer],
            prev,
            block.index,
            block.header.created_at,
            groups,
            aux_box_public,
            ephemeral,
        )
        kept.append(rebuilt)
        receipts[block.index] = issued
        prev = rebuilt.header
    logger.info("rewrote %d blocks from %d", len(receipts), from_k)
    return kept, receipts


def mutate_path(rng: random.Random, path: MerklePath) -> MerklePath:
    """
    Random forgery of one step: a fresh sibling, a flipped side, or a
    dropped or appended step.
    """
    steps = list(path.steps)
    move = rng.randrange(4)
    if move == 0 or not steps:
        steps.append(Step(rng.randbytes(DIGEST_SIZE), Side(rng.randrange(2))))
    elif move == 1:
        i = rng.randrange(len(steps))
        steps[i] = Step(rng.randbytes(DIGEST_SIZE), steps[i].side)
    elif move == 2:
        i = rng.randrange(len(steps))
        steps[i] = Step(steps[i].sibling, Side(1 - steps[i].side))
    else:
        del steps[rng.randrange(len(steps))]
    return MerklePath(tuple(steps))


def forgery_search(
    rng: random.Random,
    receipt: Receipt,
    aux_receipt: AuxReceipt,
    committer: KeyPair,
    anchorer: KeyPair,
    attempts: int,
    accepts: typing.Callable[[Receipt, AuxReceipt], bool],
) -> int:
    """
    Colluding committer and anchorer re-sign randomly forged paths and
    roots. Returns how many forgeries `accepts` let through.
    """
    accepted = 0
    for _ in range(attempts):
        forged_receipt, forged_aux = receipt, aux_receipt
        target = rng.randrange(3)
        if target == 0:
            forged_receipt = seal(
                dataclasses.replace(receipt, path=mutate_path(rng, receipt.path)),
                committer,
            )
        elif target == 1:
            forged_aux = seal(
                dataclasses.replace(aux_receipt, path=mutate_path(rng, aux_receipt.path)),
                anchorer,
            )
        else:
            forged_receipt = seal(
                dataclasses.replace(receipt, client_root=rng.randbytes(DIGEST_SIZE)),
                committer,
            )
        if accepts(forged_receipt, forged_aux):
            accepted += 1
    return accepted
