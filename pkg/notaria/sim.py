"""
Deterministic discrete-event simulator.

Clients, service nodes, the auxiliary node and the mock ledger only talk
through `Bus`, on a virtual millisecond clock. One seed fixes every key,
document, delay and drop, so a (config, seed) pair always yields the same
report. Adversarial scenarios are `Simulation` subclasses overriding the
participant factories and the `on_block_final` / `on_anchor_mined` hooks.
"""
from __future__ import annotations

import dataclasses
import enum
import heapq
import itertools
import logging
import random
import typing
from collections import Counter
from dataclasses import dataclass, field

from notaria.adversary import (
    DroppingValidator,
    ForgingNode,
    OmittingAnchorer,
    SilentValidator,
    forge_owner,
    forgery_search,
    rewrite_chain,
)
from notaria.anchor import Anchoring, AuxiliaryNode, build_aux_tree
from notaria.config import SimConfig
from notaria.crypto import (
    DIGEST_SIZE,
    SIGNATURE_SIZE,
    Identity,
    KeyPair,
    digest,
    keygen,
)
from notaria.exceptions import (
    CAUnavailable,
    ClientNotInEpoch,
    ClockRegression,
    EmptyMempool,
    InvalidConfig,
    LedgerUnavailable,
    MissingHeader,
    TransactionRejected,
    UnknownScenario,
)
from notaria.ledger import MockLedger
from notaria.merkle import path as merkle_path
from notaria.model import (
    AuxReceipt,
    Block,
    BlockHeader,
    FirstReceipt,
    PubData,
    Receipt,
    Transaction,
    make_transaction,
    seal,
)
from notaria.nodes import ConsensusStub, ServiceNode, committer_for, make_first_receipt
from notaria.registry import Registry, Role
from notaria.serializers import BaseSerializer, JSONSerializer
from notaria.verify import (
    TrustAssumptions,
    Verdict,
    verify_level1,
    verify_level2,
    verify_level3,
)

__all__ = [
    "ANOMALY_KINDS",
    "AttackOutcome",
    "AnomalyRecord",
    "AnomalyLog",
    "EventLoop",
    "Bus",
    "Evidence",
    "EvidenceStatus",
    "SimClient",
    "Simulation",
    "SimReport",
    "ScenarioRegistry",
    "SCENARIOS",
    "run",
    "scenario_happy_path",
    "scenario_fake_owner",
    "scenario_ghost_proxy",
    "scenario_ghost_public",
    "scenario_dos",
]

logger = logging.getLogger(__name__)

ANOMALY_KINDS = frozenset(
    {
        "MissingFirstReceipt",
        "MissingReceipt",
        "ReceiptMismatch",
        "HeaderRewrite",
        "MissingBlock",
        "AuxOmission",
        "CAUnavailable",
    }
)

DOS_VARIANTS = ("drop", "silent_validator", "aux_omission", "ca_flood")


class AttackOutcome(str, enum.Enum):
    SUCCEEDED = "succeeded"
    FAILED = "failed"
    DETECTED = "detected"
    SUCCEEDED_BUT_DETECTABLE = "succeeded_but_detectable"


@dataclass(frozen=True)
class AnomalyRecord:
    time: int
    observer: str
    kind: str
    details: str = ""

    def to_dict(self) -> typing.Dict[str, typing.Any]:
        return {
            "time": self.time,
            "observer": self.observer,
            "kind": self.kind,
            "details": self.details,
        }


class AnomalyLog:
    """
    Append-only record of what honest participants noticed.
    """

    def __init__(self) -> None:
        self._records: typing.List[AnomalyRecord] = []

    def __iter__(self) -> typing.Iterator[AnomalyRecord]:
        return iter(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def record(
        self, time: int, observer: str, kind: str, details: str = ""
    ) -> AnomalyRecord:
        if kind not in ANOMALY_KINDS:
            raise ValueError(f"unknown anomaly kind {kind!r}")
        entry = AnomalyRecord(time, observer, kind, details)
        self._records.append(entry)
        logger.warning("[%d] %s noticed %s %s", time, observer, kind, details)
        return entry

    def count(self, kind: str) -> int:
        return sum(1 for entry in self._records if entry.kind == kind)

    def observers(self, kind: str) -> typing.Set[str]:
        return {entry.observer for entry in self._records if entry.kind == kind}

    def to_list(self) -> typing.List[typing.Dict[str, typing.Any]]:
        return [entry.to_dict() for entry in self._records]


class EventLoop:
    def __init__(self, start: int) -> None:
        self.now = start
        self._queue: typing.List[typing.Tuple[int, int, typing.Callable, tuple]] = []
        self._sequence = itertools.count()

    def __len__(self) -> int:
        return len(self._queue)

    def at(self, time: int, callback: typing.Callable, *args: typing.Any) -> None:
        entry = (max(time, self.now), next(self._sequence), callback, args)
        heapq.heappush(self._queue, entry)

    def after(self, delay: int, callback: typing.Callable, *args: typing.Any) -> None:
        self.at(self.now + delay, callback, *args)

    def run(self) -> int:
        handled = 0
        while self._queue:
            time, _, callback, args = heapq.heappop(self._queue)
            self.now = time
            callback(*args)
            handled += 1
        return handled


class Bus:
    """
    Point-to-point delivery with a fixed delay plus seeded jitter. Only
    messages marked `lossy` (the client links) are subject to drops.
    """

    def __init__(
        self,
        loop: EventLoop,
        rng: random.Random,
        config: SimConfig,
        trace: typing.Optional[typing.List[typing.Dict[str, typing.Any]]] = None,
    ) -> None:
        self.loop = loop
        self.rng = rng
        self.delay = config.message_delay_ms
        self.jitter = config.delay_jitter_ms
        self.drop_rate = config.drop_rate
        self.trace = trace

    def send(
        self,
        src: str,
        dst: str,
        kind: str,
        deliver: typing.Callable,
        *args: typing.Any,
        lossy: bool = False,
    ) -> bool:
        if dst.startswith("client-") and any(
            isinstance(arg, Block) and arg.phantom for arg in args
        ):
            raise AssertionError(f"{src} tried to hand phantom data to {dst}")
        delay = self.delay + (self.rng.randint(0, self.jitter) if self.jitter else 0)
        dropped = lossy and self.drop_rate > 0 and self.rng.random() < self.drop_rate
        if self.trace is not None:
            self.trace.append(
                {
                    "time": self.loop.now,
                    "kind": kind,
                    "src": src,
                    "dst": dst,
                    "deliver_at": None if dropped else self.loop.now + delay,
                }
            )
        if dropped:
            logger.debug("dropped %s from %s to %s", kind, src, dst)
            return False
        self.loop.after(delay, deliver, *args)
        return True


class EvidenceStatus(str, enum.Enum):
    SUBMITTED = "submitted"
    ACKNOWLEDGED = "acknowledged"
    COMMITTED = "committed"
    ANCHORED = "anchored"
    RETRIED = "retried"
    ABANDONED = "abandoned"


@dataclass(eq=False)
class Evidence:
    """
    One notarization attempt as seen by its client, with everything it can
    later hand to a verifier.
    """

    data: bytes
    tx: Transaction
    validator: Identity
    attempt: int
    submitted_at: int
    status: EvidenceStatus = EvidenceStatus.SUBMITTED
    first_receipt: typing.Optional[FirstReceipt] = None
    receipt: typing.Optional[Receipt] = None
    header: typing.Optional[BlockHeader] = None
    aux_receipt: typing.Optional[AuxReceipt] = None
    block: typing.Optional[int] = None
    t1: typing.Optional[int] = None
    t2: typing.Optional[int] = None
    t3: typing.Optional[int] = None
    verdicts: typing.List[Verdict] = field(default_factory=list)

    @property
    def fully_accepted(self) -> bool:
        return len(self.verdicts) == 3 and all(self.verdicts)


class SimClient:
    def __init__(self, sim: "Simulation", index: int, keys: KeyPair) -> None:
        self.sim = sim
        self.index = index
        self.keys = keys
        self.label = f"client-{index}"
        self.evidence: typing.List[Evidence] = []
        self.headers: typing.Dict[int, BlockHeader] = {}
        self.receipts: typing.Dict[int, typing.List[Receipt]] = {}
        self.aux_receipts: typing.Dict[int, AuxReceipt] = {}
        self.requested: typing.Set[int] = set()
        self.planned = 0

    def __repr__(self) -> str:
        return f"<SimClient {self.label}>"

    @property
    def identity(self) -> Identity:
        return self.keys.identity

    def outstanding(self) -> bool:
        return self.planned > 0 or any(
            evidence.status in (EvidenceStatus.SUBMITTED, EvidenceStatus.ACKNOWLEDGED)
            for evidence in self.evidence
        )

    def plan(self, at: int, data: bytes, attempt: int = 0) -> None:
        self.planned += 1
        self.sim.loop.at(at, self._begin, data, attempt)
        self.sim.ensure_ticking()

    def _begin(self, data: bytes, attempt: int) -> None:
        self.planned -= 1
        self.notarize(data, attempt)

    def notarize(self, data: bytes, attempt: int = 0) -> Evidence:
        sim = self.sim
        now = sim.loop.now
        validator = sim.validator_for(self, attempt)
        evidence = Evidence(
            data=data,
            tx=make_transaction(self.keys, data, now),
            validator=validator.identity,
            attempt=attempt,
            submitted_at=now,
        )
        self.evidence.append(evidence)
        sim.submit(self, validator, evidence)
        sim.loop.after(
            sim.config.first_receipt_timeout_ms, self._first_receipt_timeout, evidence
        )
        return evidence

    def _anomaly(self, kind: str, details: str = "") -> None:
        self.sim.anomalies.record(self.sim.loop.now, self.label, kind, details)

    def _retry(self, evidence: Evidence, delay: int = 0) -> None:
        if evidence.attempt >= self.sim.config.max_retries:
            evidence.status = EvidenceStatus.ABANDONED
            logger.warning("%s gave up on %s", self.label, evidence.tx.digest.hex()[:16])
            return
        evidence.status = EvidenceStatus.RETRIED
        at = self.sim.safe_time(self.sim.loop.now + delay)
        self.plan(at, evidence.data, evidence.attempt + 1)

    def on_first_receipt(self, evidence: Evidence, first_receipt: FirstReceipt) -> None:
        if evidence.status != EvidenceStatus.SUBMITTED:
            return
        if not verify_level1(evidence.tx, first_receipt, self.sim.assumptions):
            logger.warning("%s got an invalid first receipt", self.label)
            return
        evidence.first_receipt = first_receipt
        evidence.t1 = self.sim.loop.now
        evidence.status = EvidenceStatus.ACKNOWLEDGED
        config = self.sim.config
        timeout = config.receipt_timeout_intervals * config.block_interval_ms
        self.sim.loop.after(timeout, self._receipt_timeout, evidence)

    def on_rejected(self, evidence: Evidence, reason: str) -> None:
        if evidence.status != EvidenceStatus.SUBMITTED:
            return
        logger.info("%s submission rejected: %s", self.label, reason)
        if reason == CAUnavailable.reason:
            self._anomaly(
                "CAUnavailable", f"validation of {evidence.tx.digest.hex()[:16]}"
            )
        self._retry(evidence, self.sim.config.block_interval_ms)

    def _first_receipt_timeout(self, evidence: Evidence) -> None:
        if evidence.status == EvidenceStatus.SUBMITTED:
            self._anomaly(
                "MissingFirstReceipt",
                f"{evidence.tx.digest.hex()[:16]}"
                f" at {self.sim.labels[evidence.validator]}",
            )
            self._retry(evidence)

    def _receipt_timeout(self, evidence: Evidence) -> None:
        if evidence.status == EvidenceStatus.ACKNOWLEDGED:
            self._anomaly(
                "MissingReceipt",
                f"{evidence.tx.digest.hex()[:16]}"
                f" at {self.sim.labels[evidence.validator]}",
            )
            self._retry(evidence)

    def on_header(self, header: BlockHeader) -> None:
        previous = self.headers.get(header.index)
        if previous is not None and previous != header:
            self._anomaly("HeaderRewrite", f"block {header.index}")
        self.headers[header.index] = header

    def on_receipt(self, receipt: Receipt, header: BlockHeader) -> None:
        self.on_header(header)
        k = header.index
        self.receipts.setdefault(k, []).append(receipt)
        verdict = verify_level2(receipt, header, self.sim.assumptions)
        if not verdict:
            assert verdict.reason is not None
            self._anomaly("ReceiptMismatch", f"block {k}: {verdict.reason.value}")
            return
        included = set(receipt.transactions)
        for evidence in self.evidence:
            if evidence.tx in included:
                if evidence.t2 is None:
                    evidence.t2 = self.sim.loop.now
                    evidence.block = k
                    evidence.status = EvidenceStatus.COMMITTED
                evidence.receipt = receipt
                evidence.header = header
            elif (
                evidence.status == EvidenceStatus.ACKNOWLEDGED
                and evidence.tx.claimed_time < header.created_at
            ):
                self._anomaly(
                    "ReceiptMismatch",
                    f"block {k} lacks {evidence.tx.digest.hex()[:16]}",
                )
                self._retry(evidence)

    def on_aux_receipt(self, k: int, aux_receipt: AuxReceipt) -> None:
        self.aux_receipts[k] = aux_receipt
        now = self.sim.loop.now
        for receipt in self.receipts.get(k, []):
            verdict = verify_level3(
                receipt,
                aux_receipt,
                None,
                self.sim.assumptions,
                header=self.headers.get(k),
            )
            if not verdict:
                assert verdict.reason is not None
                self._anomaly(
                    "ReceiptMismatch", f"block {k} anchoring: {verdict.reason.value}"
                )
                continue
            for evidence in self.evidence:
                if evidence.receipt == receipt and evidence.t3 is None:
                    evidence.aux_receipt = aux_receipt
                    evidence.t3 = now
                    evidence.status = EvidenceStatus.ANCHORED
        for other in range(aux_receipt.first_k, aux_receipt.last_k + 1):
            if other not in self.receipts or other in self.aux_receipts:
                continue
            if other not in self.requested:
                self.requested.add(other)
                self.sim.query_aux(self, other)

    def on_pub_data(self, pub_data: PubData) -> None:
        self.sim.reconcile(self.label, self.headers, pub_data)


@dataclass(eq=False)
class ConsensusRound:
    committer: ServiceNode
    block: Block
    receipts: typing.Dict[Identity, Receipt]
    peers: typing.List[ServiceNode]
    votes: typing.Dict[Identity, bool] = field(default_factory=dict)


@dataclass
class SimReport:
    scenario: str
    seed: int
    config: typing.Dict[str, typing.Any]
    timeline: typing.List[typing.Dict[str, typing.Any]]
    verification: typing.Dict[str, typing.Dict[str, typing.Any]]
    anomalies: typing.List[typing.Dict[str, typing.Any]]
    attack: typing.Optional[typing.Dict[str, typing.Any]]
    chain_height: int
    anchorings: int
    latency_violations: int
    simulation: typing.Optional["Simulation"] = field(
        default=None, repr=False, compare=False
    )

    @property
    def outcome(self) -> typing.Optional[AttackOutcome]:
        if self.attack is None:
            return None
        return AttackOutcome(self.attack["outcome"])

    def anomaly_kinds(self) -> typing.Counter[str]:
        return Counter(entry["kind"] for entry in self.anomalies)

    def all_accepted(self) -> bool:
        return all(
            summary["rejected"] == 0 and summary["accepted"] > 0
            for summary in self.verification.values()
        )

    def to_dict(self) -> typing.Dict[str, typing.Any]:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "config": self.config,
            "timeline": self.timeline,
            "verification": self.verification,
            "anomalies": self.anomalies,
            "attack": self.attack,
            "chain_height": self.chain_height,
            "anchorings": self.anchorings,
            "latency_violations": self.latency_violations,
        }

    def encode(self, serializer: typing.Optional[BaseSerializer] = None) -> bytes:
        return (serializer or JSONSerializer()).encode(self.to_dict())


class Simulation:
    """
    Honest run: every participant follows the protocol.
    """

    scenario = "happy_path"

    def __init__(self, config: SimConfig, *, trace: bool = False) -> None:
        self.config = config
        self.rng = random.Random(config.seed)
        self.loop = EventLoop(config.start_time_ms)
        self.anomalies = AnomalyLog()
        self.trace: typing.Optional[typing.List[typing.Dict[str, typing.Any]]] = (
            [] if trace else None
        )
        self.bus = Bus(self.loop, self.rng, config, self.trace)

        self.ca = keygen(self.seed_for("ca", 0))
        self.registry = Registry(ca_public=self.ca.public_key)
        node_keys = [keygen(self.seed_for("node", i)) for i in range(config.num_nodes)]
        anchor_keys = keygen(self.seed_for("anchor", 0))
        client_keys = [
            keygen(self.seed_for("client", i)) for i in range(config.num_clients)
        ]
        for keys in node_keys:
            self.registry.register(keys, Role.NODE)
        self.registry.register(anchor_keys, Role.AUXILIARY)
        for keys in client_keys:
            self.registry.register(keys, Role.CLIENT)

        self.ledger = MockLedger(
            block_interval=config.public_block_interval_ms,
            clock=lambda: self.loop.now,
            auto_mine=False,
        )
        self.nodes = [self.make_node(i, keys) for i, keys in enumerate(node_keys)]
        self.nodes_by_id = {node.identity: node for node in self.nodes}
        self.anchorer = self.make_anchorer(anchor_keys)
        self.clients = [SimClient(self, i, keys) for i, keys in enumerate(client_keys)]
        self.clients_by_id = {client.identity: client for client in self.clients}
        self.labels: typing.Dict[bytes, str] = {
            **{node.identity: f"node-{i}" for i, node in enumerate(self.nodes)},
            **{client.identity: client.label for client in self.clients},
            self.anchorer.identity: "anchor",
        }
        self.consensus = ConsensusStub(config.quorum)
        self.assumptions = TrustAssumptions(
            registry=self.registry,
            trusted_validators=frozenset(self.nodes_by_id),
            trust_proxy_consensus=True,
            trusted_ledger=self.ledger,
            trusted_anchorer=self.anchorer.identity,
        )

        self.intervals = 0
        self.ticking = False
        self.mining_scheduled = False
        self.unmined: typing.List[Anchoring] = []
        self.mined: typing.List[Anchoring] = []

    # participants

    def seed_for(self, role: str, index: int) -> bytes:
        return digest(f"notaria-sim/{self.config.seed}/{role}/{index}".encode())

    def make_node(self, index: int, keys: KeyPair) -> ServiceNode:
        return ServiceNode(keys, self.registry, **self.node_options())

    def node_options(self) -> typing.Dict[str, typing.Any]:
        return {
            "clock_skew": self.config.clock_skew_ms,
            "skip_empty_intervals": self.config.skip_empty_intervals,
        }

    def make_anchorer(self, keys: KeyPair) -> AuxiliaryNode:
        return AuxiliaryNode(keys, self.registry, self.config.m, self.ledger)

    def ephemeral(self) -> bytes:
        return self.rng.randbytes(DIGEST_SIZE)

    def validator_for(self, client: SimClient, attempt: int) -> ServiceNode:
        return self.nodes[(client.index + attempt) % len(self.nodes)]

    # clock

    def interval_start(self, n: int) -> int:
        return self.config.start_time_ms + n * self.config.block_interval_ms

    def next_boundary(self, now: int) -> int:
        elapsed = now - self.config.start_time_ms
        return self.interval_start(elapsed // self.config.block_interval_ms + 1)

    def safe_time(self, at: int) -> int:
        """
        Earliest time from `at` on that is at least one guard away from
        every block boundary.
        """
        guard = self.config.guard_ms
        interval = self.config.block_interval_ms
        offset = (at - self.config.start_time_ms) % interval
        if offset < guard:
            return at + guard - offset
        if offset > interval - guard:
            return at + interval - offset + guard
        return at

    # driving the run

    def schedule_workload(self) -> None:
        guard = self.config.guard_ms
        interval = self.config.block_interval_ms
        for client in self.clients:
            for j in range(self.config.txs_per_client):
                start = self.interval_start(self.rng.randrange(self.config.m))
                at = start + self.rng.randrange(guard, interval - guard)
                data = f"document {client.index}.{j} ".encode() + self.rng.randbytes(16)
                client.plan(at, data)

    def ensure_ticking(self) -> None:
        if self.ticking or self.intervals >= self.config.max_intervals:
            return
        self.ticking = True
        self.loop.at(self.next_boundary(self.loop.now), self.tick)

    def tick(self) -> None:
        self.ticking = False
        self.intervals += 1
        self.produce_block(self.loop.now)
        if self.active():
            self.ensure_ticking()

    def chain_height(self) -> int:
        return max(node.next_index for node in self.nodes) - 1

    def active(self) -> bool:
        if any(client.outstanding() for client in self.clients):
            return True
        if any(node.pending() for node in self.nodes):
            return True
        return self.chain_height() % self.config.m != 0

    def run(self) -> "SimReport":
        self.schedule_workload()
        self.loop.run()
        self.verify_all()
        return self.report(self.evaluate())

    # client traffic

    def submit(self, client: SimClient, node: ServiceNode, evidence: Evidence) -> None:
        self.bus.send(
            client.label,
            self.labels[node.identity],
            "submit",
            self._on_submit,
            node,
            client,
            evidence,
            lossy=True,
        )

    def _on_submit(self, node: ServiceNode, client: SimClient, evidence: Evidence) -> None:
        label = self.labels[node.identity]
        try:
            first_receipt = node.handle_submission(evidence.tx, self.loop.now)
        except TransactionRejected as exception:
            self.bus.send(
                label,
                client.label,
                "reject",
                client.on_rejected,
                evidence,
                exception.reason,
                lossy=True,
            )
            return
        if first_receipt is None:
            return
        self.bus.send(
            label,
            client.label,
            "first_receipt",
            client.on_first_receipt,
            evidence,
            first_receipt,
            lossy=True,
        )
        for tx in node.drain_outbox():
            for peer in self.nodes:
                if peer is not node:
                    self.bus.send(
                        label,
                        self.labels[peer.identity],
                        "broadcast",
                        self._on_broadcast,
                        peer,
                        tx,
                    )

    def _on_broadcast(self, peer: ServiceNode, tx: Transaction) -> None:
        try:
            peer.accept_broadcast(tx, self.loop.now)
        except TransactionRejected as exception:
            logger.warning("%r refused broadcast: %s", peer, exception)

    # proxy blocks

    def produce_block(self, now: int) -> None:
        k = self.chain_height() + 1
        committer = self.nodes_by_id[committer_for(k, self.nodes_by_id)]
        epoch_open = (k - 1) % self.config.m != 0
        try:
            block, receipts = committer.build_block(
                now,
                self.anchorer.state.keys.box_public,
                allow_empty=epoch_open or not self.config.skip_empty_intervals,
                ephemeral=self.ephemeral,
            )
        except EmptyMempool:
            return
        except ClockRegression as exception:
            logger.warning("%r could not build block %d: %s", committer, k, exception)
            return
        peers = [node for node in self.nodes if node is not committer]
        proposal = ConsensusRound(committer, block, receipts, peers)
        if not peers:
            self.finalize(proposal)
            return
        for peer in peers:
            self.bus.send(
                self.labels[committer.identity],
                self.labels[peer.identity],
                "propose",
                self._on_proposal,
                proposal,
                peer,
            )

    def _on_proposal(self, proposal: ConsensusRound, peer: ServiceNode) -> None:
        accepted = bool(peer.accept_block(proposal.block))
        self.bus.send(
            self.labels[peer.identity],
            self.labels[proposal.committer.identity],
            "ack" if accepted else "nack",
            self._on_vote,
            proposal,
            peer,
            accepted,
        )

    def _on_vote(
        self, proposal: ConsensusRound, peer: ServiceNode, accepted: bool
    ) -> None:
        proposal.votes[peer.identity] = accepted
        if len(proposal.votes) < len(proposal.peers):
            return
        if self.consensus.reached(sum(proposal.votes.values()), len(proposal.peers)):
            self.finalize(proposal)
            return
        logger.warning("block %d failed to reach quorum", proposal.block.index)
        proposal.committer.rollback()
        for other in proposal.peers:
            if proposal.votes[other.identity]:
                other.rollback()

    def finalize(self, proposal: ConsensusRound) -> None:
        self.distribute(proposal.committer.identity, proposal.block, proposal.receipts)
        self.on_block_final(proposal.block)

    def distribute(
        self, sender: Identity, block: Block, receipts: typing.Mapping[Identity, Receipt]
    ) -> None:
        """
        Receipts (with their header) to transacting clients, the bare header
        to every other client, the public part of the block to the anchorer.
        """
        label = self.labels[sender]
        for client in self.clients:
            receipt = receipts.get(client.identity)
            if receipt is not None:
                self.bus.send(
                    label,
                    client.label,
                    "receipt",
                    client.on_receipt,
                    receipt,
                    block.header,
                )
            else:
                self.bus.send(
                    label, client.label, "header", client.on_header, block.header
                )
        self.bus.send(label, "anchor", "block", self._on_anchor_block, block.public_view())

    def on_block_final(self, block: Block) -> None:
        pass

    # anchoring

    def _on_anchor_block(self, block: Block) -> None:
        for anomaly in self.anchorer.observe_block(block):
            self.anomalies.record(
                self.loop.now, "anchor", anomaly.kind, f"block {anomaly.k}"
            )
        while self.anchorer.epoch_ready():
            try:
                anchoring = self.anchorer.anchor()
            except (LedgerUnavailable, MissingHeader) as exception:
                logger.warning("anchoring postponed: %s", exception)
                return
            self.unmined.append(anchoring)
            if not self.mining_scheduled:
                self.mining_scheduled = True
                self.loop.at(self.ledger.next_block_time(self.loop.now), self._mine)

    def _mine(self) -> None:
        self.mining_scheduled = False
        if self.ledger.mine(self.loop.now) is None:
            return
        height = self.ledger.genesis_height + len(self.ledger) - 1
        released = [a for a in self.unmined if a.address.block_height == height]
        self.unmined = [a for a in self.unmined if a.address.block_height != height]
        for anchoring in released:
            self.mined.append(anchoring)
            for i, node in enumerate(self.nodes):
                self.bus.send(
                    "ledger", f"node-{i}", "pub_data", self._on_node_pub_data, node,
                    anchoring.pub_data,
                )
            for client in self.clients:
                self.bus.send(
                    "ledger",
                    client.label,
                    "pub_data",
                    client.on_pub_data,
                    anchoring.pub_data,
                )
            self.bus.send("ledger", "anchor", "mined", self._on_mined, anchoring)

    def _on_mined(self, anchoring: Anchoring) -> None:
        receipts = self.anchorer.issue_aux_receipts(anchoring)
        for client_id in sorted(receipts):
            aux_receipt = receipts[client_id]
            client = self.clients_by_id.get(client_id)
            if client is None:
                continue
            position = aux_receipt.path.position(len(anchoring.tree))
            assert position is not None
            k = anchoring.blocks[position // 2]
            self.bus.send(
                "anchor",
                client.label,
                "aux_receipt",
                client.on_aux_receipt,
                k,
                aux_receipt,
            )
        self.on_anchor_mined(anchoring)

    def on_anchor_mined(self, anchoring: Anchoring) -> None:
        pass

    def query_aux(self, client: SimClient, k: int) -> None:
        self.bus.send(client.label, "anchor", "aux_query", self._on_aux_query, client, k)

    def _on_aux_query(self, client: SimClient, k: int) -> None:
        for anchoring in self.anchorer.anchorings:
            if anchoring.first_k <= k <= anchoring.last_k:
                try:
                    aux_receipt = self.anchorer.additional_aux_receipt(
                        anchoring, client.identity, k
                    )
                except ClientNotInEpoch as exception:
                    logger.debug("aux query refused: %s", exception)
                    return
                self.bus.send(
                    "anchor",
                    client.label,
                    "aux_receipt",
                    client.on_aux_receipt,
                    k,
                    aux_receipt,
                )
                return

    def _on_node_pub_data(self, node: ServiceNode, pub_data: PubData) -> None:
        headers = {block.index: block.header for block in node.chain}
        self.reconcile(self.labels[node.identity], headers, pub_data)

    def reconcile(
        self, observer: str, headers: typing.Mapping[int, BlockHeader], pub_data: PubData
    ) -> None:
        """
        Recompute the auxiliary root from the observer's own headers and
        compare it with what was mined.
        """
        first = pub_data.last_anchor_index + 1
        last = pub_data.last_anchor_index + pub_data.epoch_length
        try:
            tree = build_aux_tree(headers, first, last)
        except MissingHeader as exception:
            logger.debug(
                "%s cannot reconcile blocks %d..%d: %s", observer, first, last, exception
            )
            return
        if tree.root != pub_data.aux_root:
            self.anomalies.record(
                self.loop.now, observer, "AuxOmission", f"blocks {first}..{last}"
            )

    # results

    def verify_evidence(self, evidence: Evidence) -> typing.List[Verdict]:
        verdicts = []
        if evidence.first_receipt is not None:
            verdicts.append(
                verify_level1(
                    evidence.tx,
                    evidence.first_receipt,
                    self.assumptions,
                    data=evidence.data,
                )
            )
        if evidence.receipt is not None and evidence.header is not None:
            verdicts.append(
                verify_level2(
                    evidence.receipt, evidence.header, self.assumptions, data=evidence.data
                )
            )
        if evidence.receipt is not None and evidence.aux_receipt is not None:
            verdicts.append(
                verify_level3(
                    evidence.receipt,
                    evidence.aux_receipt,
                    None,
                    self.assumptions,
                    header=evidence.header,
                    data=evidence.data,
                )
            )
        return verdicts

    def verify_all(self) -> None:
        for client in self.clients:
            for evidence in client.evidence:
                evidence.verdicts = self.verify_evidence(evidence)

    def latency_violations(self) -> int:
        interval = self.config.block_interval_ms
        bound = self.config.m * interval + self.config.public_block_interval_ms
        violations = 0
        for client in self.clients:
            for evidence in client.evidence:
                times = (evidence.t1, evidence.t2, evidence.t3)
                if None in times:
                    continue
                t1, t2, t3 = typing.cast(typing.Tuple[int, int, int], times)
                if not (t1 < t2 < t3 and t2 - t1 <= interval and t3 - t2 <= bound):
                    violations += 1
        return violations

    def evaluate(self) -> typing.Optional[typing.Dict[str, typing.Any]]:
        return None

    def report(self, attack: typing.Optional[typing.Dict[str, typing.Any]]) -> SimReport:
        verification: typing.Dict[str, typing.Dict[str, typing.Any]] = {
            str(level): {"accepted": 0, "rejected": 0, "reasons": {}}
            for level in (1, 2, 3)
        }
        timeline = []
        for client in self.clients:
            for evidence in client.evidence:
                for verdict in evidence.verdicts:
                    summary = verification[str(verdict.level)]
                    if verdict:
                        summary["accepted"] += 1
                    else:
                        assert verdict.reason is not None
                        summary["rejected"] += 1
                        reasons = summary["reasons"]
                        reason = verdict.reason.value
                        reasons[reason] = reasons.get(reason, 0) + 1
                timeline.append(
                    {
                        "client": client.label,
                        "tx": evidence.tx.digest.hex(),
                        "attempt": evidence.attempt,
                        "validator": self.labels[evidence.validator],
                        "status": evidence.status.value,
                        "block": evidence.block,
                        "t_submit": evidence.submitted_at,
                        "t1": evidence.t1,
                        "t2": evidence.t2,
                        "t3": evidence.t3,
                        "verdicts": [verdict.to_dict() for verdict in evidence.verdicts],
                    }
                )
        return SimReport(
            scenario=self.config.scenario,
            seed=self.config.seed,
            config=self.config.model_dump(),
            timeline=timeline,
            verification=verification,
            anomalies=self.anomalies.to_list(),
            attack=attack,
            chain_height=self.chain_height(),
            anchorings=len(self.mined),
            latency_violations=self.latency_violations(),
            simulation=self,
        )


def _outcome(
    details: typing.Dict[str, typing.Any], outcome: AttackOutcome
) -> typing.Dict[str, typing.Any]:
    return {"outcome": outcome.value, **details}


class FakeOwnerSimulation(Simulation):
    """
    Every node colludes with client-1 and, whenever client-0 is committed,
    slips in transactions crediting client-0's data to client-1.
    """

    scenario = "fake_owner"

    def __init__(self, config: SimConfig, **kwargs: typing.Any) -> None:
        if config.num_clients < 2:
            raise InvalidConfig("fake_owner needs at least two clients")
        super().__init__(config, **kwargs)
        self.victim, self.colluder = self.clients[0], self.clients[1]
        self.forged: typing.Dict[Transaction, Transaction] = {}

    def make_node(self, index: int, keys: KeyPair) -> ServiceNode:
        return ForgingNode(keys, self.registry, forge=self._forge, **self.node_options())

    def _forge(
        self, groups: typing.Dict[Identity, typing.List[Transaction]]
    ) -> typing.Dict[Identity, typing.List[Transaction]]:
        victim_txs = groups.get(self.victim.identity, [])
        fresh = []
        for tx in victim_txs:
            for forged in (
                forge_owner(tx, self.colluder.keys),
                forge_owner(tx, self.colluder.keys, self.rng.randbytes(SIGNATURE_SIZE)),
            ):
                if forged not in self.forged:
                    self.forged[forged] = tx
                    fresh.append(forged)
        if not fresh:
            return groups
        forged_groups = dict(groups)
        colluder_txs = list(groups.get(self.colluder.identity, []))
        forged_groups[self.colluder.identity] = colluder_txs + fresh
        return forged_groups

    def evaluate(self) -> typing.Dict[str, typing.Any]:
        claimed = {evidence.tx: evidence.data for evidence in self.victim.evidence}
        colluding_validator = self.nodes[0].keys
        bundles = []
        for forged, victim_tx in self.forged.items():
            data = claimed[victim_tx]
            verdicts = [
                verify_level1(
                    forged,
                    make_first_receipt(colluding_validator, forged),
                    self.assumptions,
                    data=data,
                )
            ]
            for k, receipts in sorted(self.colluder.receipts.items()):
                for receipt in receipts:
                    if forged not in receipt.transactions:
                        continue
                    verdicts.append(
                        verify_level2(
                            receipt, self.colluder.headers[k], self.assumptions, data=data
                        )
                    )
                    aux_receipt = self.colluder.aux_receipts.get(k)
                    if aux_receipt is not None:
                        verdicts.append(
                            verify_level3(
                                receipt,
                                aux_receipt,
                                None,
                                self.assumptions,
                                header=self.colluder.headers[k],
                                data=data,
                            )
                        )
            bundles.append(
                {
                    "tx": forged.digest.hex(),
                    "verdicts": [verdict.to_dict() for verdict in verdicts],
                }
            )
        accepted = sum(
            1
            for bundle in bundles
            for verdict in bundle["verdicts"]
            if verdict["accepted"]
        )
        outcome = AttackOutcome.SUCCEEDED if accepted else AttackOutcome.FAILED
        return _outcome({"forged_bundles": bundles, "accepted": accepted}, outcome)


class GhostProxySimulation(Simulation):
    """
    All nodes and client-0 rewrite proxy history right after a non-anchorage
    block to slip in a back-dated transaction, then resend everything.
    """

    scenario = "ghost_proxy"

    def __init__(self, config: SimConfig, **kwargs: typing.Any) -> None:
        first = config.rewrite_block or 1
        if first % config.m == 0:
            raise InvalidConfig(
                f"ghost_proxy needs a block that is not an anchorage, got {first}"
            )
        super().__init__(config, **kwargs)
        targets: typing.List[int] = []
        k = first
        while len(targets) < config.rewrite_frequency:
            if k % config.m:
                targets.append(k)
            k += 1
        self.targets = frozenset(targets)
        self.colluder = self.clients[0]
        self.ghosts: typing.List[typing.Tuple[int, bytes, Transaction]] = []

    def on_block_final(self, block: Block) -> None:
        if block.index in self.targets:
            self.loop.after(self.config.block_interval_ms // 2, self.rewrite, block.index)

    def rewrite(self, k: int) -> None:
        chain = self.nodes[0].chain
        created_at = chain[k - 1].header.created_at
        data = b"ghost document " + self.rng.randbytes(16)
        ghost = make_transaction(self.colluder.keys, data, created_at - 1)
        self.ghosts.append((k, data, ghost))
        committers = {node.identity: node.keys for node in self.nodes}
        rewritten, receipts = rewrite_chain(
            chain,
            k,
            {k: [ghost]},
            committers,
            self.anchorer.state.keys.box_public,
            self.ephemeral,
        )
        for node in self.nodes:
            node.replace_chain(rewritten)
        for block in rewritten[k - 1 :]:
            self.distribute(block.header.committer, block, receipts[block.index])

    def evaluate(self) -> typing.Dict[str, typing.Any]:
        ghosts = []
        accepted_level2 = False
        for k, data, ghost in self.ghosts:
            verdicts = []
            for receipt in reversed(self.colluder.receipts.get(k, [])):
                if ghost not in receipt.transactions:
                    continue
                header = self.colluder.headers[k]
                verdicts.append(
                    verify_level2(receipt, header, self.assumptions, data=data)
                )
                aux_receipt = self.colluder.aux_receipts.get(k)
                if aux_receipt is not None:
                    verdicts.append(
                        verify_level3(
                            receipt,
                            aux_receipt,
                            None,
                            self.assumptions,
                            header=header,
                            data=data,
                        )
                    )
                break
            accepted_level2 = accepted_level2 or any(v.level == 2 and v for v in verdicts)
            ghosts.append(
                {
                    "block": k,
                    "tx": ghost.digest.hex(),
                    "verdicts": [v.to_dict() for v in verdicts],
                }
            )
        detected_by = sorted(self.anomalies.observers("HeaderRewrite"))
        details = {
            "rewrites": ghosts,
            "header_rewrite_observers": detected_by,
            "header_rewrites": self.anomalies.count("HeaderRewrite"),
            "receipt_mismatches": self.anomalies.count("ReceiptMismatch"),
        }
        if not accepted_level2:
            outcome = AttackOutcome.FAILED
        elif detected_by:
            outcome = AttackOutcome.SUCCEEDED_BUT_DETECTABLE
        else:
            outcome = AttackOutcome.SUCCEEDED
        return _outcome(details, outcome)


class GhostPublicSimulation(Simulation):
    """
    Same collusion as the proxy version, plus the anchorer, but the
    rewritten block is already anchored on the public ledger.
    """

    scenario = "ghost_public"

    def __init__(self, config: SimConfig, **kwargs: typing.Any) -> None:
        target = config.rewrite_block or config.m
        if target % config.m:
            raise InvalidConfig(f"ghost_public needs an anchorage block, got {target}")
        super().__init__(config, **kwargs)
        self.target = target
        self.colluder = self.clients[0]
        self.result: typing.Optional[typing.Dict[str, typing.Any]] = None

    def on_anchor_mined(self, anchoring: Anchoring) -> None:
        if self.result is None and anchoring.first_k <= self.target <= anchoring.last_k:
            self.result = self.attack(anchoring)

    def attack(self, anchoring: Anchoring) -> typing.Dict[str, typing.Any]:
        k = self.target
        chain = self.nodes[0].chain
        original = chain[k - 1].header
        data = b"ghost document " + self.rng.randbytes(16)
        ghost = make_transaction(self.colluder.keys, data, original.created_at - 1)
        committers = {node.identity: node.keys for node in self.nodes}
        rewritten, receipts = rewrite_chain(
            chain,
            k,
            {k: [ghost]},
            committers,
            self.anchorer.state.keys.box_public,
            self.ephemeral,
        )
        for node in self.nodes:
            node.replace_chain(rewritten)
        receipt = receipts[k][self.colluder.identity]
        header = rewritten[k - 1].header

        headers = dict(self.anchorer.state.observed_headers)
        headers[k] = header
        tree = build_aux_tree(headers, anchoring.first_k, anchoring.last_k)
        forged_path = merkle_path(tree, 2 * (k - anchoring.first_k))
        anchorer_keys = self.anchorer.state.keys
        fresh_pub_data = dataclasses.replace(anchoring.pub_data, aux_root=tree.root)
        bundles = {
            "new_pub_data_old_address": seal(
                AuxReceipt(
                    anchoring.first_k,
                    anchoring.last_k,
                    fresh_pub_data,
                    anchoring.address,
                    forged_path,
                ),
                anchorer_keys,
            ),
            "old_pub_data_new_path": seal(
                AuxReceipt(
                    anchoring.first_k,
                    anchoring.last_k,
                    anchoring.pub_data,
                    anchoring.address,
                    forged_path,
                ),
                anchorer_keys,
            ),
        }
        verdicts = {
            name: verify_level3(
                receipt, aux_receipt, None, self.assumptions, header=header, data=data
            )
            for name, aux_receipt in bundles.items()
        }
        committer = self.nodes_by_id[header.committer].keys
        search_accepted = forgery_search(
            self.rng,
            receipt,
            bundles["old_pub_data_new_path"],
            committer,
            anchorer_keys,
            self.config.forgery_attempts,
            lambda r, a: bool(verify_level3(r, a, None, self.assumptions, data=data)),
        )
        return {
            "block": k,
            "tx": ghost.digest.hex(),
            "bundles": {name: verdict.to_dict() for name, verdict in verdicts.items()},
            "forgery_attempts": self.config.forgery_attempts,
            "forgery_accepted": search_accepted,
        }

    def evaluate(self) -> typing.Dict[str, typing.Any]:
        if self.result is None:
            return _outcome(
                {"reason": f"block {self.target} was never anchored"}, AttackOutcome.FAILED
            )
        accepted = self.result["forgery_accepted"] + sum(
            1 for verdict in self.result["bundles"].values() if verdict["accepted"]
        )
        outcome = AttackOutcome.SUCCEEDED if accepted else AttackOutcome.FAILED
        return _outcome(self.result, outcome)


class DosSimulation(Simulation):
    """
    One misbehaving participant tries to deny service without forging
    anything.
    """

    scenario = "dos"

    def __init__(self, config: SimConfig, variant: str, **kwargs: typing.Any) -> None:
        if variant not in DOS_VARIANTS:
            raise InvalidConfig(f"unknown dos variant {variant!r}")
        if variant in ("drop", "silent_validator") and config.num_nodes < 2:
            raise InvalidConfig(f"dos {variant} needs at least two service nodes")
        self.variant = variant
        super().__init__(config, **kwargs)
        self.flood_scheduled = False
        self.registration_failed = False
        self.past_evidence: typing.List[Evidence] = []

    def make_node(self, index: int, keys: KeyPair) -> ServiceNode:
        if index == 0 and self.variant == "drop":
            return DroppingValidator(keys, self.registry, **self.node_options())
        if index == 0 and self.variant == "silent_validator":
            return SilentValidator(keys, self.registry, **self.node_options())
        return super().make_node(index, keys)

    def make_anchorer(self, keys: KeyPair) -> AuxiliaryNode:
        if self.variant == "aux_omission":
            return OmittingAnchorer(
                keys, self.registry, self.config.m, self.ledger, omit=(0,)
            )
        return super().make_anchorer(keys)

    def on_anchor_mined(self, anchoring: Anchoring) -> None:
        if self.variant == "ca_flood" and not self.flood_scheduled:
            self.flood_scheduled = True
            self.loop.after(self.config.block_interval_ms // 2, self.flood_ca)

    def flood_ca(self) -> None:
        self.registry.online = False
        self.past_evidence = [
            evidence
            for client in self.clients
            for evidence in client.evidence
            if evidence.t3
        ]
        newcomer = keygen(self.seed_for("client", len(self.clients)))
        try:
            self.registry.register(newcomer, Role.CLIENT)
        except CAUnavailable as exception:
            self.registration_failed = True
            self.anomalies.record(
                self.loop.now, "newcomer", "CAUnavailable", str(exception)
            )
        for client in self.clients:
            data = f"document {client.index}.late ".encode() + self.rng.randbytes(16)
            client.plan(self.safe_time(self.next_boundary(self.loop.now)), data)

    def evaluate(self) -> typing.Dict[str, typing.Any]:
        evidence = [e for client in self.clients for e in client.evidence]
        details: typing.Dict[str, typing.Any] = {"variant": self.variant}
        if self.variant == "drop":
            noticed = self.anomalies.count("MissingFirstReceipt") > 0
        elif self.variant == "silent_validator":
            missing = self.anomalies.count("MissingReceipt")
            noticed = missing + self.anomalies.count("ReceiptMismatch") > 0
        elif self.variant == "aux_omission":
            honest = {f"node-{i}" for i in range(len(self.nodes))} | {
                client.label for client in self.clients
            }
            observers = self.anomalies.observers("AuxOmission")
            details["aux_omission_observers"] = sorted(observers)
            noticed = honest <= observers
        else:
            details["registration_failed"] = self.registration_failed
            details["past_evidence"] = len(self.past_evidence)
            details["past_evidence_verified"] = all(
                e.fully_accepted for e in self.past_evidence
            )
            flooded = self.anomalies.count("CAUnavailable") > 0
            noticed = self.registration_failed and flooded
        documents = {e.data for e in evidence}
        served = {e.data for e in evidence if e.fully_accepted}
        details["documents"] = len(documents)
        details["documents_notarized"] = len(served)
        if noticed:
            outcome = AttackOutcome.DETECTED
        elif served == documents:
            outcome = AttackOutcome.FAILED
        else:
            outcome = AttackOutcome.SUCCEEDED
        return _outcome(details, outcome)


Scenario = typing.Callable[..., SimReport]


class ScenarioRegistry:
    """
    Scenarios selectable by name. A function registers under its own name
    without the `scenario_` prefix.
    """

    def __init__(self) -> None:
        self.callbacks: typing.Dict[str, Scenario] = {}

    def __contains__(self, name: object) -> bool:
        return name in self.callbacks

    def names(self) -> typing.List[str]:
        return sorted(self.callbacks)

    def register(self, func: Scenario) -> Scenario:
        self.callbacks[func.__name__[len("scenario_") :]] = func
        return func

    def add(self, name: str, func: Scenario) -> None:
        self.callbacks[name] = func

    def get(self, name: str) -> Scenario:
        try:
            return self.callbacks[name]
        except KeyError:
            raise UnknownScenario(
                f"unknown scenario {name!r}, choose from {', '.join(self.names())}"
            ) from None


SCENARIOS = ScenarioRegistry()


def run(config: SimConfig, *, trace: bool = False) -> SimReport:
    return SCENARIOS.get(config.scenario)(config, trace=trace)


@SCENARIOS.register
def scenario_happy_path(config: SimConfig, *, trace: bool = False) -> SimReport:
    return Simulation(config, trace=trace).run()


@SCENARIOS.register
def scenario_fake_owner(config: SimConfig, *, trace: bool = False) -> SimReport:
    return FakeOwnerSimulation(config, trace=trace).run()


@SCENARIOS.register
def scenario_ghost_proxy(config: SimConfig, *, trace: bool = False) -> SimReport:
    return GhostProxySimulation(config, trace=trace).run()


@SCENARIOS.register
def scenario_ghost_public(config: SimConfig, *, trace: bool = False) -> SimReport:
    return GhostPublicSimulation(config, trace=trace).run()


def scenario_dos(config: SimConfig, variant: str, *, trace: bool = False) -> SimReport:
    return DosSimulation(config, variant, trace=trace).run()


def _dos(variant: str) -> Scenario:
    def scenario(config: SimConfig, *, trace: bool = False) -> SimReport:
        return scenario_dos(config, variant, trace=trace)

    scenario.__name__ = f"scenario_dos_{variant}"
    return scenario


for _variant in DOS_VARIANTS:
    SCENARIOS.register(_dos(_variant))
