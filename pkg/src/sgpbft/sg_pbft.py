"""SG-PBFT.

Score-grouped PBFT. Half the nodes form the consensus set and order
requests, the other half are passive candidates. The commit broadcast is
replaced by a response phase: each prepared consensus node sends its local
result to the master, which finalizes once enough responses match and then
broadcasts the result, with the responses as a certificate, to every node.

A fault-free consensus with `CN = n/2` sends `CN - 1` pre-prepares,
`(CN - 1)²` prepares and `CN - 1` responses: `(n/2 - 1)(n/2 + 1)` messages.
"""

# standard
from dataclasses import dataclass, field
import logging
import random
from typing import Dict, List, Optional, Set, Tuple

# local
from sgpbft.client import Client, ClientState
from sgpbft.crypto.authenticator import KeyTable
from sgpbft.messages import (
    Digest,
    MessageKind,
    NodeId,
    ProtocolMessage,
    RequestKey,
    SeqNum,
    Timeout,
    View,
    digest_of,
)
from sgpbft.replica import (
    Application,
    Event,
    Replica,
    ReplicaState,
    Slot,
    SlotId,
    quorum_size,
    slot_label,
)
from sgpbft.scoring import (
    INITIAL_SCORE,
    ROTATION_PERIOD,
    Committee,
    NodeSets,
    default_rotation_m,
)
from sgpbft.utils import ConfigurationError

logger = logging.getLogger(__name__)

CONSENSUS = "consensus"
CANDIDATE = "candidate"


@dataclass
class MasterCollector:
    """Responses the master gathered for one `(view, seq)`."""

    view: View
    seq: SeqNum
    digest: Digest
    responses: Dict[NodeId, ProtocolMessage] = field(default_factory=dict)
    finalized: Optional[bytes] = None
    scored: Set[NodeId] = field(default_factory=set)

    @property
    def result_multiset(self):
        """Responders grouped by the result they reported, in arrival order."""
        grouped: Dict[bytes, Set[NodeId]] = {}
        for node, response in self.responses.items():
            if response.result is not None:
                grouped.setdefault(response.result, set()).add(node)
        return grouped

    def record(self, response: ProtocolMessage, /):
        """Keep the first response of each node.

        Returns:
            (bool): `False` for a repeated responder.
        """
        if response.sender in self.responses or not isinstance(response.sender, int):
            return False
        self.responses[response.sender] = response
        return True

    def judgments(self) -> Dict[NodeId, Optional[bytes]]:
        """Result reported by each responder."""
        return {node: response.result for node, response in self.responses.items()}

    def unscored(self):
        """Judgments not yet handed to the committee, which are then marked scored."""
        fresh = {node: r for node, r in self.judgments().items() if node not in self.scored}
        self.scored.update(fresh)
        return fresh


def sg_finalize(
    collector: MasterCollector,
    f: int,
    /,
    *,
    cn: Optional[int] = None,
    strict: bool = False,
):
    """Finalize the first result backed by enough distinct responders.

    The threshold is the quorum of a `cn`-node consensus set (`2f + 1` when
    `cn = 3f + 1`, the default), plus one in strict mode.

    Examples:
        >>> collector = MasterCollector(0, 0, b"d")
        >>> for node in (0, 1, 2):
        ...     _ = collector.record(
        ...         ProtocolMessage(MessageKind.RESPONSE, 0, 0, b"d", node, result=b"A")
        ...     )
        >>> result, certificate = sg_finalize(collector, 1)
        >>> result, [m.sender for m in certificate]
        (b'A', [0, 1, 2])
        >>> sg_finalize(collector, 1) is None
        True

    Returns:
        (Optional[Tuple[bytes, Tuple[ProtocolMessage, ...]]]):
            The result and its certificate, once; `None` otherwise.
    """
    if collector.finalized is not None:
        return None
    threshold = quorum_size(3 * f + 1 if cn is None else cn, f) + (1 if strict else 0)
    for result, responders in collector.result_multiset.items():
        if len(responders) >= threshold:
            collector.finalized = result
            certificate = tuple(collector.responses[node] for node in sorted(responders))
            return result, certificate
    return None


def verify_certificate(message: ProtocolMessage, /, *, keys: KeyTable, committee: Committee):
    """Check that `message` carries enough authentic responses for its result.

    Returns:
        (Optional[str]): Why the certificate is rejected, or `None` if it holds.
    """
    if message.result is None:
        return "missing result"
    members = committee.consensus_at(message.seq)
    responders: Set[NodeId] = set()
    for response in message.certificate:
        if (
            response.kind is not MessageKind.RESPONSE
            or response.view != message.view
            or response.seq != message.seq
            or response.digest != message.digest
            or response.result != message.result
        ):
            return "certificate does not match"
        if not isinstance(response.sender, int) or response.sender not in members:
            return "certificate from a non-member"
        if not keys.verify(response):
            return "forged certificate"
        responders.add(response.sender)
    if len(responders) < committee.threshold:
        return "certificate below threshold"
    return None


@dataclass
class SgReplicaState(ReplicaState):
    """Replica state plus the response phase bookkeeping."""

    local_results: Dict[SlotId, bytes] = field(default_factory=dict)
    collectors: Dict[SlotId, MasterCollector] = field(default_factory=dict)
    outcomes: Dict[RequestKey, ProtocolMessage] = field(default_factory=dict)


class SgReplica(Replica):
    """An SG-PBFT node whose role follows the shared committee."""

    def __init__(
        self,
        state: SgReplicaState,
        committee: Committee,
        *,
        keys: KeyTable,
        app: Optional[Application] = None,
    ):
        """Bind `state` to the committee it votes in or waits on."""
        super().__init__(state, f=committee.f, keys=keys, app=app)
        self.state: SgReplicaState = state
        self.committee = committee

    @property
    def role(self):
        """`consensus` or `candidate`."""
        return CONSENSUS if self.committee.is_consensus(self.state.id) else CANDIDATE

    def members(self):
        """Current consensus set in ascending id order."""
        return self.committee.voters

    def master_of(self, view: View, /):
        """Consensus node at position `view mod CN`."""
        return self.committee.master(view)

    @property
    def is_member(self):
        """Whether this node is in the consensus set."""
        return self.committee.is_consensus(self.state.id)

    def accepts_requests(self):
        """Only consensus nodes order requests."""
        return self.is_member

    def seq_floor(self):
        """Sequence numbers never reach back before the current membership."""
        return self.committee.epoch_start

    def cached_reply(self, key: RequestKey, /):
        """A certified reply rebuilt from the applied result broadcast."""
        outcome = self.state.outcomes.get(key)
        if outcome is None:
            return None
        return self.sign(
            ProtocolMessage(
                MessageKind.REPLY,
                outcome.view,
                outcome.seq,
                outcome.digest,
                self.state.id,
                result=outcome.result,
                certificate=outcome.certificate,
            )
        )

    def receive(self, message: ProtocolMessage, /):
        """Candidates only listen for result broadcasts."""
        if message.kind is not MessageKind.RESULT_BROADCAST and not self.is_member:
            return "candidate"
        return super().receive(message)

    def dispatch(self, message: ProtocolMessage, /):
        """Route pre-prepares, prepares, responses and result broadcasts."""
        kind = message.kind
        if kind is MessageKind.PRE_PREPARE:
            return self.on_pre_prepare(message)
        if kind is MessageKind.PREPARE:
            return self.on_prepare(message)
        if kind is MessageKind.RESPONSE:
            return self.on_response(message)
        if kind is MessageKind.RESULT_BROADCAST:
            return self.on_result_broadcast(message)
        return f"unexpected {kind.label}"

    def on_prepared(self, slot: Slot, /):
        """Compute the local result and hand one response to the master.

        A request this node already applied is answered with the applied result.
        """
        pre_prepare = slot.pre_prepare
        assert pre_prepare is not None and pre_prepare.body is not None  # nosec B101
        result = self.state.executed.get(pre_prepare.body.key)
        if result is None:
            result = self.app.execute(pre_prepare.body)
        self.state.local_results[(pre_prepare.view, pre_prepare.seq)] = result
        response = self.sign(
            ProtocolMessage(
                MessageKind.RESPONSE,
                pre_prepare.view,
                pre_prepare.seq,
                pre_prepare.digest,
                self.state.id,
                result=result,
            )
        )
        if self.is_master:
            self.collect(response)
        else:
            self.send(response, [self.master_of(pre_prepare.view)])

    def on_response(self, message: ProtocolMessage, /):
        """Collect a consensus node's judgment at the master."""
        if self.master_of(message.view) != self.state.id:
            return "response to a non-master"
        sender = message.sender
        if sender == self.state.id or sender not in self.members():
            return "response from a non-member"
        slot = self.state.log.get((message.view, message.seq))
        if slot is None or slot.digest != message.digest:
            return "response digest mismatch"
        return self.collect(message)

    def collect(self, response: ProtocolMessage, /):
        """Record `response` and broadcast the result the first time a quorum agrees."""
        slot_id = (response.view, response.seq)
        collector = self.state.collectors.get(slot_id)
        if collector is None:
            collector = MasterCollector(response.view, response.seq, response.digest)
            self.state.collectors[slot_id] = collector
        if not collector.record(response):
            return "duplicate response"
        outcome = sg_finalize(
            collector, self.f, cn=len(self.members()), strict=self.committee.strict
        )
        if outcome is not None:
            self.broadcast_result(self.state.log[slot_id], *outcome)
        return None

    def broadcast_result(
        self, slot: Slot, result: bytes, certificate: Tuple[ProtocolMessage, ...], /
    ):
        """Send the certified result to every other node and the client, then apply it."""
        pre_prepare = slot.pre_prepare
        assert pre_prepare is not None and pre_prepare.body is not None  # nosec B101
        request = pre_prepare.body
        broadcast = self.sign(
            ProtocolMessage(
                MessageKind.RESULT_BROADCAST,
                pre_prepare.view,
                pre_prepare.seq,
                pre_prepare.digest,
                self.state.id,
                body=request,
                result=result,
                certificate=certificate,
                evidence=pre_prepare.evidence,
            )
        )
        self.send(broadcast, [node for node in self.committee.nodes if node != self.state.id])
        reply = self.sign(
            ProtocolMessage(
                MessageKind.REPLY,
                pre_prepare.view,
                pre_prepare.seq,
                pre_prepare.digest,
                self.state.id,
                result=result,
                certificate=certificate,
            )
        )
        self.send(reply, [request.client])
        logger.debug("master %s finalized seq %s", self.state.id, pre_prepare.seq)
        self.apply_outcome(broadcast)

    def on_result_broadcast(self, message: ProtocolMessage, /):
        """Apply a certified result, on consensus nodes and candidates alike."""
        request = message.body
        if request is None or digest_of(request) != message.digest:
            return "digest mismatch"
        if request.key in self.state.executed:
            return "duplicate result"
        if message.evidence and not self.valid_origin(message):
            return "invalid origin"
        reason = verify_certificate(message, keys=self.keys, committee=self.committee)
        if reason is not None:
            return reason
        if message.view > self.state.view:
            self.adopt(message.view, convict=False)
        self.apply_outcome(message)
        return None

    def apply_outcome(self, broadcast: ProtocolMessage, /):
        """Apply the result carried by `broadcast` once."""
        request = broadcast.body
        assert request is not None and broadcast.result is not None  # nosec B101
        if not self.finish(request, broadcast.result, *slot_label(broadcast)):
            return
        self.state.outcomes[request.key] = broadcast
        slot = self.state.log.get((broadcast.view, broadcast.seq))
        if slot is not None:
            slot.executed = True
            slot.result = broadcast.result

    # catch-up

    def held_outcomes(self):
        """Result broadcasts applied from the current view, in request order."""
        view = self.state.view
        return tuple(
            outcome for _, outcome in sorted(self.state.outcomes.items()) if outcome.view == view
        )

    def catch_up(self, vote: ProtocolMessage, /):
        """Answer the request a voter timed out on and apply the outcomes it carries.

        The original signed broadcast is forwarded as is, so its certificate
        still proves the result wherever it lands.
        """
        request = vote.body
        if request is not None:
            outcome = self.state.outcomes.get(request.key)
            if outcome is not None:
                self.send(outcome, [vote.sender])
        for outcome in vote.certificate:
            if outcome.kind is MessageKind.RESULT_BROADCAST and self.keys.verify(outcome):
                self.on_result_broadcast(outcome)

    def forward_outcomes(self, previous: View, target: View, /):
        """Send candidates every outcome this node holds from views `previous..target - 1`."""
        if not self.is_member:
            return
        for _, outcome in sorted(self.state.outcomes.items()):
            if previous <= outcome.view < target:
                self.send(outcome, self.committee.candidates)


def sg_init(
    n_total: int,
    f: int,
    seed: int,
    /,
    *,
    rotation_m: Optional[int] = None,
    rotation_period: int = ROTATION_PERIOD,
):
    """Shuffle the nodes with `seed` and split them into consensus and candidates.

    Examples:
        >>> states, sets = sg_init(8, 1, 42)
        >>> len(sets.consensus), len(sets.candidates), set(sets.scores.values())
        (4, 4, {100})

    Raises:
        (ConfigurationError): If `n_total` is odd or `n_total / 2 < 3f + 1`.
    """
    if f < 0:
        raise ConfigurationError("`f` must be non-negative")
    if n_total < 2 or n_total % 2:
        raise ConfigurationError(f"SG-PBFT needs an even node count, got {n_total}")
    cn = n_total // 2
    if cn < 3 * f + 1:
        raise ConfigurationError(f"SG-PBFT needs n/2 >= 3f + 1, got n={n_total} f={f}")
    if rotation_period < 1:
        raise ConfigurationError("`rotation_period` must be positive")
    order = list(range(n_total))
    random.Random(seed).shuffle(order)  # nosec B311
    sets = NodeSets(
        consensus=tuple(order[:cn]),
        candidates=tuple(order[cn:]),
        scores={node: INITIAL_SCORE for node in range(n_total)},
        rotation_m=default_rotation_m(cn) if rotation_m is None else rotation_m,
        rotation_period=rotation_period,
    )
    states: List[SgReplicaState] = [SgReplicaState(id=node) for node in range(n_total)]
    return states, sets


def sg_step(replica: SgReplica, event: Event, /):
    """Advance `replica` by one delivered message or fired timer."""
    return replica.step(event)


def sg_view_change(replica: SgReplica, timeout: Timeout, /):
    """Handle an expired request timer among the consensus nodes."""
    return replica.step(timeout)


def sg_client_step(
    state: ClientState,
    reply: ProtocolMessage,
    /,
    *,
    keys: KeyTable,
    committee: Committee,
    now: int = 0,
):
    """Accept the first reply whose certificate holds."""
    if not isinstance(reply.sender, int) or reply.result is None:
        return state
    state.replies.setdefault(reply.result, set()).add(reply.sender)
    if state.completed_at is None:
        reason = verify_certificate(reply, keys=keys, committee=committee)
        if reason is None:
            state.completed_at = now
            state.result = reply.result
            state.accepted = reply
        else:
            logger.debug("client rejected reply from %s: %s", reply.sender, reason)
    return state


class SgClient(Client):
    """Client that trusts a single certified reply."""

    def __init__(self, committee: Committee, keys: KeyTable, **kwargs: str):
        """Track requests for an SG-PBFT group."""
        super().__init__(keys, **kwargs)
        self.committee = committee

    def targets(self):
        """Current consensus nodes."""
        return self.committee.voters

    def master(self):
        """Master of the latest view seen in a reply."""
        return self.committee.master(self.view_hint)

    def accept(self, state: ClientState, reply: ProtocolMessage, now: int, /):
        """Verify the reply's certificate."""
        return sg_client_step(state, reply, keys=self.keys, committee=self.committee, now=now)
