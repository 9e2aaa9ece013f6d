"""Replica.

Machinery shared by the PBFT and SG-PBFT engines: authenticator checks, the
per-slot log, request timers, the timeout-driven view change and the
equivocation evidence it carries.

A replica owns a mutable `ReplicaState`. Stepping it with an event (a
delivered `ProtocolMessage` or a fired `Timeout`) advances that state in place
and returns a `Transition` listing what to send and which timers to arm. The
same event sequence always produces the same state and transitions.
"""

# standard
from dataclasses import dataclass, field
from hashlib import sha256
import logging
from typing import Dict, List, Optional, Protocol, Sequence, Set, Tuple, Union

# local
from sgpbft.crypto.authenticator import KeyTable
from sgpbft.messages import (
    ClientId,
    ClientRequest,
    Digest,
    MessageKind,
    NodeId,
    ProtocolMessage,
    RequestKey,
    Send,
    SeqNum,
    Timeout,
    Transition,
    View,
    digest_of,
)

logger = logging.getLogger(__name__)

Event = Union[ProtocolMessage, Timeout]
SlotId = Tuple[View, SeqNum]

# kinds that only make sense inside the view they were sent in
VIEW_BOUND_KINDS = frozenset(
    (
        MessageKind.PRE_PREPARE,
        MessageKind.PREPARE,
        MessageKind.COMMIT,
        MessageKind.RESPONSE,
    )
)


def quorum_size(n: int, f: int, /):
    """Smallest vote count such that any two quorums share an honest node.

    Reduces to `2f + 1` when `n = 3f + 1`.

    Examples:
        >>> quorum_size(4, 1)
        3
        >>> quorum_size(10, 3)
        7
        >>> quorum_size(7, 1)
        5
    """
    return (n + f + 2) // 2


def slot_label(message: ProtocolMessage, /) -> SlotId:
    """`(view, seq)` an outcome is recorded under.

    A pre-prepare that re-proposes a request carries the original pre-prepare
    as its only evidence, and the request keeps that pre-prepare's view.

    Examples:
        >>> first = ProtocolMessage(MessageKind.PRE_PREPARE, 0, 5, b"d", 0)
        >>> again = ProtocolMessage(MessageKind.PRE_PREPARE, 2, 5, b"d", 2, evidence=(first,))
        >>> slot_label(first), slot_label(again)
        ((0, 5), (0, 5))
    """
    if message.evidence:
        return (message.evidence[0].view, message.seq)
    return (message.view, message.seq)


class Application(Protocol):
    """The replicated state machine a replica executes requests against."""

    def execute(self, request: ClientRequest, /) -> bytes:
        """Compute the result of `request` without changing state."""
        ...

    def apply(self, request: ClientRequest, result: bytes, view: View, seq: SeqNum, /) -> None:
        """Commit an agreed `result` for `request`."""
        ...


class HashApplication:
    """Default state machine whose result is a digest of the operation."""

    def __init__(self):
        """Start with nothing applied."""
        self.applied: List[Tuple[RequestKey, bytes, View, SeqNum]] = []

    def execute(self, request: ClientRequest, /):
        """Digest of the operation bytes."""
        return sha256(b"sgpbft/result" + request.operation).digest()

    def apply(self, request: ClientRequest, result: bytes, view: View, seq: SeqNum, /):
        """Record the outcome in application order."""
        self.applied.append((request.key, result, view, seq))


@dataclass
class Slot:
    """Everything logged for one `(view, seq)`.

    Votes are indexed by the digest they endorse, so a vote that arrives
    before its pre-prepare is kept and counted once the pre-prepare shows up.
    """

    pre_prepare: Optional[ProtocolMessage] = None
    prepares: Dict[Digest, Set[NodeId]] = field(default_factory=dict)
    commits: Dict[Digest, Set[NodeId]] = field(default_factory=dict)
    prepared: bool = False
    committed: bool = False
    executed: bool = False
    result: Optional[bytes] = None

    @property
    def digest(self):
        """Digest of the logged pre-prepare, if any."""
        return None if self.pre_prepare is None else self.pre_prepare.digest

    def matching(self, votes: Dict[Digest, Set[NodeId]], /):
        """Voters that endorse the logged pre-prepare."""
        digest = self.digest
        if digest is None:
            return set()
        return votes.get(digest, set())


@dataclass
class ReplicaState:
    """One node's protocol state."""

    id: NodeId
    view: View = 0
    log: Dict[SlotId, Slot] = field(default_factory=dict)
    max_seq: SeqNum = -1
    pending: Dict[RequestKey, ClientRequest] = field(default_factory=dict)
    pending_timeouts: Set[Timeout] = field(default_factory=set)
    executed: Dict[RequestKey, bytes] = field(default_factory=dict)
    replies: Dict[RequestKey, ProtocolMessage] = field(default_factory=dict)
    proposed: Dict[RequestKey, SeqNum] = field(default_factory=dict)
    vote_target: View = 0
    view_votes: Dict[View, Set[NodeId]] = field(default_factory=dict)
    future: List[ProtocolMessage] = field(default_factory=list)
    seen_pre_prepares: Dict[Tuple[View, SeqNum, NodeId], ProtocolMessage] = field(
        default_factory=dict
    )
    evidence: Dict[Tuple[View, NodeId], str] = field(default_factory=dict)

    @property
    def next_seq(self):
        """Sequence number the node would assign to its next proposal as master."""
        return self.max_seq + 1

    @property
    def epoch(self):
        """Highest view this node is in or has voted to move to."""
        return max(self.view, self.vote_target)


class Replica:
    """Base replica: dispatching, timers and view change.

    Subclasses define the membership, the master schedule and what happens
    between a pre-prepare and execution.
    """

    def __init__(
        self,
        state: ReplicaState,
        *,
        f: int,
        keys: KeyTable,
        app: Optional[Application] = None,
    ):
        """Bind a state to the scenario key table and an application."""
        self.state = state
        self.f = f
        self.keys = keys
        self.app: Application = HashApplication() if app is None else app
        self._sends: List[Send] = []
        self._timers: List[Timeout] = []

    # membership, overridden by each protocol

    def members(self) -> Sequence[NodeId]:
        """Nodes that vote, in ascending id order."""
        raise NotImplementedError

    def master_of(self, view: View, /) -> NodeId:
        """Master node for `view`."""
        raise NotImplementedError

    @property
    def quorum(self):
        """Matching votes needed to prepare, commit or change view."""
        return quorum_size(len(self.members()), self.f)

    @property
    def is_member(self):
        """Whether this node currently votes."""
        return self.state.id in self.members()

    @property
    def is_master(self):
        """Whether this node is master of its current view."""
        return self.master_of(self.state.view) == self.state.id

    def peers(self):
        """Voting nodes other than this one."""
        return [node for node in self.members() if node != self.state.id]

    # stepping

    def step(self, event: Event, /):
        """Advance the state by one event and report what it produced."""
        self._sends, self._timers = [], []
        if isinstance(event, Timeout):
            self.on_timeout(event)
            return self._flush(None)
        if not self.keys.verify(event):
            return self._flush("unverifiable authenticator")
        return self._flush(self.receive(event))

    def _flush(self, reason: Optional[str], /):
        if reason is not None:
            logger.debug("node %s dropped message: %s", self.state.id, reason)
        transition = Transition(self._sends, self._timers, reason)
        self._sends, self._timers = [], []
        return transition

    def receive(self, message: ProtocolMessage, /) -> Optional[str]:
        """Handle an authenticated message; return a drop reason if it is ignored."""
        kind = message.kind
        if kind is MessageKind.REQUEST:
            return self.on_request(message)
        if kind is MessageKind.VIEW_CHANGE:
            return self.on_view_change(message)
        if not isinstance(message.sender, int):
            return "protocol message from a client"
        if kind in VIEW_BOUND_KINDS:
            if message.view > self.state.view:
                if message not in self.state.future:
                    self.state.future.append(message)
                return None
            if message.view < self.state.view:
                return "stale view"
        return self.dispatch(message)

    def dispatch(self, message: ProtocolMessage, /) -> Optional[str]:
        """Protocol-specific handling of pre-prepares and later phases."""
        raise NotImplementedError

    def send(self, message: ProtocolMessage, destinations: Sequence[Union[NodeId, ClientId]], /):
        """Queue `message` to each destination in order."""
        self._sends.extend(Send(dest, message) for dest in destinations)

    def sign(self, message: ProtocolMessage, /):
        """Authenticate a message originated by this node."""
        return self.keys.sign(message)

    def slot(self, view: View, seq: SeqNum, /):
        """The log slot for `(view, seq)`, created on first use."""
        return self.state.log.setdefault((view, seq), Slot())

    # requests and proposals

    def accepts_requests(self):
        """Whether this node takes part in ordering client requests."""
        return True

    def on_request(self, message: ProtocolMessage, /) -> Optional[str]:
        """Remember a client-signed request and propose it or arm its timer."""
        request = message.body
        if request is None or message.sender != request.client:
            return "malformed request"
        if not self.accepts_requests():
            return "not a voting node"
        key = request.key
        if key in self.state.executed:
            reply = self.cached_reply(key)
            if reply is not None:
                self.send(reply, [request.client])
            return None
        self.state.pending.setdefault(key, request)
        if self.is_master:
            if key not in self.state.proposed:
                self.propose(request)
        else:
            self.arm(key)
        return None

    def cached_reply(self, key: RequestKey, /) -> Optional[ProtocolMessage]:
        """Reply to resend when a client retransmits an applied request."""
        return self.state.replies.get(key)

    def seq_floor(self) -> SeqNum:
        """Lowest sequence number this node may assign."""
        return 0

    def pre_prepare_targets(self) -> Sequence[NodeId]:
        """Destinations of this node's pre-prepares."""
        return self.peers()

    def propose(self, request: ClientRequest, /, *, origin: Optional[ProtocolMessage] = None):
        """Broadcast a pre-prepare for `request`.

        A fresh request gets the next sequence number. With `origin`, an
        earlier pre-prepare of the same request, it keeps that sequence number
        and carries `origin` along.
        """
        state = self.state
        if origin is None:
            seq = max(state.next_seq, self.seq_floor())
        else:
            seq = origin.seq
        state.max_seq = max(state.max_seq, seq)
        pre_prepare = self.sign(
            ProtocolMessage(
                MessageKind.PRE_PREPARE,
                state.view,
                seq,
                digest_of(request),
                state.id,
                body=request,
                evidence=() if origin is None else (origin,),
            )
        )
        state.proposed[request.key] = seq
        self.observe_pre_prepare(pre_prepare)
        self.slot(state.view, seq).pre_prepare = pre_prepare
        self.send(pre_prepare, self.pre_prepare_targets())

    def on_pre_prepare(self, message: ProtocolMessage, /) -> Optional[str]:
        """Log a valid pre-prepare and answer it with a prepare."""
        state = self.state
        if message.sender != self.master_of(message.view):
            return "pre-prepare from a non-master"
        if message.sender == state.id:
            return "own pre-prepare"
        body = message.body
        if body is None or digest_of(body) != message.digest:
            return "digest mismatch"
        if message.evidence and not self.valid_origin(message):
            return "invalid origin"
        if self.observe_pre_prepare(message):
            return "conflicting pre-prepare"
        slot = self.slot(message.view, message.seq)
        if slot.pre_prepare is not None:
            return "duplicate pre-prepare"
        slot.pre_prepare = message
        state.max_seq = max(state.max_seq, message.seq)
        prepare = self.sign(
            ProtocolMessage(
                MessageKind.PREPARE, message.view, message.seq, message.digest, state.id
            )
        )
        slot.prepares.setdefault(message.digest, set()).add(state.id)
        self.send(prepare, self.peers())
        self.check_prepared(slot)
        return None

    def on_prepare(self, message: ProtocolMessage, /) -> Optional[str]:
        """Count a prepare vote."""
        sender = message.sender
        if sender == self.master_of(message.view):
            return "prepare from the master"
        if sender == self.state.id or sender not in self.members():
            return "prepare from a non-member"
        slot = self.slot(message.view, message.seq)
        votes = slot.prepares.setdefault(message.digest, set())
        if sender in votes:
            return "duplicate prepare"
        votes.add(sender)
        self.check_prepared(slot)
        return None

    def check_prepared(self, slot: Slot, /):
        """Fire `on_prepared` once the pre-prepare has `quorum - 1` matching prepares."""
        if slot.pre_prepare is None or slot.prepared:
            return
        if len(slot.matching(slot.prepares)) < self.quorum - 1:
            return
        slot.prepared = True
        self.on_prepared(slot)

    def on_prepared(self, slot: Slot, /):
        """Protocol-specific continuation once a slot is prepared."""
        raise NotImplementedError

    def finish(self, request: ClientRequest, result: bytes, view: View, seq: SeqNum, /):
        """Apply `result` once per request and stop its timers.

        Returns:
            (bool): `False` if the request had already been applied.
        """
        state = self.state
        key = request.key
        if key in state.executed:
            return False
        self.app.apply(request, result, view, seq)
        state.executed[key] = result
        state.pending.pop(key, None)
        state.max_seq = max(state.max_seq, seq)
        state.pending_timeouts = {t for t in state.pending_timeouts if t.key != key}
        return True

    # timers and view change

    def arm(self, key: RequestKey, /):
        """Arm the timer for `key` in the current epoch, once."""
        timeout = Timeout(self.state.epoch, key)
        if timeout not in self.state.pending_timeouts:
            self.state.pending_timeouts.add(timeout)
            self._timers.append(timeout)

    def can_vote(self):
        """Whether this node sends view-change votes."""
        return self.is_member

    def on_timeout(self, timeout: Timeout, /):
        """Suspect the master when a pending request's timer expires."""
        state = self.state
        if timeout not in state.pending_timeouts:
            return
        state.pending_timeouts.discard(timeout)
        if timeout.key in state.executed or timeout.key not in state.pending:
            return
        if timeout.view < state.epoch or not self.can_vote():
            return
        logger.info("node %s timed out on %s in view %s", state.id, timeout.key, timeout.view)
        self.start_view_change(timeout.view + 1, request=state.pending[timeout.key])

    def logged_pre_prepares(self):
        """Pre-prepares logged in the current view, applied or not."""
        view = self.state.view
        return tuple(
            slot.pre_prepare
            for (slot_view, _), slot in sorted(self.state.log.items())
            if slot_view == view and slot.pre_prepare is not None
        )

    def held_outcomes(self) -> Tuple[ProtocolMessage, ...]:
        """Certified outcomes a view-change vote hands to the other voters."""
        return ()

    def start_view_change(self, target: View, /, *, request: Optional[ClientRequest] = None):
        """Vote for `target` and re-arm pending timers against it.

        The vote names the `request` that timed out, if any, so peers that
        already applied it can pass the outcome on.
        """
        state = self.state
        state.vote_target = max(state.vote_target, target)
        state.view_votes.setdefault(target, set()).add(state.id)
        vote = self.sign(
            ProtocolMessage(
                MessageKind.VIEW_CHANGE,
                target,
                state.max_seq + 1,
                b"",
                state.id,
                body=request,
                certificate=self.held_outcomes(),
                evidence=self.logged_pre_prepares(),
            )
        )
        self.send(vote, self.peers())
        for key in sorted(state.pending):
            self.arm(key)
        self.check_view_votes(target)

    def on_view_change(self, message: ProtocolMessage, /) -> Optional[str]:
        """Count a view-change vote, joining at `f + 1` and adopting at quorum."""
        state = self.state
        sender = message.sender
        if not isinstance(sender, int) or sender not in self.members():
            return "view change from a non-member"
        self.catch_up(message)
        target = message.view
        if target <= state.view:
            return "stale view change"
        self.check_evidence(message.evidence)
        votes = state.view_votes.setdefault(target, set())
        if sender in votes:
            return "duplicate view change"
        votes.add(sender)
        if len(votes) >= self.f + 1 and target > state.vote_target and self.can_vote():
            self.start_view_change(target)
            return None
        self.check_view_votes(target)
        return None

    def catch_up(self, vote: ProtocolMessage, /):
        """Exchange applied outcomes with a voter."""

    def check_view_votes(self, target: View, /):
        """Adopt `target` once it has a quorum of votes."""
        if target > self.state.view and len(self.state.view_votes.get(target, ())) >= self.quorum:
            self.adopt(target)

    def adopt(self, target: View, /, *, convict: bool = True):
        """Move to view `target`, re-propose or re-arm pending work, replay buffered messages."""
        state = self.state
        previous = state.view
        if convict:
            for view in range(previous, target):
                self.record_evidence(view, self.master_of(view), "view change")
        state.view = target
        state.vote_target = max(state.vote_target, target)
        state.proposed.clear()
        state.pending_timeouts = {t for t in state.pending_timeouts if t.view >= target}
        state.view_votes = {v: votes for v, votes in state.view_votes.items() if v > target}
        logger.info("node %s adopted view %s (from %s)", state.id, target, previous)
        if self.accepts_requests():
            if self.is_master:
                self.repropose()
            else:
                for key in sorted(state.pending):
                    self.arm(key)
        self.forward_outcomes(previous, target)
        buffered, state.future = state.future, []
        for message in buffered:
            if message.view == target:
                self.receive(message)
            elif message.view > target:
                state.future.append(message)

    def origin_of(self, request: ClientRequest, /) -> Optional[ProtocolMessage]:
        """First pre-prepare of `request` as last proposed in an earlier view, if known."""
        digest = digest_of(request)
        latest: Optional[ProtocolMessage] = None
        for (view, _, sender), message in self.state.seen_pre_prepares.items():
            if view >= self.state.view or message.digest != digest:
                continue
            if sender != self.master_of(view) or (latest is not None and latest.view >= view):
                continue
            latest = message
        if latest is None:
            return None
        origin = latest.evidence[0] if latest.evidence else latest
        return origin if origin.seq >= self.seq_floor() else None

    def repropose(self):
        """Propose every pending request in the new view.

        A request seen in an earlier view goes back to its sequence number;
        the others follow from the highest sequence number in use.
        """
        state = self.state
        origins: Dict[RequestKey, Optional[ProtocolMessage]] = {}
        taken: Set[SeqNum] = set()
        for key in sorted(state.pending):
            origin = self.origin_of(state.pending[key])
            if origin is not None and origin.seq in taken:
                origin = None
            if origin is not None:
                taken.add(origin.seq)
                state.max_seq = max(state.max_seq, origin.seq)
            origins[key] = origin
        for key in sorted(state.pending):
            self.propose(state.pending[key], origin=origins[key])

    def forward_outcomes(self, previous: View, target: View, /):
        """Pass outcomes of the views just left to nodes that only learn by broadcast."""

    def valid_origin(self, message: ProtocolMessage, /):
        """Whether the pre-prepare carried by `message` is an authentic earlier proposal."""
        if len(message.evidence) != 1:
            return False
        origin = message.evidence[0]
        return (
            origin.kind is MessageKind.PRE_PREPARE
            and not origin.evidence
            and origin.view < message.view
            and origin.seq == message.seq
            and origin.digest == message.digest
            and origin.sender == self.master_of(origin.view)
            and self.keys.verify(origin)
        )

    # evidence

    def observe_pre_prepare(self, message: ProtocolMessage, /):
        """Remember the first pre-prepare per `(view, seq, sender)`.

        Returns:
            (bool): `True` if `message` conflicts with the remembered one.
        """
        slot_key = (message.view, message.seq, message.sender)
        seen = self.state.seen_pre_prepares.setdefault(slot_key, message)
        if seen.digest != message.digest:
            if isinstance(message.sender, int):
                self.record_evidence(message.view, message.sender, "equivocation")
            return True
        return False

    def check_evidence(self, evidence: Sequence[ProtocolMessage], /):
        """Compare pre-prepares forwarded in a view change against our own."""
        for message in evidence:
            if message.kind is not MessageKind.PRE_PREPARE or not self.keys.verify(message):
                continue
            self.observe_pre_prepare(message)

    def record_evidence(self, view: View, node: NodeId, reason: str, /):
        """Record objective misbehaviour of `node` in `view`, once."""
        if (view, node) not in self.state.evidence:
            logger.info(
                "node %s holds %s evidence against %s in view %s",
                self.state.id,
                reason,
                node,
                view,
            )
            self.state.evidence[(view, node)] = reason
