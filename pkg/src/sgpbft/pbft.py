"""PBFT.

The baseline three-phase protocol. A fault-free consensus on `n` nodes sends
`n - 1` pre-prepares, `(n - 1)²` prepares (the master does not prepare) and
`n (n - 1)` commits, `2n (n - 1)` protocol messages in total.
"""

# standard
from dataclasses import dataclass
import logging
from typing import Optional

# local
from sgpbft.client import Client, ClientState
from sgpbft.crypto.authenticator import KeyTable
from sgpbft.messages import MessageKind, NodeId, ProtocolMessage, Timeout, View
from sgpbft.replica import (
    Application,
    Event,
    Replica,
    ReplicaState,
    Slot,
    quorum_size,
    slot_label,
)
from sgpbft.utils import ConfigurationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PbftConfig:
    """Engine parameters.

    Raises:
        (ConfigurationError): If `n_nodes < 3f + 1` or a value is out of range.
    """

    n_nodes: int
    f: int
    timeout_ticks: int = 10

    def __post_init__(self):
        """Check the resilience bound."""
        if self.f < 0:
            raise ConfigurationError("`f` must be non-negative")
        if self.n_nodes < 3 * self.f + 1:
            raise ConfigurationError(f"PBFT needs n >= 3f + 1, got n={self.n_nodes} f={self.f}")
        if self.timeout_ticks < 1:
            raise ConfigurationError("`timeout_ticks` must be positive")

    @property
    def quorum(self):
        """Votes needed to prepare (with the pre-prepare), commit or change view."""
        return quorum_size(self.n_nodes, self.f)


class PbftReplica(Replica):
    """A PBFT node; every node votes and the master is `view mod n`."""

    def __init__(
        self,
        config: PbftConfig,
        state: ReplicaState,
        *,
        keys: KeyTable,
        app: Optional[Application] = None,
    ):
        """Bind `state` to its engine parameters."""
        super().__init__(state, f=config.f, keys=keys, app=app)
        self.config = config
        self._members = tuple(range(config.n_nodes))

    def members(self):
        """All nodes."""
        return self._members

    def master_of(self, view: View, /):
        """`view mod n`."""
        return view % self.config.n_nodes

    def dispatch(self, message: ProtocolMessage, /):
        """Route the three ordering phases."""
        if message.kind is MessageKind.PRE_PREPARE:
            return self.on_pre_prepare(message)
        if message.kind is MessageKind.PREPARE:
            return self.on_prepare(message)
        if message.kind is MessageKind.COMMIT:
            return self.on_commit(message)
        return f"unexpected {message.kind.label}"

    def on_prepared(self, slot: Slot, /):
        """Broadcast a commit once, counting our own."""
        pre_prepare = slot.pre_prepare
        assert pre_prepare is not None  # nosec B101
        commit = self.sign(
            ProtocolMessage(
                MessageKind.COMMIT,
                pre_prepare.view,
                pre_prepare.seq,
                pre_prepare.digest,
                self.state.id,
            )
        )
        slot.commits.setdefault(pre_prepare.digest, set()).add(self.state.id)
        self.send(commit, self.peers())
        self.check_committed(slot)

    def on_commit(self, message: ProtocolMessage, /):
        """Count a commit vote."""
        sender = message.sender
        if sender == self.state.id or sender not in self._members:
            return "commit from a non-member"
        slot = self.slot(message.view, message.seq)
        votes = slot.commits.setdefault(message.digest, set())
        if sender in votes:
            return "duplicate commit"
        votes.add(sender)
        self.check_committed(slot)
        return None

    def check_committed(self, slot: Slot, /):
        """Execute once prepared with a quorum of matching commits."""
        if not slot.prepared or slot.committed:
            return
        if len(slot.matching(slot.commits)) < self.quorum:
            return
        slot.committed = True
        self.execute(slot)

    def execute(self, slot: Slot, /):
        """Run the operation (or reuse an earlier result) and reply to the client."""
        pre_prepare = slot.pre_prepare
        assert pre_prepare is not None and pre_prepare.body is not None  # nosec B101
        request = pre_prepare.body
        result = self.state.executed.get(request.key)
        if result is None:
            result = self.app.execute(request)
            self.finish(request, result, *slot_label(pre_prepare))
        slot.executed = True
        slot.result = result
        reply = self.sign(
            ProtocolMessage(
                MessageKind.REPLY,
                pre_prepare.view,
                pre_prepare.seq,
                pre_prepare.digest,
                self.state.id,
                result=result,
            )
        )
        self.state.replies[request.key] = reply
        self.send(reply, [request.client])
        logger.debug("node %s executed seq %s", self.state.id, pre_prepare.seq)


def pbft_init(config: PbftConfig, id: NodeId, /):
    """Fresh replica state: view 0, empty log.

    Examples:
        >>> pbft_init(PbftConfig(n_nodes=4, f=1), 0).view
        0

    Raises:
        (ConfigurationError): If `id` is not a node of `config`.
    """
    if not 0 <= id < config.n_nodes:
        raise ConfigurationError(f"node {id} outside 0..{config.n_nodes - 1}")
    return ReplicaState(id=id)


def pbft_step(replica: PbftReplica, event: Event, /):
    """Advance `replica` by one delivered message or fired timer."""
    return replica.step(event)


def pbft_view_change(replica: PbftReplica, timeout: Timeout, /):
    """Handle an expired request timer, voting for the next view if still pending."""
    return replica.step(timeout)


def pbft_client_step(state: ClientState, reply: ProtocolMessage, /, *, f: int, now: int = 0):
    """Record a reply; complete at the first result with `2f + 1` distinct repliers.

    Examples:
        >>> from sgpbft.messages import ClientRequest
        >>> state = ClientState(ClientRequest(b"op", 0, "client-0"))
        >>> for node in (0, 1, 2):
        ...     reply = ProtocolMessage(MessageKind.REPLY, 0, 0, b"", node, result=b"R")
        ...     state = pbft_client_step(state, reply, f=1, now=7)
        >>> state.completed_at
        7
    """
    if not isinstance(reply.sender, int) or reply.result is None:
        return state
    voters = state.replies.setdefault(reply.result, set())
    voters.add(reply.sender)
    if state.completed_at is None and len(voters) >= 2 * f + 1:
        state.completed_at = now
        state.result = reply.result
        state.accepted = reply
    return state


class PbftClient(Client):
    """Client that waits for `2f + 1` matching replies."""

    def __init__(self, config: PbftConfig, keys: KeyTable, **kwargs: str):
        """Track requests for a PBFT group."""
        super().__init__(keys, **kwargs)
        self.config = config

    def targets(self):
        """Every node."""
        return tuple(range(self.config.n_nodes))

    def master(self):
        """Master of the latest view seen in a reply."""
        return self.view_hint % self.config.n_nodes

    def accept(self, state: ClientState, reply: ProtocolMessage, now: int, /):
        """Count the reply."""
        return pbft_client_step(state, reply, f=self.config.f, now=now)
