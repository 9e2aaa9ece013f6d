"""Client."""

# standard
from dataclasses import dataclass, field
import logging
from typing import Dict, Optional, Sequence, Set

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
    digest_of,
)

logger = logging.getLogger(__name__)

DEFAULT_CLIENT: ClientId = "client-0"


@dataclass
class ClientState:
    """Progress of one client request."""

    request: ClientRequest
    injected_at: int = 0
    replies: Dict[bytes, Set[NodeId]] = field(default_factory=dict)
    completed_at: Optional[int] = None
    result: Optional[bytes] = None
    accepted: Optional[ProtocolMessage] = None

    @property
    def completed(self):
        """Whether an agreed result has been accepted."""
        return self.completed_at is not None


class Client:
    """A client issuing requests and accepting replies.

    Timestamps are the client's own request counter, so `(c, t)` is unique
    within a scenario.
    """

    def __init__(self, keys: KeyTable, *, client_id: ClientId = DEFAULT_CLIENT):
        """Create a client that signs with its entry in `keys`."""
        self.id = client_id
        self.keys = keys
        self.view_hint = 0
        self.states: Dict[RequestKey, ClientState] = {}
        self.by_digest: Dict[Digest, RequestKey] = {}
        self.messages: Dict[RequestKey, ProtocolMessage] = {}
        self._timestamp = 0

    def targets(self) -> Sequence[NodeId]:
        """Nodes a request is broadcast to."""
        raise NotImplementedError

    def master(self) -> NodeId:
        """The node believed to be master."""
        raise NotImplementedError

    def accept(self, state: ClientState, reply: ProtocolMessage, now: int, /) -> ClientState:
        """Fold one authenticated reply into `state`."""
        raise NotImplementedError

    def issue(self, operation: bytes, now: int, /):
        """Create and sign the next request.

        Returns:
            (ProtocolMessage): The signed `REQUEST` message.
        """
        request = ClientRequest(operation, self._timestamp, self.id)
        self._timestamp += 1
        message = self.keys.sign(
            ProtocolMessage(
                MessageKind.REQUEST,
                self.view_hint,
                0,
                digest_of(request),
                self.id,
                body=request,
            )
        )
        self.states[request.key] = ClientState(request, injected_at=now)
        self.by_digest[message.digest] = request.key
        self.messages[request.key] = message
        return message

    def on_reply(self, message: ProtocolMessage, now: int, /):
        """Handle a delivered reply.

        Returns:
            (Optional[ClientState]): The request state if this reply completed it.
        """
        if message.kind is not MessageKind.REPLY or not self.keys.verify(message):
            return None
        key = self.by_digest.get(message.digest)
        if key is None:
            return None
        state = self.states[key]
        if state.completed:
            return None
        self.accept(state, message, now)
        if not state.completed:
            return None
        self.view_hint = max(self.view_hint, message.view)
        logger.debug("client %s accepted %s at %s", self.id, key, now)
        return state

    def retransmission(self, key: RequestKey, /):
        """The request to resend for `key`, or `None` once it completed."""
        state = self.states.get(key)
        if state is None or state.completed:
            return None
        return self.messages[key]

    @property
    def in_flight(self):
        """Number of issued requests still waiting for a result."""
        return sum(1 for state in self.states.values() if not state.completed)
