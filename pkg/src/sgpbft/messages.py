"""Messages.

Shared protocol vocabulary: identifiers, client requests, protocol messages and
their canonical encoding.

The canonical encoding is a length-prefixed concatenation of the fields in
declaration order. Every field is framed as a 4-byte big-endian length followed
by its bytes, integers are 8-byte big-endian, senders carry a one-byte tag
(`n` for nodes, `c` for clients) and optional fields carry a one-byte presence
flag. Framing makes the encoding injective, so digests and authenticators are
reproducible bit-for-bit.
"""

# standard
from dataclasses import dataclass, replace
from enum import IntEnum
from functools import cached_property
from hashlib import sha256
from typing import List, NamedTuple, Optional, Tuple, Union

NodeId = int
View = int
SeqNum = int
ClientId = str
Sender = Union[NodeId, ClientId]
Digest = bytes
RequestKey = Tuple[ClientId, int]

DIGEST_SIZE = 32


class MessageKind(IntEnum):
    """Kinds of protocol message."""

    REQUEST = 0
    PRE_PREPARE = 1
    PREPARE = 2
    COMMIT = 3
    RESPONSE = 4
    RESULT_BROADCAST = 5
    REPLY = 6
    VIEW_CHANGE = 7

    @property
    def label(self):
        """Lower-case name used in reports."""
        return self.name.lower()


# kinds counted by the closed-form communication formulas
CONSENSUS_KINDS = frozenset(
    (MessageKind.PRE_PREPARE, MessageKind.PREPARE, MessageKind.COMMIT, MessageKind.RESPONSE)
)


def encode_fields(*fields: bytes):
    """Frame each field with a 4-byte length prefix.

    Examples:
        >>> encode_fields(b"ab", b"")
        b'\\x00\\x00\\x00\\x02ab\\x00\\x00\\x00\\x00'
    """
    return b"".join(len(field).to_bytes(4, "big") + field for field in fields)


def decode_fields(data: bytes, /):
    """Split a framed byte string back into its fields.

    Raises:
        (ValueError): If `data` is not a well-formed framing.
    """
    fields: List[bytes] = []
    offset = 0
    while offset < len(data):
        if offset + 4 > len(data):
            raise ValueError("Truncated field length")
        size = int.from_bytes(data[offset : offset + 4], "big")
        offset += 4
        if offset + size > len(data):
            raise ValueError("Truncated field body")
        fields.append(data[offset : offset + size])
        offset += size
    return fields


def encode_int(value: int, /):
    """Encode a non-negative integer as 8 big-endian bytes."""
    return value.to_bytes(8, "big")


def encode_sender(sender: Sender, /):
    """Encode a node or client identifier with its tag."""
    if isinstance(sender, int):
        return b"n" + encode_int(sender)
    return b"c" + sender.encode("utf-8")


@dataclass(frozen=True)
class ClientRequest:
    """A client operation `o` issued at client timestamp `t` by client `c`."""

    operation: bytes
    timestamp: int
    client: ClientId

    @property
    def key(self) -> RequestKey:
        """The `(c, t)` pair identifying this request within a scenario."""
        return (self.client, self.timestamp)

    @cached_property
    def encoded(self):
        """Canonical encoding."""
        return encode_fields(
            self.operation, encode_int(self.timestamp), self.client.encode("utf-8")
        )


def digest_of(request: ClientRequest, /) -> Digest:
    """Return the fixed-width digest of a request's canonical encoding.

    Examples:
        >>> r = ClientRequest(b"op", 0, "client-0")
        >>> digest_of(r) == digest_of(ClientRequest(b"op", 0, "client-0"))
        True
        >>> len(digest_of(r))
        32
    """
    return sha256(b"sgpbft/request" + request.encoded).digest()


def _optional(value: Optional[bytes], /):
    return b"\x00" if value is None else b"\x01" + value


@dataclass(frozen=True)
class ProtocolMessage:
    """A tagged protocol message.

    `view` is the view the message belongs to; for `VIEW_CHANGE` it is the
    view being proposed. `certificate` carries the responses backing a
    `RESULT_BROADCAST` or an SG-PBFT `REPLY`; on a `VIEW_CHANGE` it carries
    the result broadcasts the voter applied in the view it leaves.

    `evidence` on a `VIEW_CHANGE` lists the pre-prepares the voter logged in
    that view. On a `PRE_PREPARE` or `RESULT_BROADCAST` it holds at most the
    original pre-prepare of a re-proposed request. A `VIEW_CHANGE` body is the
    request whose timer expired.
    """

    kind: MessageKind
    view: View
    seq: SeqNum
    digest: Digest
    sender: Sender
    body: Optional[ClientRequest] = None
    result: Optional[bytes] = None
    certificate: Tuple["ProtocolMessage", ...] = ()
    evidence: Tuple["ProtocolMessage", ...] = ()
    auth: bytes = b""

    @cached_property
    def signing_bytes(self):
        """Canonical encoding of every field except `auth`."""
        return encode_fields(
            encode_int(int(self.kind)),
            encode_int(self.view),
            encode_int(self.seq),
            self.digest,
            encode_sender(self.sender),
            _optional(None if self.body is None else self.body.encoded),
            _optional(self.result),
            encode_fields(*(m.signing_bytes + m.auth for m in self.certificate)),
            encode_fields(*(m.signing_bytes + m.auth for m in self.evidence)),
        )

    def with_auth(self, tag: bytes, /):
        """Return a copy carrying the given authenticator."""
        return replace(self, auth=tag)


class Send(NamedTuple):
    """An outgoing message; `delay` is extra ticks added on top of the network latency."""

    dest: Sender
    message: ProtocolMessage
    delay: int = 0


class Timeout(NamedTuple):
    """A timer for request `key` armed while in `view`."""

    view: View
    key: RequestKey


class Transition(NamedTuple):
    """What one step produced: messages, timers to arm, and a drop reason if ignored."""

    sends: List[Send]
    timers: List[Timeout]
    dropped: Optional[str] = None
