"""Authenticator.

Keyed-digest realization of the per-message signature: each sender holds a
secret key from the scenario key table and tags the canonical encoding of its
messages with HMAC-SHA256.
"""

# standard
from hashlib import sha256
import hmac
from typing import Dict, Iterable, Optional

# local
from sgpbft.messages import ProtocolMessage, Sender, encode_int, encode_sender

TAG_SIZE = 32


def sign(sender_key: bytes, message_bytes: bytes, /):
    """Return the authenticator tag of `message_bytes` under `sender_key`.

    Examples:
        >>> len(sign(b"k", b"m"))
        32
    """
    return hmac.digest(sender_key, message_bytes, "sha256")


def verify(sender_key: Optional[bytes], message_bytes: bytes, tag: bytes, /):
    """Return whether `tag` was produced by `sender_key` over exactly `message_bytes`.

    Never raises; an unknown key (`None`) or a malformed tag is a failure.

    Examples:
        >>> verify(b"k", b"m", sign(b"k", b"m"))
        True
        >>> verify(b"k", b"m2", sign(b"k", b"m"))
        False
        >>> verify(None, b"m", sign(b"k", b"m"))
        False
    """
    if sender_key is None or not isinstance(tag, bytes) or len(tag) != TAG_SIZE:
        return False
    try:
        return hmac.compare_digest(sign(sender_key, message_bytes), tag)
    except TypeError:
        return False


class KeyTable:
    """Scenario key table mapping every sender to its secret key."""

    def __init__(self, keys: Dict[Sender, bytes]):
        """Initialize from an explicit mapping."""
        self._keys = dict(keys)

    @classmethod
    def from_seed(cls, seed: int, nodes: Iterable[int], clients: Iterable[str] = ()):
        """Derive one key per node and client from the scenario seed."""
        prefix = b"sgpbft/key" + encode_int(seed)
        return cls(
            {
                sender: sha256(prefix + encode_sender(sender)).digest()
                for sender in (*nodes, *clients)
            }
        )

    def __contains__(self, sender: object):
        """Whether a sender is registered."""
        return sender in self._keys

    def key_of(self, sender: Sender, /):
        """Secret key of `sender`, or `None` when unregistered."""
        return self._keys.get(sender)

    def sign(self, message: ProtocolMessage, /):
        """Return `message` carrying its sender's authenticator.

        Raises:
            (KeyError): If the sender is not registered.
        """
        return message.with_auth(sign(self._keys[message.sender], message.signing_bytes))

    def verify(self, message: ProtocolMessage, /):
        """Whether `message` carries a valid authenticator from its claimed sender."""
        return verify(self._keys.get(message.sender), message.signing_bytes, message.auth)
