"""Faults.

Byzantine behaviours applied to an honest engine. A wrapped step runs the
honest transition unchanged and only rewrites the messages it emits, so the
faulty node's internal state always matches an honest twin fed the same
events.
"""

# standard
from dataclasses import dataclass, replace
import random
from typing import Any, Callable, Dict, List, Mapping, Union

# local
from sgpbft.crypto.authenticator import KeyTable
from sgpbft.messages import MessageKind, NodeId, ProtocolMessage, Send, Transition, digest_of
from sgpbft.replica import Event
from sgpbft.utils import ConfigurationError

Step = Callable[[Event], Transition]


@dataclass(frozen=True)
class Silent:
    """Emit nothing."""


@dataclass(frozen=True)
class EquivocatePrePrepare:
    """Split each pre-prepare: the real one to the first half, a forged one to the rest."""


@dataclass(frozen=True)
class WrongResult:
    """Flip every reported result."""


@dataclass(frozen=True)
class DelayAll:
    """Hold every outgoing message back by `ticks`."""

    ticks: int

    def __post_init__(self):
        """Reject negative delays."""
        if self.ticks < 0:
            raise ConfigurationError("`ticks` must be non-negative")


@dataclass(frozen=True)
class DropRate:
    """Drop each outgoing message independently with `probability`."""

    probability: float

    def __post_init__(self):
        """Reject probabilities outside [0, 1]."""
        if not 0.0 <= self.probability <= 1.0:
            raise ConfigurationError("`probability` must lie in [0, 1]")


Behavior = Union[Silent, EquivocatePrePrepare, WrongResult, DelayAll, DropRate]

_NAMES = {
    "silent": Silent,
    "equivocate_pre_prepare": EquivocatePrePrepare,
    "wrong_result": WrongResult,
    "delay_all": DelayAll,
    "drop_rate": DropRate,
}


@dataclass(frozen=True)
class FaultSpec:
    """A Byzantine behaviour pinned to one node."""

    node: NodeId
    behavior: Behavior

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], /):
        """Build from a config table such as `{node = 2, behavior = "delay_all", ticks = 5}`.

        Examples:
            >>> FaultSpec.from_mapping({"node": 1, "behavior": "drop_rate", "probability": 0.5})
            FaultSpec(node=1, behavior=DropRate(probability=0.5))

        Raises:
            (ConfigurationError): On an unknown behaviour or a bad parameter.
        """
        fields = dict(data)
        try:
            node = int(fields.pop("node"))
            kind = _NAMES[str(fields.pop("behavior"))]
        except KeyError as exp:
            raise ConfigurationError(f"bad fault entry {dict(data)!r}: unknown {exp}") from exp
        try:
            return cls(node, kind(**fields))
        except TypeError as exp:
            raise ConfigurationError(f"bad fault entry {dict(data)!r}: {exp}") from exp

    def to_mapping(self) -> Dict[str, Any]:
        """Inverse of `from_mapping`."""
        name = next(key for key, value in _NAMES.items() if isinstance(self.behavior, value))
        return {"node": self.node, "behavior": name, **vars(self.behavior)}


def flip(data: bytes, /):
    """Invert every byte; empty input becomes one `0xff` byte so it always changes.

    Examples:
        >>> flip(b"\\x00\\x0f"), flip(b"")
        (b'\\xff\\xf0', b'\\xff')
    """
    if not data:
        return b"\xff"
    return bytes(byte ^ 0xFF for byte in data)


def _equivocate(sends: List[Send], keys: KeyTable, /):
    totals: Dict[ProtocolMessage, int] = {}
    for send in sends:
        if send.message.kind is MessageKind.PRE_PREPARE:
            totals[send.message] = totals.get(send.message, 0) + 1
    positions: Dict[ProtocolMessage, int] = {}
    forged: Dict[ProtocolMessage, ProtocolMessage] = {}
    altered: List[Send] = []
    for send in sends:
        message = send.message
        if message not in totals or message.body is None:
            altered.append(send)
            continue
        position = positions.get(message, 0)
        positions[message] = position + 1
        if position < totals[message] // 2:
            altered.append(send)
            continue
        if message not in forged:
            body = replace(message.body, operation=flip(message.body.operation))
            forged[message] = keys.sign(
                replace(message, body=body, digest=digest_of(body), auth=b"")
            )
        altered.append(send._replace(message=forged[message]))
    return altered


def _wrong_result(sends: List[Send], keys: KeyTable, /):
    flipped: Dict[ProtocolMessage, ProtocolMessage] = {}
    altered: List[Send] = []
    for send in sends:
        message = send.message
        if message.result is None:
            altered.append(send)
            continue
        if message not in flipped:
            flipped[message] = keys.sign(replace(message, result=flip(message.result), auth=b""))
        altered.append(send._replace(message=flipped[message]))
    return altered


def wrap(step: Step, spec: FaultSpec, /, *, keys: KeyTable, seed: int = 0) -> Step:
    """Make `step` behave like the Byzantine node described by `spec`.

    Only the emitted sends change. A node that never proposes has no
    pre-prepare to equivocate, so `EquivocatePrePrepare` leaves it unchanged.
    """
    behavior = spec.behavior

    if isinstance(behavior, Silent):

        def alter(sends: List[Send]) -> List[Send]:
            return []

    elif isinstance(behavior, EquivocatePrePrepare):

        def alter(sends: List[Send]) -> List[Send]:
            return _equivocate(sends, keys)

    elif isinstance(behavior, WrongResult):

        def alter(sends: List[Send]) -> List[Send]:
            return _wrong_result(sends, keys)

    elif isinstance(behavior, DelayAll):
        ticks = behavior.ticks

        def alter(sends: List[Send]) -> List[Send]:
            return [send._replace(delay=send.delay + ticks) for send in sends]

    else:
        probability = behavior.probability
        rng = random.Random(f"sgpbft/drop/{seed}/{spec.node}")  # nosec B311

        def alter(sends: List[Send]) -> List[Send]:
            return [send for send in sends if rng.random() >= probability]

    def faulty(event: Event) -> Transition:
        transition = step(event)
        return transition._replace(sends=alter(transition.sends))

    return faulty
