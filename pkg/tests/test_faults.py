"""Test Faults."""

# standard
from typing import Any, Dict, List

# external
import pytest

# local
from sgpbft import (
    ConfigurationError,
    DelayAll,
    DropRate,
    EquivocatePrePrepare,
    FaultSpec,
    KeyTable,
    PbftConfig,
    PbftReplica,
    Silent,
    WrongResult,
)
from sgpbft.faults import flip, wrap
from sgpbft.messages import (
    ClientRequest,
    MessageKind,
    ProtocolMessage,
    Send,
    Timeout,
    Transition,
    digest_of,
)
from sgpbft.pbft import pbft_init
from sgpbft.replica import Event

keys = KeyTable.from_seed(0, range(4), ["client-0"])
request = ClientRequest(b"op", 0, "client-0")
pre_prepare = keys.sign(
    ProtocolMessage(MessageKind.PRE_PREPARE, 0, 0, digest_of(request), 0, body=request)
)
reply = keys.sign(ProtocolMessage(MessageKind.REPLY, 0, 0, digest_of(request), 0, result=b"R"))
timer = Timeout(0, request.key)


def _emitting(*messages: ProtocolMessage):
    def step(event: Event):
        return Transition([Send(dest, m) for m in messages for dest in (1, 2, 3)], [timer])

    return step


# ==> config entries <== #


@pytest.mark.parametrize(
    "entry, behavior",
    [
        ({"node": 1, "behavior": "silent"}, Silent()),
        ({"node": 1, "behavior": "equivocate_pre_prepare"}, EquivocatePrePrepare()),
        ({"node": 1, "behavior": "wrong_result"}, WrongResult()),
        ({"node": 1, "behavior": "delay_all", "ticks": 4}, DelayAll(4)),
        ({"node": 1, "behavior": "drop_rate", "probability": 0.25}, DropRate(0.25)),
    ],
)
def test_reads_fault_entry(entry: Dict[str, Any], behavior: object):
    """Test reads fault entry."""
    spec = FaultSpec.from_mapping(entry)
    assert spec == FaultSpec(1, behavior)  # type: ignore[arg-type]
    assert spec.to_mapping() == entry


@pytest.mark.parametrize(
    "entry",
    [
        {"behavior": "silent"},
        {"node": 1, "behavior": "nap"},
        {"node": 1},
        {"node": 1, "behavior": "silent", "ticks": 3},
        {"node": 1, "behavior": "delay_all"},
        {"node": 1, "behavior": "delay_all", "ticks": -1},
        {"node": 1, "behavior": "drop_rate", "probability": 1.5},
    ],
)
def test_raises_on_bad_fault_entry(entry: Dict[str, Any]):
    """Test raises on bad fault entry."""
    with pytest.raises(ConfigurationError):
        FaultSpec.from_mapping(entry)


# ==> behaviours <== #


def test_silent_emits_nothing_but_keeps_timers():
    """Test silent emits nothing but keeps timers."""
    step = wrap(_emitting(pre_prepare), FaultSpec(0, Silent()), keys=keys)
    transition = step(pre_prepare)
    assert transition.sends == [] and transition.timers == [timer]


def test_equivocation_splits_the_pre_prepare():
    """Test equivocation splits the pre-prepare."""
    step = wrap(_emitting(pre_prepare), FaultSpec(0, EquivocatePrePrepare()), keys=keys)
    sends = step(pre_prepare).sends
    assert [send.dest for send in sends] == [1, 2, 3]
    assert sends[0].message == pre_prepare
    forged = sends[1].message
    assert sends[2].message == forged
    assert forged.body is not None and forged.body.operation == flip(b"op")
    assert forged.digest == digest_of(forged.body) != pre_prepare.digest
    assert keys.verify(forged)


def test_equivocation_leaves_other_kinds():
    """Test equivocation leaves other kinds."""
    step = wrap(_emitting(reply), FaultSpec(0, EquivocatePrePrepare()), keys=keys)
    assert {send.message for send in step(reply).sends} == {reply}


def test_wrong_result_flips_and_resigns():
    """Test wrong result flips and resigns."""
    step = wrap(_emitting(reply, pre_prepare), FaultSpec(0, WrongResult()), keys=keys)
    sends = step(reply).sends
    flipped = {send.message for send in sends if send.message.kind is MessageKind.REPLY}
    (wrong,) = flipped
    assert wrong.result == flip(b"R") and keys.verify(wrong)
    assert [send.message for send in sends[3:]] == [pre_prepare] * 3


def test_delay_all_adds_ticks():
    """Test delay all adds ticks."""
    step = wrap(_emitting(reply), FaultSpec(0, DelayAll(5)), keys=keys)
    assert [send.delay for send in step(reply).sends] == [5, 5, 5]


@pytest.mark.parametrize("probability, kept", [(0.0, 3), (1.0, 0)])
def test_drop_rate_extremes(probability: float, kept: int):
    """Test drop rate extremes."""
    step = wrap(_emitting(reply), FaultSpec(0, DropRate(probability)), keys=keys)
    assert len(step(reply).sends) == kept


def test_drop_rate_follows_the_seed():
    """Test drop rate follows the seed."""

    def pattern(seed: int):
        step = wrap(_emitting(reply), FaultSpec(0, DropRate(0.5)), keys=keys, seed=seed)
        kept: List[int] = []
        for _ in range(50):
            kept.append(len(step(reply).sends))
        return kept

    assert pattern(1) == pattern(1)
    assert 0 < sum(pattern(1)) < 150


def test_faulty_state_matches_honest_twin():
    """Test faulty state matches honest twin."""
    config = PbftConfig(4, 1)
    honest = PbftReplica(config, pbft_init(config, 0), keys=keys)
    faulty = PbftReplica(config, pbft_init(config, 0), keys=keys)
    step = wrap(faulty.step, FaultSpec(0, Silent()), keys=keys)
    message = keys.sign(
        ProtocolMessage(MessageKind.REQUEST, 0, 0, digest_of(request), "client-0", body=request)
    )
    assert honest.step(message).sends
    assert step(message).sends == []
    assert faulty.state == honest.state


def test_flip_always_changes_bytes():
    """Test flip always changes bytes."""
    for data in (b"", b"\x00", b"ACCEPT"):
        assert flip(data) != data
